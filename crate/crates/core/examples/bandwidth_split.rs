//! Splitting the bandwidth between sub-bands: each band's rate is concave in
//! its width, so the optimum equalizes marginal rates above the floors the
//! requirements impose.

use dmimo::optimizer::bandwidth::{split_bandwidth, RateCurve};

fn main() -> dmimo::Result<()> {
    // band 0 holds two weak users, band 1 one strong user
    let curves = vec![
        vec![RateCurve { a: 3.0, b: 1.0, c: 0.5 }, RateCurve { a: 2.0, b: 1.0, c: 0.2 }],
        vec![RateCurve { a: 40.0, b: 1.0, c: 0.0 }],
    ];
    let total = 4.0;
    let value = |x: &[f64]| -> f64 { curves.iter().zip(x).map(|(band, &x)| band.iter().map(|f| f.value(x)).sum::<f64>()).sum() };

    let free = split_bandwidth(&curves, &[vec![0.0, 0.0], vec![0.0]], total)?;
    println!("equal split  {:?}: {:.4}", [2.0, 2.0], value(&[2.0, 2.0]));
    println!("optimal      {:.4?}: {:.4} ({} iterations)", free.bandwidth, free.sum_rate, free.iterations);

    // the second user of band 0 needs 2 units of rate
    let floored = split_bandwidth(&curves, &[vec![0.0, 2.0], vec![0.0]], total)?;
    println!("with a floor {:.4?}: {:.4}", floored.bandwidth, floored.sum_rate);
    Ok(())
}
