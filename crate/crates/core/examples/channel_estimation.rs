//! MMSE estimation error against the Rician factor: closed form next to a
//! Monte Carlo estimate over the serving links.

use dmimo::montecarlo::serving_link_error_mc;
use dmimo::{EstimatorBank, Scenario, SystemConfig};

fn main() -> dmimo::Result<()> {
    let base = Scenario::generate(SystemConfig::desk_scale())?;
    println!("{:>8} {:>12} {:>10} {:>10}", "K", "MSE", "NMSE", "NMSE (MC)");
    for rician in [1.0, 5.0, 20.0, 100.0, 1e3] {
        let sc = base.with_rician(rician);
        let bank = EstimatorBank::new(&sc)?;
        let links: Vec<(usize, usize)> = (0..sc.num_users()).flat_map(|k| sc.serving(k).iter().map(move |&m| (m, k))).collect();
        let n = links.len() as f64;
        let mse = links.iter().map(|&(m, k)| bank.mse(m, k)).sum::<f64>() / n;
        let nmse = links.iter().map(|&(m, k)| bank.nmse(m, k)).sum::<dmimo::Result<f64>>()? / n;
        let mc = serving_link_error_mc(&sc, &bank, 2000, 1)?;
        println!("{rician:>8} {mse:>12.4e} {nmse:>10.5} {:>10.5}", mc.nmse);
    }
    Ok(())
}
