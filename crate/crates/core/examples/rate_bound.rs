//! The closed-form rate bound against the simulated ergodic rate, per user,
//! with random pilot sharing and everyone on one sub-band.

use dmimo::montecarlo::monte_carlo_report;
use dmimo::{Allocation, EstimatorBank, RateModel, Scenario, Schedule, SystemConfig};

fn main() -> dmimo::Result<()> {
    let sc = Scenario::generate(SystemConfig::desk_scale())?;
    let bank = EstimatorBank::new(&sc)?;
    let model = RateModel::new(&sc, &bank);
    let alloc = Allocation::equal(&sc, Schedule::single_band(sc.num_users()));

    let report = monte_carlo_report(&sc, &bank, &model, &alloc, 5000, 3)?;
    println!("{:>4} {:>12} {:>12} {:>10}", "user", "bound", "ergodic", "SE");
    for u in &report.users {
        println!("{:>4} {:>12.0} {:>12.0} {:>10.0}", u.user, u.rate_lb, u.ergodic, u.ergodic_se);
    }
    let worst = report.terms.iter().map(|t| t.z_score()).fold(0.0, f64::max);
    println!("{} bound terms checked by simulation, largest deviation {worst:.2} SE", report.terms.len());
    Ok(())
}
