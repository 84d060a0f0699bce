//! Joint power and combining-weight control for a fixed schedule: the
//! feasibility margin first, then the sum-rate iterations.

use dmimo::optimizer::ao::Instance;
use dmimo::optimizer::power::{feasibility_check, optimize_power_weights, PowerOptions, WeightMode};
use dmimo::scenario::PerUser;
use dmimo::scheduler::schedule_users;
use dmimo::{Allocation, Scenario, Schedule, SystemConfig};

fn main() -> dmimo::Result<()> {
    let mut cfg = SystemConfig::desk_scale();
    cfg.num_users = 6;
    cfg.num_subbands = 3;
    cfg.pilot_length = 4;
    cfg.cluster_size = 3;
    cfg.geometry.azimuth_spread_deg = 10.0;
    cfg.rate_requirement = PerUser::Uniform(2e4);
    let inst = Instance::new(Scenario::generate(cfg)?, 4)?;
    let (sc, c) = (&inst.scenario, &inst.scenario.config);

    let base = Allocation::equal(sc, Schedule::single_band(sc.num_users()));
    let schedule = schedule_users(&inst.model, &base, &inst.rho, c.num_subbands, c.subband_capacity, &sc.rate_requirement)?.schedule;
    let start = base.reschedule(schedule, c.total_bandwidth);

    let feas = feasibility_check(sc, &inst.model, &start, &PowerOptions::default())?;
    println!("requirements can be scaled by {:.3} and still met", feas.phi);

    for mode in [WeightMode::Fixed, WeightMode::Optimize] {
        let options = PowerOptions { weights: mode, ..PowerOptions::default() };
        let out = optimize_power_weights(sc, &inst.model, &start, &options)?;
        let trace: Vec<String> = out.objective.iter().map(|v| format!("{:.4e}", v)).collect();
        println!("{mode:?}: {} iterations, sum rate {}", out.iterations, trace.join(" -> "));
        println!("  powers {:?}", out.allocation.power.iter().map(|p| format!("{p:.3}")).collect::<Vec<_>>());
    }
    Ok(())
}
