//! Conflict-graph scheduling: correlation factors, a plain DSatur coloring,
//! the requirement-aware scheduler and the exhaustive optimum.

use dmimo::optimizer::ao::Instance;
use dmimo::scheduler::{dsatur_color, exhaustive_schedule, schedule_users, ConflictGraph};
use dmimo::{Allocation, Scenario, Schedule, SystemConfig};

fn main() -> dmimo::Result<()> {
    let mut cfg = SystemConfig::desk_scale();
    cfg.num_users = 6;
    cfg.pilot_length = 5;
    cfg.num_subbands = 3;
    cfg.subband_capacity = 2;
    cfg.cluster_size = 3;
    cfg.geometry.azimuth_spread_deg = 10.0;
    cfg.geometry.user_elevation_deg = [25.0, 45.0];
    cfg.geometry.satellite_elevation_offsets_deg = vec![0.0, 10.0, 25.0, 40.0];
    let inst = Instance::new(Scenario::generate(cfg)?, 11)?;
    let k = inst.scenario.num_users();

    println!("correlation factors:\n{:.3}", inst.rho);
    let mean = inst.rho.iter().sum::<f64>() / (k * k) as f64;
    let coloring = dsatur_color(&ConflictGraph::from_threshold(&inst.rho, mean), 2);
    println!("DSatur at threshold {mean:.3}: colors {:?}", coloring.colors);

    let c = &inst.scenario.config;
    let base = Allocation::equal(&inst.scenario, Schedule::single_band(k));
    let req = &inst.scenario.rate_requirement;
    let alg = schedule_users(&inst.model, &base, &inst.rho, c.num_subbands, c.subband_capacity, req)?;
    let best = exhaustive_schedule(&inst.model, &base, c.num_subbands, c.subband_capacity, req)?;
    println!("everyone on one band: {:.4e} bit/s", inst.model.sum_rate(&base));
    println!("scheduler:  {:?} -> {:.4e} bit/s", alg.schedule.groups(), alg.sum_rate);
    println!("exhaustive: {:?} -> {:.4e} bit/s", best.schedule.groups(), best.sum_rate);
    Ok(())
}
