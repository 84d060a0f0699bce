//! The complete design loop (schedule, power and weights, bandwidth) against
//! the two fixed-weight reference designs on a few seeded instances.

use dmimo::optimizer::ao::{alternating_optimize, benchmark_channel_weights, benchmark_equal_weights, AoOptions, Instance};
use dmimo::scenario::PerUser;
use dmimo::{Scenario, SystemConfig};

fn main() -> dmimo::Result<()> {
    let options = AoOptions::default();
    for seed in 0..3 {
        let mut cfg = SystemConfig::desk_scale();
        cfg.num_users = 6;
        cfg.num_subbands = 4;
        cfg.pilot_length = 4;
        cfg.cluster_size = 3;
        cfg.subband_capacity = 3;
        cfg.rate_requirement = PerUser::Uniform(1e4);
        cfg.geometry.azimuth_spread_deg = 10.0;
        cfg.geometry.user_elevation_deg = [25.0, 45.0];
        cfg.geometry.satellite_elevation_offsets_deg = vec![0.0, 10.0, 25.0, 40.0];
        cfg.rng_seed = seed;
        let inst = Instance::new(Scenario::generate(cfg)?, seed)?;

        let ao = alternating_optimize(&inst, &options)?;
        let eq = benchmark_equal_weights(&inst, &options)?;
        let ch = benchmark_channel_weights(&inst, &options)?;
        println!(
            "seed {seed}: proposed {:.4e} ({} rounds, bands {:?}), equal weights {:.4e}, channel weights {:.4e}",
            ao.sum_rate,
            ao.rounds,
            ao.allocation.schedule.groups(),
            eq.sum_rate,
            ch.sum_rate
        );
        for r in &ao.history {
            println!("    round {} {:?}: {:.4e}{}", r.round, r.stage, r.sum_rate, if r.accepted { "" } else { " (kept previous)" });
        }
    }
    Ok(())
}
