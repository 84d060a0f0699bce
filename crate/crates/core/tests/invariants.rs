//! Randomized invariants across the public API.

use dmimo::linalg::{min_eigenvalue, trace};
use dmimo::optimizer::bandwidth::{split_bandwidth, RateCurve};
use dmimo::scenario::{CorrelationModel, PerUser};
use dmimo::scheduler::{count_partitions, for_each_partition};
use dmimo::{Allocation, EstimatorBank, RateModel, Scenario, Schedule, SystemConfig};
use proptest::prelude::*;

fn small_config(seed: u64, users: usize, pilots: usize) -> SystemConfig {
    let mut cfg = SystemConfig::desk_scale();
    cfg.antennas_x = 2;
    cfg.antennas_y = 3;
    cfg.num_users = users;
    cfg.pilot_length = pilots.min(users);
    cfg.num_subbands = 2.min(users);
    cfg.subband_capacity = users;
    cfg.correlation_model = CorrelationModel::Exponential { r: 0.4 };
    cfg.rng_seed = seed;
    cfg
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn estimate_and_error_covariances_split_the_covariance(seed in 0u64..1000, users in 1usize..5, pilots in 1usize..4) {
        let sc = Scenario::generate(small_config(seed, users, pilots)).unwrap();
        let bank = EstimatorBank::new(&sc).unwrap();
        for k in 0..sc.num_users() {
            for m in 0..sc.num_satellites() {
                let s = bank.stats(m, k);
                let gap = (&s.est_cov + &s.err_cov - &s.r).norm();
                prop_assert!(gap <= 1e-10 * s.r.norm().max(1e-300));
                prop_assert!(min_eigenvalue(&s.err_cov) >= -1e-12 * s.r.norm());
                prop_assert!(trace(&s.err_cov).re <= trace(&s.r).re * (1.0 + 1e-12));
                let nmse = bank.nmse(m, k).unwrap();
                prop_assert!((0.0..=1.0).contains(&nmse));
            }
        }
    }

    #[test]
    fn bound_ignores_the_scale_of_the_weights(seed in 0u64..1000, scale in 0.01f64..100.0) {
        let sc = Scenario::generate(small_config(seed, 4, 2)).unwrap();
        let bank = EstimatorBank::new(&sc).unwrap();
        let model = RateModel::new(&sc, &bank);
        let alloc = Allocation::equal(&sc, Schedule::single_band(4));
        let mut scaled = alloc.clone();
        scaled.weights.iter_mut().flatten().for_each(|w| *w *= scale);
        for k in 0..4 {
            let (a, b) = (model.sinr(&alloc, k).unwrap(), model.sinr(&scaled, k).unwrap());
            prop_assert!((a - b).abs() <= 1e-9 * a);
        }
    }

    #[test]
    fn more_power_for_others_never_helps(seed in 0u64..1000, boost in 1.0f64..10.0) {
        let mut cfg = small_config(seed, 3, 3);
        cfg.max_power = PerUser::Uniform(0.2);
        let sc = Scenario::generate(cfg).unwrap();
        let bank = EstimatorBank::new(&sc).unwrap();
        let model = RateModel::new(&sc, &bank);
        let alloc = Allocation::equal(&sc, Schedule::single_band(3));
        let mut louder = alloc.clone();
        louder.power[1] *= boost;
        louder.power[2] *= boost;
        prop_assert!(model.sinr(&louder, 0).unwrap() <= model.sinr(&alloc, 0).unwrap() * (1.0 + 1e-12));
    }

    #[test]
    fn bandwidth_split_uses_everything_and_keeps_floors(
        params in prop::collection::vec((0.01f64..100.0, 0.01f64..10.0, 0.0f64..10.0), 2..6),
        floor_share in 0.0f64..0.5,
    ) {
        let curves: Vec<Vec<RateCurve>> = params.iter().map(|&(a, b, c)| vec![RateCurve { a, b, c }]).collect();
        let total = 10.0;
        // a floor reachable with a small slice of the band
        let floors: Vec<Vec<f64>> = curves.iter().map(|c| vec![c[0].value(floor_share * total / curves.len() as f64)]).collect();
        let out = split_bandwidth(&curves, &floors, total).unwrap();
        let used: f64 = out.bandwidth.iter().sum();
        prop_assert!((used - total).abs() <= 1e-9 * total);
        for (band, floor) in curves.iter().zip(&floors) {
            let i = curves.iter().position(|c| std::ptr::eq(c, band)).unwrap();
            prop_assert!(band[0].value(out.bandwidth[i]) >= floor[0] * (1.0 - 1e-9));
        }
    }

    #[test]
    fn enumerated_partitions_respect_limits(n in 1usize..7, bands in 1usize..4, cap in 1usize..5) {
        let mut seen = 0u64;
        for_each_partition(n, bands, cap, |labels| {
            seen += 1;
            let schedule = Schedule::from_colors(&labels.iter().map(|&l| Some(l)).collect::<Vec<_>>());
            assert!(schedule.validate(bands, cap).is_ok());
        });
        prop_assert_eq!(seen, count_partitions(n, bands, cap));
    }
}

#[test]
fn partition_counts_match_stirling_numbers() {
    // S(5,1..=3) = 1, 15, 25 with no capacity limit
    assert_eq!(count_partitions(5, 1, 5), 1);
    assert_eq!(count_partitions(5, 2, 5), 1 + 15);
    assert_eq!(count_partitions(5, 3, 5), 1 + 15 + 25);
    // two blocks of at most two users out of four: {2,2} splits only
    assert_eq!(count_partitions(4, 2, 2), 3);
}

#[test]
fn schedule_validator_rejects_bad_partitions() {
    let s = Schedule::from_groups(vec![vec![0, 1, 2], vec![3]], 4).unwrap();
    assert!(s.validate(2, 3).is_ok());
    assert!(s.validate(1, 3).is_err());
    assert!(s.validate(2, 2).is_err());
    let partial = Schedule::from_groups(vec![vec![0, 1]], 3).unwrap();
    assert!(partial.validate(2, 3).is_err());
    assert!(Schedule::from_groups(vec![vec![0, 1], vec![1]], 2).is_err());
}
