//! The experiment runner end to end on tiny workloads.

use std::path::Path;

use dmimo::harness::{run, Experiment, ExperimentConfig, RunOptions};

fn config(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)).unwrap()
}

#[test]
fn every_shipped_config_loads() {
    for exp in Experiment::ALL {
        config(&format!("{}.json", exp.name())).validate().unwrap();
    }
    config("default.json").validate().unwrap();
}

#[test]
fn experiment_names_round_trip() {
    for exp in Experiment::ALL {
        assert_eq!(exp.name().parse::<Experiment>().unwrap(), exp);
    }
    assert!("fig-9".parse::<Experiment>().is_err());
}

#[test]
fn unknown_config_keys_are_rejected() {
    let mut value: serde_json::Value = serde_json::to_value(config("default.json")).unwrap();
    value["system"]["antenna_count"] = 4.into();
    assert!(ExperimentConfig::from_json_str(&value.to_string()).is_err());
}

#[test]
fn a_run_writes_data_plot_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let options = RunOptions { seed: 9, trials: 1, paper_scale: false };
    let files = run(Experiment::ScheduleCompare, &config("schedule-compare.json"), &options, dir.path()).unwrap();

    let csv = std::fs::read_to_string(&files.csv).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("seed,build,users"));
    assert!(csv.lines().count() > 1);
    assert!(std::fs::read_to_string(&files.plot).unwrap().contains("schedule-compare.csv"));
    assert!(files.timing.as_ref().unwrap().exists());

    let manifest: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&files.manifest).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["experiment"], "schedule-compare");
    assert_eq!(manifest["outputs"].as_array().unwrap().len(), 3);
}

#[test]
fn paper_scale_switches_to_the_full_array() {
    let cfg = config("default.json");
    let options = RunOptions { seed: 0, trials: 1, paper_scale: true };
    assert_eq!(options.system(&cfg).num_antennas(), 100);
}

#[test]
fn monte_carlo_experiments_refuse_tiny_trial_counts() {
    let dir = tempfile::tempdir().unwrap();
    let options = RunOptions { seed: 0, trials: 5, paper_scale: false };
    assert!(run(Experiment::NmseSweep, &config("nmse-sweep.json"), &options, dir.path()).is_err());
}
