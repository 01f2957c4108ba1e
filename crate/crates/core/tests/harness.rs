use symnorm::estimator::{EstimatorConfig, MmcInput};
use symnorm::harness::acceptance::{run_acceptance_suite, run_criterion, AcceptanceOptions, STATUS_FILE};
use symnorm::harness::experiment::{run_experiment, EstimatorKind, ExperimentConfig, CSV_COLUMNS};
use symnorm::{LevelConstants, NormSpec, StreamSpec};

const SCHEMA: &str = include_str!("../schemas/experiment_report.schema.json");
const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.json");

fn small_config(trials: usize) -> ExperimentConfig {
    ExperimentConfig {
        name: "small".into(),
        seed: 11,
        trials,
        norm: NormSpec::lp(2.0),
        stream: Some(StreamSpec::random_turnstile(256, 400, 9, 0)),
        stream_file: None,
        n: None,
        estimator: EstimatorKind::OnePass(EstimatorConfig::new(0.2, MmcInput::bound(1.0))),
        lab_targets: Some(symnorm::LabTargets {
            repetitions: 40,
            width: 128,
            depth: 5,
            block: 1,
            table_beta: 0.06,
            table_eps: Some(0.004),
            occupancy_divisor: Some(17.0),
        }),
        accept: None,
        oracle: true,
    }
}

fn csv_bytes(cfg: &ExperimentConfig) -> Vec<u8> {
    let report = run_experiment(cfg).unwrap();
    let mut buf = Vec::new();
    report.write_csv(&mut buf).unwrap();
    buf
}

#[test]
fn zero_trials_echo_the_config() {
    let cfg = small_config(0);
    let report = run_experiment(&cfg).unwrap();
    assert!(report.records.is_empty());
    assert_eq!(report.config, cfg);
    assert_eq!(report.aggregate.trials, 0);
    assert_eq!(report.aggregate.success_rate, None);
}

#[test]
fn reruns_give_identical_csv() {
    let cfg = small_config(6);
    let first = csv_bytes(&cfg);
    assert_eq!(first, csv_bytes(&cfg));
    let text = String::from_utf8(first).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
    assert_eq!(text.lines().count(), 7);

    let mut other = cfg.clone();
    other.seed += 1;
    assert_ne!(csv_bytes(&other), text.into_bytes());
}

#[test]
fn records_come_back_in_trial_order() {
    let report = run_experiment(&small_config(8)).unwrap();
    let order: Vec<usize> = report.records.iter().map(|r| r.trial).collect();
    assert_eq!(order, (0..8).collect::<Vec<_>>());
    for r in &report.records {
        assert_eq!(r.ratio, r.exact.map(|x| r.estimate / x));
    }
}

#[test]
fn reports_match_the_schema() {
    let schema: serde_json::Value = serde_json::from_str(SCHEMA).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    for trials in [0, 3] {
        let report = run_experiment(&small_config(trials)).unwrap();
        let value: serde_json::Value = serde_json::from_str(&report.to_json().unwrap()).unwrap();
        let errors: Vec<String> = validator.iter_errors(&value).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{errors:?}");
    }
    let mut bad: serde_json::Value = serde_json::from_str(&run_experiment(&small_config(1)).unwrap().to_json().unwrap()).unwrap();
    bad["records"][0]["estimate"] = serde_json::json!("big");
    assert!(!validator.is_valid(&bad));
}

#[test]
fn malformed_configs_are_rejected() {
    assert!(ExperimentConfig::from_json(r#"{"trials": 1}"#).is_err());
    let mut cfg = small_config(1);
    cfg.stream = None;
    assert!(run_experiment(&cfg).is_err());
    cfg.stream_file = Some("whatever.txt".into());
    assert!(run_experiment(&cfg).is_err(), "a stream file needs n");
}

#[test]
fn oracle_is_capped() {
    let mut cfg = small_config(1);
    cfg.stream = Some(StreamSpec::random_turnstile((1 << 20) + 1, 10, 3, 0));
    assert!(run_experiment(&cfg).is_err());
}

#[test]
fn shipped_default_config_succeeds() {
    let cfg = ExperimentConfig::from_json(DEFAULT_CONFIG).unwrap();
    assert_eq!(cfg.trials, 50);
    let report = run_experiment(&cfg).unwrap();
    let rate = report.aggregate.success_rate.unwrap();
    assert!(rate >= 0.9, "success rate {rate}");
}

#[test]
fn zeroed_repetitions_fail_level_recovery() {
    let opts = AcceptanceOptions {
        quick: true,
        seed: 0,
        constants: Some(LevelConstants {
            c_r: 0.0,
            ..LevelConstants::default()
        }),
    };
    let r = run_criterion(4, &opts).unwrap();
    assert!(!r.passed, "{}", r.line());
}

#[test]
fn quick_suite_is_marked_smoke() {
    let dir = tempfile::tempdir().unwrap();
    let opts = AcceptanceOptions {
        quick: true,
        seed: 0,
        constants: None,
    };
    let (status, path) = run_acceptance_suite(dir.path(), &opts).unwrap();
    assert_eq!(status.mode, "smoke");
    assert_eq!(path, dir.path().join(STATUS_FILE));
    let written: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(written["mode"], "smoke");
    assert_eq!(written["criteria"].as_array().unwrap().len(), 10);
}
