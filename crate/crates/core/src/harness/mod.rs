//! Experiment runner and acceptance suite.

pub mod acceptance;
pub mod experiment;

pub use acceptance::{run_acceptance_suite, run_criterion, AcceptanceOptions, AcceptanceStatus, CriterionResult};
pub use experiment::{
    run_experiment, Aggregate, Band, EstimatorKind, ExperimentConfig, ExperimentReport, TrialRecord,
};
