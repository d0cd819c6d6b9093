//! Budgeted model selection.
//!
//! Candidate models are bandit arms. An experiment spends a fixed number of
//! metered evaluation calls, scores models with a use-case weighted reward
//! over target accuracy, size and complexity, and reports a ranking with the
//! compute saved relative to evaluating every model on every sample.

pub mod bandit;
pub mod baselines;
pub mod comparison;
pub mod fixtures;
pub mod oracle;
mod par;
pub mod reasoning;
pub mod reporting;
pub mod repository;
pub mod reward;
pub mod rng;

pub use bandit::{
    rank_arms, run_experiment, run_experiment_observed, update_arm, ArmState, BanditError, ExperimentConfig,
    ExperimentOutcome, PullRecord, RankedArm, RewardModel, Strategy,
};
pub use baselines::{benchmark_select, brute_force_select, BaselineMethod, BaselineReport};
pub use oracle::{
    make_synthetic_zoo, DatasetManifest, EvaluationBackend, EvaluationOutcome, MeterReading, MeteredOracle,
    OracleError, SyntheticModelSpec,
};
pub use reasoning::{suggest_weights, Reasoner, WeightSuggestion};
pub use reporting::{aggregate_runs, compute_savings, export_report, ExperimentReport, ExportFormat};
pub use repository::{compute_extents, load_repository, ModelCard, Repository};
pub use reward::{compute_reward, log_normalize, RewardExtents, WeightProfile};
