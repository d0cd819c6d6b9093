//! Experiment records and their state machine.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{DateTime, Utc};
use greenrunner_core::bandit::{DEFAULT_EPSILON, DEFAULT_PRIOR, DEFAULT_UCB_C};
use greenrunner_core::{DatasetManifest, ExperimentConfig, ExperimentReport, Repository, Strategy, WeightProfile, WeightSuggestion};
use serde::{Deserialize, Serialize};
use uuid::Uuid;

pub const RECORD_VERSION: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentState {
    Draft,
    Staged,
    Running,
    Complete,
    Failed,
}

impl ExperimentState {
    pub const ALL: [ExperimentState; 5] = [
        ExperimentState::Draft,
        ExperimentState::Staged,
        ExperimentState::Running,
        ExperimentState::Complete,
        ExperimentState::Failed,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            ExperimentState::Draft => "draft",
            ExperimentState::Staged => "staged",
            ExperimentState::Running => "running",
            ExperimentState::Complete => "complete",
            ExperimentState::Failed => "failed",
        }
    }

    /// The only legal edges of the record lifecycle.
    pub fn can_transition_to(self, next: ExperimentState) -> bool {
        use ExperimentState::*;
        matches!(
            (self, next),
            (Draft, Staged) | (Staged, Staged) | (Staged, Running) | (Running, Complete) | (Running, Failed)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(self, ExperimentState::Complete | ExperimentState::Failed)
    }
}

impl fmt::Display for ExperimentState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("illegal transition {from} -> {to}")]
pub struct IllegalTransition {
    pub from: ExperimentState,
    pub to: ExperimentState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionEntry {
    pub from: ExperimentState,
    pub to: ExperimentState,
    pub at: DateTime<Utc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

/// Bandit settings chosen at setup time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSetup {
    pub strategy: Strategy,
    pub budget: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_ucb_c")]
    pub ucb_c: f64,
    #[serde(default = "default_prior")]
    pub prior_alpha: f64,
    #[serde(default = "default_prior")]
    pub prior_beta: f64,
    /// Also run the benchmark and brute-force baselines and attach them to the report.
    #[serde(default)]
    pub compare_baselines: bool,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

fn default_ucb_c() -> f64 {
    DEFAULT_UCB_C
}

fn default_prior() -> f64 {
    DEFAULT_PRIOR
}

impl RunSetup {
    pub fn new(strategy: Strategy, budget: u64) -> Self {
        Self {
            strategy,
            budget,
            seed: 0,
            epsilon: DEFAULT_EPSILON,
            ucb_c: DEFAULT_UCB_C,
            prior_alpha: DEFAULT_PRIOR,
            prior_beta: DEFAULT_PRIOR,
            compare_baselines: false,
        }
    }

    pub fn config(&self, weights: WeightProfile, manifest: DatasetManifest) -> ExperimentConfig {
        let mut config = ExperimentConfig::new(self.strategy, self.budget, weights, self.seed, manifest);
        config.epsilon = self.epsilon;
        config.ucb_c = self.ucb_c;
        config.prior_alpha = self.prior_alpha;
        config.prior_beta = self.prior_beta;
        config
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Progress {
    pub calls_spent: u64,
    pub budget: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub version: u64,
    pub id: Uuid,
    pub state: ExperimentState,
    pub repository: Repository,
    pub manifest: DatasetManifest,
    pub use_case: String,
    pub setup: RunSetup,
    /// Weights the run will use; set by staging and by edits.
    pub weights: Option<WeightProfile>,
    /// Latent accuracy per model when evaluation is simulated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic_truth: Option<BTreeMap<String, f64>>,
    pub suggestion: Option<WeightSuggestion>,
    /// Earlier suggestions, oldest first.
    #[serde(default)]
    pub suggestion_history: Vec<WeightSuggestion>,
    pub report: Option<ExperimentReport>,
    /// Why the run failed.
    pub diagnostic: Option<String>,
    /// Last staging failure, cleared by a successful stage.
    pub annotation: Option<String>,
    pub progress: Progress,
    pub transitions: Vec<TransitionEntry>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl ExperimentRecord {
    pub fn new_draft(
        repository: Repository,
        manifest: DatasetManifest,
        use_case: String,
        setup: RunSetup,
        synthetic_truth: Option<BTreeMap<String, f64>>,
    ) -> Self {
        let now = Utc::now();
        Self {
            version: RECORD_VERSION,
            id: Uuid::new_v4(),
            state: ExperimentState::Draft,
            repository,
            manifest,
            use_case,
            progress: Progress {
                calls_spent: 0,
                budget: setup.budget,
            },
            setup,
            weights: None,
            synthetic_truth,
            suggestion: None,
            suggestion_history: Vec::new(),
            report: None,
            diagnostic: None,
            annotation: None,
            transitions: Vec::new(),
            created_at: now,
            updated_at: now,
        }
    }

    /// Moves to `next`, recording the edge. Illegal edges leave the record untouched.
    pub fn transition(&mut self, next: ExperimentState, note: Option<String>) -> Result<(), IllegalTransition> {
        if !self.state.can_transition_to(next) {
            return Err(IllegalTransition {
                from: self.state,
                to: next,
            });
        }
        let at = Utc::now();
        self.transitions.push(TransitionEntry {
            from: self.state,
            to: next,
            at,
            note,
        });
        self.state = next;
        self.updated_at = at;
        Ok(())
    }

    /// Structural checks a stored record must always satisfy.
    pub fn check_invariants(&self) -> Result<(), String> {
        if self.report.is_some() != (self.state == ExperimentState::Complete) {
            return Err(format!("report presence does not match state {}", self.state));
        }
        if (self.state == ExperimentState::Failed) != self.diagnostic.is_some() {
            return Err(format!("diagnostic presence does not match state {}", self.state));
        }
        let mut state = ExperimentState::Draft;
        for t in &self.transitions {
            if t.from != state || !t.from.can_transition_to(t.to) {
                return Err(format!("bad history edge {} -> {}", t.from, t.to));
            }
            state = t.to;
        }
        if state != self.state {
            return Err(format!("history ends in {state} but record is {}", self.state));
        }
        if matches!(self.state, ExperimentState::Staged | ExperimentState::Running | ExperimentState::Complete)
            && self.weights.is_none()
        {
            return Err("weights missing after staging".into());
        }
        Ok(())
    }
}
