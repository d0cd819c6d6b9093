//! Budgeted best-arm selection over the candidate repository.
//!
//! Each pull evaluates one fresh target sample for one arm. Correctness feeds
//! a Beta-Bernoulli posterior over the arm's target accuracy; estimates used
//! for exploitation and for the final ranking are posterior-mean accuracies
//! mapped through the reward function, with each arm's size and complexity
//! penalties held fixed.

mod engine;
mod strategy;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::{DatasetManifest, EvaluationOutcome, OracleError};
use crate::repository::{ModelCard, Repository};
use crate::reward::{PenaltyTerms, RewardError, RewardExtents, WeightProfile};

pub use engine::{rank_arms, run_experiment, run_experiment_observed, ExperimentOutcome};
pub use strategy::{
    select_arm_epsilon_greedy, select_arm_greedy, select_arm_thompson, select_arm_ucb,
};

pub const DEFAULT_EPSILON: f64 = 0.1;
pub const DEFAULT_UCB_C: f64 = 1.0;
pub const DEFAULT_PRIOR: f64 = 1.0;

#[derive(Debug, Error)]
pub enum BanditError {
    #[error("invalid experiment configuration: {0}")]
    Config(String),
    #[error("every arm has exhausted its samples")]
    AllExhausted,
    #[error("outcome for model {got} applied to arm {expected}")]
    MismatchedModel { expected: String, got: String },
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error("evaluation failed after {} pulls: {source}", partial_trace.len())]
    Oracle {
        source: OracleError,
        partial_trace: Vec<PullRecord>,
    },
    #[error("trace output {path}: {message}")]
    Trace { path: String, message: String },
}

impl BanditError {
    /// Pulls completed before the run aborted, when the abort came from the oracle.
    pub fn partial_trace(&self) -> &[PullRecord] {
        match self {
            BanditError::Oracle { partial_trace, .. } => partial_trace,
            _ => &[],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    EpsilonGreedy,
    Ucb,
    Thompson,
    /// Pure exploitation of posterior-mean estimates; the reference policy that
    /// `epsilon = 0` and `ucb_c = 0` reduce to.
    Greedy,
}

impl Strategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Strategy::EpsilonGreedy => "epsilon_greedy",
            Strategy::Ucb => "ucb",
            Strategy::Thompson => "thompson",
            Strategy::Greedy => "greedy",
        }
    }
}

impl std::fmt::Display for Strategy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "epsilon" | "epsilon_greedy" | "epsilon-greedy" => Ok(Strategy::EpsilonGreedy),
            "ucb" | "ucb1" => Ok(Strategy::Ucb),
            "thompson" => Ok(Strategy::Thompson),
            "greedy" => Ok(Strategy::Greedy),
            other => Err(format!("unknown strategy `{other}` (expected epsilon, ucb or thompson)")),
        }
    }
}

/// Everything that determines a run, apart from the repository itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub strategy: Strategy,
    /// Maximum number of distinct evaluation calls.
    pub budget: u64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_ucb_c")]
    pub ucb_c: f64,
    #[serde(default = "default_prior")]
    pub prior_alpha: f64,
    #[serde(default = "default_prior")]
    pub prior_beta: f64,
    pub weights: WeightProfile,
    pub seed: u64,
    pub manifest: DatasetManifest,
    /// Line-delimited JSON pull trace destination.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<PathBuf>,
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

impl ExperimentConfig {
    pub fn new(strategy: Strategy, budget: u64, weights: WeightProfile, seed: u64, manifest: DatasetManifest) -> Self {
        Self {
            strategy,
            budget,
            epsilon: DEFAULT_EPSILON,
            ucb_c: DEFAULT_UCB_C,
            prior_alpha: DEFAULT_PRIOR,
            prior_beta: DEFAULT_PRIOR,
            weights,
            seed,
            manifest,
            trace_path: None,
        }
    }

    pub fn validate(&self, n_arms: usize) -> Result<(), BanditError> {
        if self.budget < n_arms as u64 {
            return Err(BanditError::Config(format!(
                "budget {} is smaller than the {n_arms} arms needed for the warm start",
                self.budget
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(BanditError::Config(format!("epsilon {} outside [0, 1]", self.epsilon)));
        }
        if !self.ucb_c.is_finite() || self.ucb_c < 0.0 {
            return Err(BanditError::Config(format!("ucb_c {} must be non-negative", self.ucb_c)));
        }
        for (name, prior) in [("prior_alpha", self.prior_alpha), ("prior_beta", self.prior_beta)] {
            if !prior.is_finite() || prior <= 0.0 {
                return Err(BanditError::Config(format!("{name} {prior} must be positive")));
            }
        }
        self.weights
            .validate()
            .map_err(|e| BanditError::Config(e.to_string()))?;
        self.manifest
            .validate()
            .map_err(|e| BanditError::Config(e.to_string()))?;
        Ok(())
    }
}

/// Per-arm evidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmState {
    pub model_id: String,
    pub pulls: u64,
    pub successes: u64,
    pub alpha: f64,
    pub beta: f64,
    /// Position in this arm's sample permutation; always equal to `pulls`.
    pub next_sample_cursor: usize,
    pub prior_alpha: f64,
    pub prior_beta: f64,
}

impl ArmState {
    pub fn new(model_id: impl Into<String>, prior_alpha: f64, prior_beta: f64) -> Self {
        Self {
            model_id: model_id.into(),
            pulls: 0,
            successes: 0,
            alpha: prior_alpha,
            beta: prior_beta,
            next_sample_cursor: 0,
            prior_alpha,
            prior_beta,
        }
    }

    /// State as if `successes` of `pulls` evaluations had been correct.
    pub fn with_counts(model_id: impl Into<String>, prior_alpha: f64, prior_beta: f64, pulls: u64, successes: u64) -> Self {
        assert!(successes <= pulls, "successes exceed pulls");
        let mut state = Self::new(model_id, prior_alpha, prior_beta);
        state.pulls = pulls;
        state.successes = successes;
        state.next_sample_cursor = pulls as usize;
        state.refresh_posterior();
        state
    }

    pub fn failures(&self) -> u64 {
        self.pulls - self.successes
    }

    pub fn posterior_mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }

    pub fn empirical_accuracy(&self) -> Option<f64> {
        (self.pulls > 0).then(|| self.successes as f64 / self.pulls as f64)
    }

    pub fn is_exhausted(&self, n_samples: usize) -> bool {
        self.next_sample_cursor >= n_samples
    }

    /// Conjugate update with one evaluation outcome.
    pub fn apply(&mut self, outcome: &EvaluationOutcome) -> Result<(), BanditError> {
        if outcome.model_id != self.model_id {
            return Err(BanditError::MismatchedModel {
                expected: self.model_id.clone(),
                got: outcome.model_id.clone(),
            });
        }
        self.pulls += 1;
        if outcome.correct {
            self.successes += 1;
        }
        self.next_sample_cursor += 1;
        self.refresh_posterior();
        Ok(())
    }

    // Recomputed from counts so the conjugacy identity holds exactly.
    fn refresh_posterior(&mut self) {
        self.alpha = self.prior_alpha + self.successes as f64;
        self.beta = self.prior_beta + self.failures() as f64;
    }
}

/// Returns `state` updated with `outcome`.
pub fn update_arm(state: &ArmState, outcome: &EvaluationOutcome) -> Result<ArmState, BanditError> {
    let mut next = state.clone();
    next.apply(outcome)?;
    Ok(next)
}

/// One step of the experiment trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PullRecord {
    pub step: u64,
    pub arm_index: usize,
    pub outcome: EvaluationOutcome,
    /// Posterior-mean reward of the arm after this pull.
    pub reward: f64,
}

/// Per-arm reward evaluation with penalties precomputed.
#[derive(Debug, Clone)]
pub struct RewardModel {
    terms: Vec<PenaltyTerms>,
    weights: WeightProfile,
}

impl RewardModel {
    pub fn new(cards: &[ModelCard], weights: &WeightProfile, extents: &RewardExtents) -> Result<Self, RewardError> {
        let terms = cards
            .iter()
            .map(|card| PenaltyTerms::for_card(card, extents))
            .collect::<Result<_, _>>()?;
        Ok(Self {
            terms,
            weights: weights.clone(),
        })
    }

    pub fn for_repository(repo: &Repository, weights: &WeightProfile) -> Result<Self, RewardError> {
        Self::new(repo.models(), weights, repo.extents())
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn reward(&self, arm: usize, accuracy: f64) -> f64 {
        self.terms[arm].reward(accuracy, &self.weights)
    }

    /// Posterior-mean accuracy of `state` through the reward function.
    pub fn estimate(&self, arm: usize, state: &ArmState) -> f64 {
        self.reward(arm, state.posterior_mean())
    }

    pub fn estimates(&self, states: &[ArmState]) -> Vec<f64> {
        states
            .iter()
            .enumerate()
            .map(|(arm, state)| self.estimate(arm, state))
            .collect()
    }
}

/// A row of the final ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedArm {
    pub arm_index: usize,
    pub model_id: String,
    pub posterior_mean_reward: f64,
    pub posterior_mean_accuracy: f64,
    pub pulls: u64,
    pub successes: u64,
    pub size_mb: f64,
    pub complexity_mmac: f64,
}

impl RankedArm {
    pub fn empirical_accuracy(&self) -> f64 {
        if self.pulls == 0 {
            0.0
        } else {
            self.successes as f64 / self.pulls as f64
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(id: &str, correct: bool) -> EvaluationOutcome {
        EvaluationOutcome {
            model_id: id.into(),
            sample_index: 0,
            correct,
            mmac_spent: 1.0,
        }
    }

    #[test]
    fn conjugate_updates() {
        let prior = ArmState::new("a", 1.0, 1.0);
        let one = update_arm(&prior, &outcome("a", true)).unwrap();
        assert_eq!((one.alpha, one.beta), (2.0, 1.0));
        let two = update_arm(&one, &outcome("a", false)).unwrap();
        assert_eq!((two.alpha, two.beta), (2.0, 2.0));
        assert_eq!(two.next_sample_cursor, 2);
    }

    #[test]
    fn thirty_outcomes_with_eighteen_correct() {
        let mut state = ArmState::new("a", 1.0, 1.0);
        for i in 0..30 {
            state.apply(&outcome("a", i < 18)).unwrap();
        }
        assert_eq!((state.alpha, state.beta), (19.0, 13.0));
        assert_eq!((state.pulls, state.successes), (30, 18));
    }

    #[test]
    fn rejects_foreign_outcome() {
        let state = ArmState::new("a", 1.0, 1.0);
        assert!(matches!(
            update_arm(&state, &outcome("b", true)),
            Err(BanditError::MismatchedModel { .. })
        ));
    }

    #[test]
    fn strategy_names_parse() {
        for s in ["epsilon", "ucb", "thompson", "greedy"] {
            let parsed: Strategy = s.parse().unwrap();
            assert!(parsed.as_str().starts_with(s));
        }
        assert!("softmax".parse::<Strategy>().is_err());
    }

    #[test]
    fn config_validation() {
        let manifest = DatasetManifest::new("t", 10, 0);
        let mut config = ExperimentConfig::new(Strategy::Ucb, 5, WeightProfile::accuracy_only(), 0, manifest);
        assert!(config.validate(5).is_ok());
        assert!(matches!(config.validate(6), Err(BanditError::Config(_))));
        config.epsilon = 1.5;
        assert!(config.validate(5).is_err());
        config.epsilon = 0.0;
        config.prior_beta = 0.0;
        assert!(config.validate(5).is_err());
    }
}
