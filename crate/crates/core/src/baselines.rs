//! Comparison methods: selection from model-card metrics alone, and
//! exhaustive evaluation of every model on every target sample.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandit::RewardModel;
use crate::oracle::{EvaluationBackend, OracleError};
use crate::par::parallel_map;
use crate::repository::Repository;
use crate::reward::{RewardError, WeightProfile};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error(transparent)]
    Reward(#[from] RewardError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("oracle does not cover model {0}")]
    Uncovered(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMethod {
    Benchmark,
    BruteForce,
}

impl BaselineMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            BaselineMethod::Benchmark => "benchmark",
            BaselineMethod::BruteForce => "brute_force",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredModel {
    pub model_id: String,
    pub reward: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub method: BaselineMethod,
    pub selected_model_id: String,
    pub selected_arm_index: usize,
    /// Measured on every target sample.
    pub selected_model_target_accuracy: f64,
    pub eval_calls: u64,
    pub mmacs_spent: f64,
    /// Reward of every model, in repository order. For the benchmark method
    /// these use benchmark accuracy; for brute force, measured target accuracy.
    pub full_scores: Vec<ScoredModel>,
}

fn first_argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn check_coverage(repo: &Repository, oracle: &dyn EvaluationBackend) -> Result<(), BaselineError> {
    match repo.models().iter().find(|c| !oracle.covers(&c.id)) {
        Some(card) => Err(BaselineError::Uncovered(card.id.clone())),
        None => Ok(()),
    }
}

fn count_correct(oracle: &dyn EvaluationBackend, model_id: &str) -> Result<u64, OracleError> {
    let mut correct = 0;
    for sample in 0..oracle.n_samples() {
        if oracle.evaluate(model_id, sample)?.correct {
            correct += 1;
        }
    }
    Ok(correct)
}

/// Picks the best model by its card's benchmark accuracy, then spends
/// `n_samples` calls measuring that one model on the target set.
pub fn benchmark_select(
    repo: &Repository,
    weights: &WeightProfile,
    oracle: &dyn EvaluationBackend,
) -> Result<BaselineReport, BaselineError> {
    check_coverage(repo, oracle)?;
    let model = RewardModel::for_repository(repo, weights)?;
    let scores: Vec<f64> = repo
        .models()
        .iter()
        .enumerate()
        .map(|(arm, card)| model.reward(arm, card.benchmark_accuracy))
        .collect();
    let selected = first_argmax(&scores);
    let card = repo.card(selected);
    let n = oracle.n_samples();
    let correct = count_correct(oracle, &card.id)?;
    Ok(BaselineReport {
        method: BaselineMethod::Benchmark,
        selected_model_id: card.id.clone(),
        selected_arm_index: selected,
        selected_model_target_accuracy: correct as f64 / n as f64,
        eval_calls: n as u64,
        mmacs_spent: n as f64 * card.complexity_mmac,
        full_scores: scored(repo, &scores),
    })
}

/// Evaluates every model on every sample and picks the best measured reward.
/// Models are spread over `threads` workers; the result does not depend on it.
pub fn brute_force_select(
    repo: &Repository,
    weights: &WeightProfile,
    oracle: &dyn EvaluationBackend,
    threads: usize,
) -> Result<BaselineReport, BaselineError> {
    check_coverage(repo, oracle)?;
    let model = RewardModel::for_repository(repo, weights)?;
    let n = oracle.n_samples();
    let counts = parallel_map(repo.len(), threads, |arm| count_correct(oracle, &repo.card(arm).id));
    let mut accuracies = Vec::with_capacity(repo.len());
    for count in counts {
        accuracies.push(count? as f64 / n as f64);
    }
    let scores: Vec<f64> = accuracies
        .iter()
        .enumerate()
        .map(|(arm, &acc)| model.reward(arm, acc))
        .collect();
    let selected = first_argmax(&scores);
    Ok(BaselineReport {
        method: BaselineMethod::BruteForce,
        selected_model_id: repo.card(selected).id.clone(),
        selected_arm_index: selected,
        selected_model_target_accuracy: accuracies[selected],
        eval_calls: (repo.len() * n) as u64,
        mmacs_spent: repo.models().iter().map(|c| n as f64 * c.complexity_mmac).sum(),
        full_scores: scored(repo, &scores),
    })
}

fn scored(repo: &Repository, scores: &[f64]) -> Vec<ScoredModel> {
    repo.models()
        .iter()
        .zip(scores)
        .map(|(card, &reward)| ScoredModel {
            model_id: card.id.clone(),
            reward,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{make_synthetic_zoo, DatasetManifest, SyntheticModelSpec};
    use crate::repository::ModelCard;

    fn specs(rows: &[(&str, f64, f64, f64, f64)]) -> Vec<SyntheticModelSpec> {
        rows.iter()
            .map(|&(id, size, cplx, bench, p)| SyntheticModelSpec::new(ModelCard::new(id, size, cplx, bench), p))
            .collect()
    }

    fn fixture(specs: &[SyntheticModelSpec], n: usize) -> (Repository, crate::oracle::MeteredOracle<crate::oracle::SyntheticZoo>) {
        let repo = Repository::new(specs.iter().map(|s| s.card.clone()).collect()).unwrap();
        (repo, make_synthetic_zoo(specs, &DatasetManifest::new("t", n, 3)).unwrap())
    }

    #[test]
    fn benchmark_picks_highest_card_accuracy() {
        let s = specs(&[("best", 10.0, 10.0, 0.80, 0.2), ("other", 20.0, 20.0, 0.75, 0.6)]);
        let (repo, oracle) = fixture(&s, 20);
        let r = benchmark_select(&repo, &WeightProfile::accuracy_only(), &oracle).unwrap();
        assert_eq!(r.selected_model_id, "best");
        assert_eq!(r.eval_calls, 20);
        assert_eq!(oracle.meter_read().calls, 20);
        assert_eq!(r.mmacs_spent, 200.0);
    }

    #[test]
    fn size_only_weights_pick_smallest() {
        let s = specs(&[("big", 100.0, 10.0, 0.9, 0.5), ("small", 5.0, 10.0, 0.1, 0.5), ("mid", 50.0, 10.0, 0.5, 0.5)]);
        let (repo, oracle) = fixture(&s, 10);
        let w = WeightProfile::new(0.0, 1.0, 0.0);
        assert_eq!(benchmark_select(&repo, &w, &oracle).unwrap().selected_model_id, "small");
        let b = brute_force_select(&repo, &w, &oracle, 2).unwrap();
        assert_eq!(b.selected_model_id, "small");
        assert_eq!(b.eval_calls, 30);
        assert_eq!(b.full_scores.len(), 3);
    }

    #[test]
    fn brute_force_selects_best_measured_model() {
        let s = specs(&[("a", 10.0, 10.0, 0.5, 0.3), ("b", 10.0, 10.0, 0.5, 0.9), ("c", 10.0, 10.0, 0.5, 0.5)]);
        let (repo, oracle) = fixture(&s, 200);
        let r = brute_force_select(&repo, &WeightProfile::accuracy_only(), &oracle, 1).unwrap();
        assert_eq!(r.selected_model_id, "b");
        assert_eq!(oracle.meter_read().calls, 600);
    }

    #[test]
    fn thread_count_does_not_change_result() {
        let s = specs(&[("a", 1.0, 5.0, 0.5, 0.3), ("b", 9.0, 50.0, 0.5, 0.6), ("c", 3.0, 7.0, 0.5, 0.5), ("d", 2.0, 70.0, 0.5, 0.55)]);
        let w = WeightProfile::new(0.63, 0.25, 0.21);
        let reference = {
            let (repo, oracle) = fixture(&s, 100);
            brute_force_select(&repo, &w, &oracle, 1).unwrap()
        };
        for threads in [2, 3, 8] {
            let (repo, oracle) = fixture(&s, 100);
            assert_eq!(brute_force_select(&repo, &w, &oracle, threads).unwrap(), reference);
        }
    }

    #[test]
    fn oracle_failure_is_reported() {
        let s = specs(&[("a", 1.0, 5.0, 0.5, 0.3), ("b", 9.0, 50.0, 0.5, 0.6)]);
        let (repo, oracle) = fixture(&s, 10);
        let failing = crate::oracle::FailingOracle::new(oracle, 5);
        assert!(matches!(
            brute_force_select(&repo, &WeightProfile::accuracy_only(), &failing, 2),
            Err(BaselineError::Oracle(_))
        ));
    }
}
