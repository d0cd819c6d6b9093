use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rand::seq::SliceRandom;

use super::strategy::{select_arm_epsilon_greedy, select_arm_greedy, select_arm_thompson, select_arm_ucb};
use super::{ArmState, BanditError, ExperimentConfig, PullRecord, RankedArm, RewardModel, Strategy};
use crate::oracle::EvaluationBackend;
use crate::reporting::{build_report, ExperimentReport};
use crate::repository::{ModelCard, Repository};
use crate::reward::{RewardError, RewardExtents, WeightProfile};
use crate::rng::{stream_rng, PERMUTATION_STREAM_BASE, STRATEGY_STREAM};

/// A finished run: the report plus the evidence behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub trace: Vec<PullRecord>,
    pub states: Vec<ArmState>,
}

pub fn run_experiment(
    config: &ExperimentConfig,
    repo: &Repository,
    oracle: &dyn EvaluationBackend,
) -> Result<ExperimentOutcome, BanditError> {
    run_experiment_observed(config, repo, oracle, &mut |_| {})
}

/// Runs the warm start and the strategy loop until the budget is spent or
/// every arm is exhausted. `observer` sees each pull as it completes.
pub fn run_experiment_observed(
    config: &ExperimentConfig,
    repo: &Repository,
    oracle: &dyn EvaluationBackend,
    observer: &mut dyn FnMut(&PullRecord),
) -> Result<ExperimentOutcome, BanditError> {
    config.validate(repo.len())?;
    let n_samples = config.manifest.n_samples;
    if oracle.n_samples() != n_samples {
        return Err(BanditError::Config(format!(
            "oracle serves {} samples but the manifest declares {n_samples}",
            oracle.n_samples()
        )));
    }
    if let Some(card) = repo.models().iter().find(|c| !oracle.covers(&c.id)) {
        return Err(BanditError::Config(format!("oracle does not cover model {}", card.id)));
    }

    let model = RewardModel::for_repository(repo, &config.weights)?;
    let schedules: Vec<Vec<usize>> = (0..repo.len())
        .map(|arm| {
            let mut order: Vec<usize> = (0..n_samples).collect();
            order.shuffle(&mut stream_rng(config.seed, PERMUTATION_STREAM_BASE + arm as u64));
            order
        })
        .collect();
    let mut states: Vec<ArmState> = repo
        .models()
        .iter()
        .map(|c| ArmState::new(c.id.clone(), config.prior_alpha, config.prior_beta))
        .collect();
    let mut rng = stream_rng(config.seed, STRATEGY_STREAM);
    let mut trace: Vec<PullRecord> = Vec::with_capacity(config.budget.min((repo.len() * n_samples) as u64) as usize);
    let mut sink = TraceSink::open(config.trace_path.as_deref())?;

    let mut pull = |arm: usize, states: &mut [ArmState], trace: &mut Vec<PullRecord>| -> Result<(), BanditError> {
        let state = &mut states[arm];
        let sample = schedules[arm][state.next_sample_cursor];
        let outcome = match oracle.evaluate(&state.model_id, sample) {
            Ok(outcome) => outcome,
            Err(source) => {
                sink.flush()?;
                return Err(BanditError::Oracle {
                    source,
                    partial_trace: std::mem::take(trace),
                });
            }
        };
        state.apply(&outcome)?;
        let record = PullRecord {
            step: trace.len() as u64,
            arm_index: arm,
            reward: model.estimate(arm, state),
            outcome,
        };
        sink.write(&record)?;
        observer(&record);
        trace.push(record);
        Ok(())
    };

    for arm in 0..repo.len() {
        pull(arm, &mut states, &mut trace)?;
    }
    while (trace.len() as u64) < config.budget && states.iter().any(|s| !s.is_exhausted(n_samples)) {
        let arm = match config.strategy {
            Strategy::Greedy => select_arm_greedy(&states, &model.estimates(&states), n_samples)?,
            Strategy::EpsilonGreedy => {
                select_arm_epsilon_greedy(&states, &model.estimates(&states), n_samples, config.epsilon, &mut rng)?
            }
            Strategy::Ucb => select_arm_ucb(
                &states,
                &model.estimates(&states),
                n_samples,
                trace.len() as u64,
                config.ucb_c,
            )?,
            Strategy::Thompson => select_arm_thompson(&states, &model, n_samples, &mut rng)?,
        };
        pull(arm, &mut states, &mut trace)?;
    }
    sink.flush()?;

    let ranking = rank_with_model(&states, repo.models(), &model);
    let mut report = build_report(config, repo, ranking, &trace).map_err(|e| BanditError::Config(e.to_string()))?;
    report.trace_ref = config.trace_path.as_ref().map(|p| p.display().to_string());
    Ok(ExperimentOutcome { report, trace, states })
}

/// Orders arms by posterior-mean reward (descending), then by pulls
/// (descending), then by arm index.
pub fn rank_arms(
    states: &[ArmState],
    cards: &[ModelCard],
    weights: &WeightProfile,
    extents: &RewardExtents,
) -> Result<Vec<RankedArm>, RewardError> {
    let model = RewardModel::new(cards, weights, extents)?;
    Ok(rank_with_model(states, cards, &model))
}

pub(crate) fn rank_with_model(states: &[ArmState], cards: &[ModelCard], model: &RewardModel) -> Vec<RankedArm> {
    let mut ranking: Vec<RankedArm> = states
        .iter()
        .enumerate()
        .map(|(arm, state)| RankedArm {
            arm_index: arm,
            model_id: state.model_id.clone(),
            posterior_mean_reward: model.estimate(arm, state),
            posterior_mean_accuracy: state.posterior_mean(),
            pulls: state.pulls,
            successes: state.successes,
            size_mb: cards[arm].size_mb,
            complexity_mmac: cards[arm].complexity_mmac,
        })
        .collect();
    ranking.sort_by(|a, b| {
        b.posterior_mean_reward
            .total_cmp(&a.posterior_mean_reward)
            .then(b.pulls.cmp(&a.pulls))
            .then(a.arm_index.cmp(&b.arm_index))
    });
    ranking
}

struct TraceSink {
    path: String,
    writer: Option<BufWriter<File>>,
}

impl TraceSink {
    fn open(path: Option<&Path>) -> Result<Self, BanditError> {
        let Some(path) = path else {
            return Ok(Self {
                path: String::new(),
                writer: None,
            });
        };
        let display = path.display().to_string();
        let file = File::create(path).map_err(|e| BanditError::Trace {
            path: display.clone(),
            message: e.to_string(),
        })?;
        Ok(Self {
            path: display,
            writer: Some(BufWriter::new(file)),
        })
    }

    fn write(&mut self, record: &PullRecord) -> Result<(), BanditError> {
        let Some(writer) = self.writer.as_mut() else {
            return Ok(());
        };
        let line = serde_json::to_string(record).expect("pull records serialize");
        writeln!(writer, "{line}").map_err(|e| BanditError::Trace {
            path: self.path.clone(),
            message: e.to_string(),
        })
    }

    fn flush(&mut self) -> Result<(), BanditError> {
        match self.writer.as_mut() {
            Some(writer) => writer.flush().map_err(|e| BanditError::Trace {
                path: self.path.clone(),
                message: e.to_string(),
            }),
            None => Ok(()),
        }
    }
}
