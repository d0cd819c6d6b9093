//! Side-by-side comparison of card-based selection, exhaustive evaluation and
//! repeated bandit runs, one row per method.
//!
//! Delimited header: `method,reward,most_selected_model,avg_target_accuracy,
//! avg_size_mb,avg_complexity_mmac,avg_eval_calls`.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bandit::{run_experiment, BanditError, ExperimentConfig, Strategy};
use crate::baselines::{benchmark_select, brute_force_select, BaselineError, BaselineReport};
use crate::oracle::{DatasetManifest, EvaluationBackend, OracleError};
use crate::par::{order_free_mean, parallel_map};
use crate::reporting::{aggregate_runs, ExperimentReport, ExportFormat, ReportError, RunSummary};
use crate::repository::Repository;
use crate::reward::WeightProfile;
use crate::rng::derive_seed;

pub const COMPARISON_VERSION: u64 = 1;

pub const COMPARISON_TABLE_HEADER: [&str; 7] = [
    "method",
    "reward",
    "most_selected_model",
    "avg_target_accuracy",
    "avg_size_mb",
    "avg_complexity_mmac",
    "avg_eval_calls",
];

#[derive(Debug, Error)]
pub enum ComparisonError {
    #[error("iterations must be at least 1")]
    NoIterations,
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Bandit(#[from] BanditError),
    #[error(transparent)]
    Report(#[from] ReportError),
}

/// Builds a fresh metered backend for a (possibly resampled) manifest.
pub type OracleFactory<'a> = dyn Fn(&DatasetManifest) -> Result<Box<dyn EvaluationBackend>, OracleError> + Sync + 'a;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSettings {
    pub weights: WeightProfile,
    pub strategy: Strategy,
    pub budget: u64,
    pub iterations: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub ucb_c: f64,
    /// Redraw the target sample set for every iteration.
    pub resample: bool,
    pub threads: usize,
}

impl ComparisonSettings {
    pub fn new(weights: WeightProfile, budget: u64, iterations: usize, seed: u64) -> Self {
        Self {
            weights,
            strategy: Strategy::Thompson,
            budget,
            iterations,
            seed,
            epsilon: crate::bandit::DEFAULT_EPSILON,
            ucb_c: crate::bandit::DEFAULT_UCB_C,
            resample: false,
            threads: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub reward: String,
    pub most_selected_model: String,
    pub avg_target_accuracy: f64,
    pub avg_size_mb: f64,
    pub avg_complexity_mmac: f64,
    pub avg_eval_calls: f64,
    pub runs: usize,
    /// Runs in which each model was the pick.
    pub selection_frequency: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub version: u64,
    pub settings: ComparisonSettings,
    pub rows: Vec<ComparisonRow>,
    pub bandit_summary: RunSummary,
}

/// Seed of bandit iteration `k`.
pub fn iteration_seed(base_seed: u64, k: usize) -> u64 {
    derive_seed(base_seed, k as u64)
}

fn iteration_manifest(manifest: &DatasetManifest, settings: &ComparisonSettings, k: usize) -> DatasetManifest {
    if settings.resample {
        manifest.with_seed(derive_seed(manifest.seed, k as u64))
    } else {
        manifest.clone()
    }
}

pub fn run_comparison(
    repo: &Repository,
    manifest: &DatasetManifest,
    settings: &ComparisonSettings,
    oracle_factory: &OracleFactory<'_>,
) -> Result<Comparison, ComparisonError> {
    if settings.iterations == 0 {
        return Err(ComparisonError::NoIterations);
    }
    let baseline_rounds = if settings.resample { settings.iterations } else { 1 };
    let baselines = parallel_map(baseline_rounds, settings.threads, |k| {
        let manifest = iteration_manifest(manifest, settings, k);
        let bench = benchmark_select(repo, &settings.weights, &*oracle_factory(&manifest)?)?;
        let brute = brute_force_select(repo, &settings.weights, &*oracle_factory(&manifest)?, 1)?;
        Ok::<_, ComparisonError>((bench, brute))
    })
    .into_iter()
    .collect::<Result<Vec<_>, _>>()?;

    let reports = parallel_map(settings.iterations, settings.threads, |k| {
        let manifest = iteration_manifest(manifest, settings, k);
        let mut config = ExperimentConfig::new(
            settings.strategy,
            settings.budget,
            settings.weights.clone(),
            iteration_seed(settings.seed, k),
            manifest.clone(),
        );
        config.epsilon = settings.epsilon;
        config.ucb_c = settings.ucb_c;
        let oracle = oracle_factory(&manifest)?;
        Ok::<_, ComparisonError>(run_experiment(&config, repo, &*oracle)?.report)
    })
    .into_iter()
    .collect::<Result<Vec<ExperimentReport>, _>>()?;

    let reward = settings.weights.label();
    let (bench, brute): (Vec<_>, Vec<_>) = baselines.into_iter().unzip();
    let summary = aggregate_runs(&reports)?;
    let rows = vec![
        baseline_row("benchmark", &reward, repo, &bench),
        baseline_row("brute_force", &reward, repo, &brute),
        ComparisonRow {
            method: format!("bandit_{}", settings.strategy),
            reward,
            most_selected_model: summary.most_selected_model.clone(),
            avg_target_accuracy: summary.avg_accuracy,
            avg_size_mb: summary.avg_size_mb,
            avg_complexity_mmac: summary.avg_complexity_mmac,
            avg_eval_calls: summary.avg_eval_calls,
            runs: summary.runs,
            selection_frequency: summary.top_ranked_counts.clone(),
        },
    ];
    Ok(Comparison {
        version: COMPARISON_VERSION,
        settings: settings.clone(),
        rows,
        bandit_summary: summary,
    })
}

fn baseline_row(method: &str, reward: &str, repo: &Repository, runs: &[BaselineReport]) -> ComparisonRow {
    let mut frequency: BTreeMap<String, usize> = BTreeMap::new();
    for r in runs {
        *frequency.entry(r.selected_model_id.clone()).or_default() += 1;
    }
    let top = frequency.values().copied().max().unwrap_or(0);
    let modal = frequency
        .iter()
        .filter(|(_, &n)| n == top)
        .filter_map(|(id, _)| repo.index_of(id))
        .min()
        .map(|arm| repo.card(arm).id.clone())
        .unwrap_or_default();
    let card = |r: &BaselineReport| repo.card(r.selected_arm_index);
    ComparisonRow {
        method: method.to_string(),
        reward: reward.to_string(),
        most_selected_model: modal,
        avg_target_accuracy: order_free_mean(runs.iter().map(|r| r.selected_model_target_accuracy).collect()),
        avg_size_mb: order_free_mean(runs.iter().map(|r| card(r).size_mb).collect()),
        avg_complexity_mmac: order_free_mean(runs.iter().map(|r| card(r).complexity_mmac).collect()),
        avg_eval_calls: order_free_mean(runs.iter().map(|r| r.eval_calls as f64).collect()),
        runs: runs.len(),
        selection_frequency: frequency,
    }
}

pub fn export_comparison<W: Write>(comparison: &Comparison, format: ExportFormat, out: W) -> Result<(), ReportError> {
    let write_err = |e: &dyn std::fmt::Display| ReportError::Write(e.to_string());
    match format {
        ExportFormat::Document => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, comparison).map_err(|e| write_err(&e))?;
            writeln!(out).map_err(|e| write_err(&e))
        }
        ExportFormat::Table => {
            let mut writer = csv::Writer::from_writer(out);
            writer.write_record(COMPARISON_TABLE_HEADER).map_err(|e| write_err(&e))?;
            for row in &comparison.rows {
                writer
                    .write_record([
                        row.method.clone(),
                        row.reward.clone(),
                        row.most_selected_model.clone(),
                        format!("{:.4}", row.avg_target_accuracy),
                        format!("{:.2}", row.avg_size_mb),
                        format!("{:.1}", row.avg_complexity_mmac),
                        format!("{:.2}", row.avg_eval_calls),
                    ])
                    .map_err(|e| write_err(&e))?;
            }
            writer.flush().map_err(|e| write_err(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::mirror_zoo;
    use crate::oracle::{make_synthetic_zoo, SyntheticModelSpec};
    use crate::repository::ModelCard;

    fn factory(specs: Vec<SyntheticModelSpec>) -> impl Fn(&DatasetManifest) -> Result<Box<dyn EvaluationBackend>, OracleError> + Sync {
        move |m| Ok(Box::new(make_synthetic_zoo(&specs, m)?) as Box<dyn EvaluationBackend>)
    }

    #[test]
    fn single_iteration_call_accounting() {
        let specs: Vec<_> = [0.2, 0.5, 0.4]
            .iter()
            .enumerate()
            .map(|(i, &p)| SyntheticModelSpec::new(ModelCard::new(format!("m{i}"), 1.0 + i as f64, 10.0, 0.5), p))
            .collect();
        let repo = Repository::new(specs.iter().map(|s| s.card.clone()).collect()).unwrap();
        let manifest = DatasetManifest::new("t", 10, 1);
        let settings = ComparisonSettings::new(WeightProfile::accuracy_only(), 12, 1, 9);
        let c = run_comparison(&repo, &manifest, &settings, &factory(specs)).unwrap();
        let calls: Vec<f64> = c.rows.iter().map(|r| r.avg_eval_calls).collect();
        assert_eq!(calls[0], 10.0);
        assert_eq!(calls[1], 30.0);
        assert!(calls[2] <= 12.0);

        let mut out = Vec::new();
        export_comparison(&c, ExportFormat::Table, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert_eq!(text.lines().count(), 4);
        assert!(text.starts_with(&COMPARISON_TABLE_HEADER.join(",")));
    }

    #[test]
    fn mirror_zoo_brute_force_finds_strongest_model() {
        let specs = mirror_zoo();
        let repo = Repository::new(specs.iter().map(|s| s.card.clone()).collect()).unwrap();
        let manifest = DatasetManifest::new("target-sample", 100, 4);
        let settings = ComparisonSettings::new(WeightProfile::accuracy_only(), 270, 4, 1);
        let c = run_comparison(&repo, &manifest, &settings, &factory(specs)).unwrap();
        assert_eq!(c.rows[1].most_selected_model, "regnet_y_128gf");
        assert_eq!(c.rows[0].most_selected_model, "maxvit_t");
        assert_eq!(c.rows[0].avg_eval_calls, 100.0);
        assert_eq!(c.rows[1].avg_eval_calls, 600.0);
    }

    #[test]
    fn thread_count_and_resampling_are_deterministic() {
        let specs = mirror_zoo();
        let repo = Repository::new(specs.iter().map(|s| s.card.clone()).collect()).unwrap();
        let manifest = DatasetManifest::new("t", 50, 4);
        let mut settings = ComparisonSettings::new(crate::fixtures::drone_weights(), 100, 6, 3);
        settings.resample = true;
        let f = factory(specs);
        let one = run_comparison(&repo, &manifest, &settings, &f).unwrap();
        settings.threads = 4;
        let four = run_comparison(&repo, &manifest, &settings, &f).unwrap();
        assert_eq!(one.rows, four.rows);
        assert_eq!(one.rows[0].runs, 6);
    }
}
