//! Experiment reports: ranking, top-3, selection counts and MMAC savings
//! relative to evaluating every model on every sample.
//!
//! The delimited form of a report has the fixed header
//! `method,model,accuracy,size_mb,complexity_mmac,calls,reward`, one row per
//! ranked arm in ranking order.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bandit::{ExperimentConfig, PullRecord, RankedArm, Strategy};
use crate::baselines::BaselineReport;
use crate::oracle::DatasetManifest;
use crate::par::order_free_mean;
use crate::repository::{Repository, RepositoryDocument};
use crate::reward::WeightProfile;

pub const REPORT_VERSION: u64 = 1;

pub const REPORT_TABLE_HEADER: [&str; 7] = ["method", "model", "accuracy", "size_mb", "complexity_mmac", "calls", "reward"];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("pull references unknown model {0}")]
    UnknownModel(String),
    #[error("no reports to aggregate")]
    Empty,
    #[error("reports come from different configurations ({0} vs {1})")]
    MixedConfigs(String, String),
    #[error("malformed report document: {0}")]
    Malformed(String),
    #[error("cannot write report: {0}")]
    Write(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExportFormat {
    /// JSON document.
    Document,
    /// CSV table.
    Table,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub version: u64,
    /// Digest of the full configuration and repository, seeds included.
    pub config_digest: String,
    /// Same digest with both seeds zeroed; groups repeated runs.
    pub family_digest: String,
    pub strategy: Strategy,
    pub weights: WeightProfile,
    /// Where the weights came from (`explicit`, `llm`, `fallback`, `staged`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights_source: Option<String>,
    pub budget: u64,
    pub n_models: usize,
    pub n_samples: usize,
    pub ranking: Vec<RankedArm>,
    pub top3: Vec<RankedArm>,
    pub selection_counts: BTreeMap<String, u64>,
    pub eval_calls_used: u64,
    pub mmacs_used: f64,
    pub brute_force_equivalent_mmacs: f64,
    pub mmac_savings: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub baselines: Vec<BaselineReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Savings {
    pub mmacs_used: f64,
    pub brute_force_equivalent: f64,
    pub savings: f64,
}

impl ExperimentReport {
    /// The arm pulled most often. Arms that share the highest count, as
    /// happens when several exhaust their samples, are ordered by ranking.
    pub fn most_selected(&self) -> Option<&RankedArm> {
        let top = self.ranking.iter().map(|r| r.pulls).max()?;
        self.ranking.iter().find(|r| r.pulls == top)
    }
}

/// `brute = Σ_m N·c_m`, `used = Σ_m pulls_m·c_m`, `savings = brute − used`.
///
/// Both totals are summed per model in repository order, so a pull set that
/// covers every pair saves exactly zero.
pub fn compute_savings(
    repo: &Repository,
    manifest: &DatasetManifest,
    pulls: &[PullRecord],
) -> Result<Savings, ReportError> {
    let n = manifest.n_samples as f64;
    let mut counts = vec![0u64; repo.len()];
    for pull in pulls {
        let arm = repo
            .index_of(&pull.outcome.model_id)
            .ok_or_else(|| ReportError::UnknownModel(pull.outcome.model_id.clone()))?;
        counts[arm] += 1;
    }
    let brute_force_equivalent: f64 = repo.models().iter().map(|c| n * c.complexity_mmac).sum();
    let mmacs_used: f64 = repo
        .models()
        .iter()
        .zip(&counts)
        .map(|(c, &k)| k as f64 * c.complexity_mmac)
        .sum();
    Ok(Savings {
        mmacs_used,
        brute_force_equivalent,
        savings: brute_force_equivalent - mmacs_used,
    })
}

#[derive(Serialize)]
struct DigestInput<'a> {
    config: &'a ExperimentConfig,
    repository: RepositoryDocument,
}

fn digest(config: &ExperimentConfig, repo: &Repository) -> String {
    let input = DigestInput {
        config,
        repository: repo.to_document(),
    };
    let bytes = serde_json::to_vec(&input).expect("config serializes");
    hex::encode(Sha256::digest(&bytes))
}

/// `(config_digest, family_digest)` for a configuration over `repo`.
pub fn config_digests(config: &ExperimentConfig, repo: &Repository) -> (String, String) {
    let mut exact = config.clone();
    exact.trace_path = None;
    let mut family = exact.clone();
    family.seed = 0;
    family.manifest.seed = 0;
    (digest(&exact, repo), digest(&family, repo))
}

/// Assembles the report for a finished run. `ranking` must already be ordered.
pub fn build_report(
    config: &ExperimentConfig,
    repo: &Repository,
    ranking: Vec<RankedArm>,
    trace: &[PullRecord],
) -> Result<ExperimentReport, ReportError> {
    let savings = compute_savings(repo, &config.manifest, trace)?;
    let selection_counts = ranking.iter().map(|r| (r.model_id.clone(), r.pulls)).collect();
    let (config_digest, family_digest) = config_digests(config, repo);
    Ok(ExperimentReport {
        version: REPORT_VERSION,
        config_digest,
        family_digest,
        strategy: config.strategy,
        weights: config.weights.clone(),
        weights_source: None,
        budget: config.budget,
        n_models: repo.len(),
        n_samples: config.manifest.n_samples,
        top3: ranking.iter().take(3).cloned().collect(),
        ranking,
        selection_counts,
        eval_calls_used: trace.len() as u64,
        mmacs_used: savings.mmacs_used,
        brute_force_equivalent_mmacs: savings.brute_force_equivalent,
        mmac_savings: savings.savings,
        trace_ref: None,
        baselines: Vec::new(),
    })
}

pub fn export_report<W: Write>(report: &ExperimentReport, format: ExportFormat, out: W) -> Result<(), ReportError> {
    match format {
        ExportFormat::Document => {
            let mut out = out;
            serde_json::to_writer_pretty(&mut out, report).map_err(|e| ReportError::Write(e.to_string()))?;
            writeln!(out).map_err(|e| ReportError::Write(e.to_string()))
        }
        ExportFormat::Table => {
            let mut writer = csv::Writer::from_writer(out);
            let write_err = |e: csv::Error| ReportError::Write(e.to_string());
            writer.write_record(REPORT_TABLE_HEADER).map_err(write_err)?;
            for row in &report.ranking {
                writer
                    .write_record([
                        report.strategy.as_str().to_string(),
                        row.model_id.clone(),
                        row.posterior_mean_accuracy.to_string(),
                        row.size_mb.to_string(),
                        row.complexity_mmac.to_string(),
                        row.pulls.to_string(),
                        row.posterior_mean_reward.to_string(),
                    ])
                    .map_err(write_err)?;
            }
            writer.flush().map_err(|e| ReportError::Write(e.to_string()))
        }
    }
}

pub fn export_report_string(report: &ExperimentReport, format: ExportFormat) -> Result<String, ReportError> {
    let mut buffer = Vec::new();
    export_report(report, format, &mut buffer)?;
    String::from_utf8(buffer).map_err(|e| ReportError::Write(e.to_string()))
}

pub fn import_report(text: &str) -> Result<ExperimentReport, ReportError> {
    let report: ExperimentReport = serde_json::from_str(text).map_err(|e| ReportError::Malformed(e.to_string()))?;
    if report.version != REPORT_VERSION {
        return Err(ReportError::Malformed(format!("unsupported version {}", report.version)));
    }
    Ok(report)
}

/// Summary of repeated runs of one configuration family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub runs: usize,
    /// Modal top-ranked model; ties go to the lower arm index.
    pub most_selected_model: String,
    pub most_selected_runs: usize,
    /// Every model sharing the modal count, by arm index, when more than one.
    pub tied_models: Vec<String>,
    pub top_ranked_counts: BTreeMap<String, usize>,
    /// Means over runs of the top-ranked model's measured target accuracy,
    /// size and complexity.
    pub avg_accuracy: f64,
    pub avg_size_mb: f64,
    pub avg_complexity_mmac: f64,
    pub avg_eval_calls: f64,
}

pub fn aggregate_runs(reports: &[ExperimentReport]) -> Result<RunSummary, ReportError> {
    let first = reports.first().ok_or(ReportError::Empty)?;
    if let Some(other) = reports.iter().find(|r| r.family_digest != first.family_digest) {
        return Err(ReportError::MixedConfigs(
            first.family_digest.clone(),
            other.family_digest.clone(),
        ));
    }
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut arm_of: BTreeMap<String, usize> = BTreeMap::new();
    let mut accuracy = Vec::with_capacity(reports.len());
    let mut size = Vec::with_capacity(reports.len());
    let mut complexity = Vec::with_capacity(reports.len());
    let mut calls = Vec::with_capacity(reports.len());
    for report in reports {
        let top = report
            .ranking
            .first()
            .ok_or_else(|| ReportError::Malformed("report with empty ranking".into()))?;
        *counts.entry(top.model_id.clone()).or_default() += 1;
        arm_of.insert(top.model_id.clone(), top.arm_index);
        accuracy.push(top.empirical_accuracy());
        size.push(top.size_mb);
        complexity.push(top.complexity_mmac);
        calls.push(report.eval_calls_used as f64);
    }
    let best = counts.values().copied().max().unwrap_or(0);
    let mut tied: Vec<(usize, String)> = counts
        .iter()
        .filter(|(_, &n)| n == best)
        .map(|(id, _)| (arm_of[id], id.clone()))
        .collect();
    tied.sort();
    let most_selected_model = tied[0].1.clone();
    let tied_models = if tied.len() > 1 {
        tied.into_iter().map(|(_, id)| id).collect()
    } else {
        Vec::new()
    };
    Ok(RunSummary {
        runs: reports.len(),
        most_selected_model,
        most_selected_runs: best,
        tied_models,
        top_ranked_counts: counts,
        avg_accuracy: order_free_mean(accuracy),
        avg_size_mb: order_free_mean(size),
        avg_complexity_mmac: order_free_mean(complexity),
        avg_eval_calls: order_free_mean(calls),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::EvaluationOutcome;
    use crate::repository::ModelCard;

    fn repo() -> Repository {
        Repository::new(vec![ModelCard::new("A", 1.0, 100.0, 0.5), ModelCard::new("B", 2.0, 300.0, 0.5)]).unwrap()
    }

    fn pull(step: u64, id: &str) -> PullRecord {
        PullRecord {
            step,
            arm_index: usize::from(id == "B"),
            outcome: EvaluationOutcome {
                model_id: id.into(),
                sample_index: step as usize,
                correct: true,
                mmac_spent: 0.0,
            },
            reward: 0.0,
        }
    }

    #[test]
    fn savings_arithmetic() {
        let manifest = DatasetManifest::new("t", 10, 0);
        let pulls: Vec<_> = (0..5).map(|i| pull(i, "A")).collect();
        let s = compute_savings(&repo(), &manifest, &pulls).unwrap();
        assert_eq!((s.brute_force_equivalent, s.mmacs_used, s.savings), (4000.0, 500.0, 3500.0));

        let none = compute_savings(&repo(), &manifest, &[]).unwrap();
        assert_eq!(none.savings, none.brute_force_equivalent);

        let all: Vec<_> = (0..20).map(|i| pull(i, if i < 10 { "A" } else { "B" })).collect();
        assert_eq!(compute_savings(&repo(), &manifest, &all).unwrap().savings, 0.0);

        assert!(matches!(
            compute_savings(&repo(), &manifest, &[pull(0, "Z")]),
            Err(ReportError::UnknownModel(_))
        ));
    }

    fn ranked(arm: usize, id: &str, pulls: u64) -> RankedArm {
        RankedArm {
            arm_index: arm,
            model_id: id.into(),
            posterior_mean_reward: 0.5,
            posterior_mean_accuracy: 0.5,
            pulls,
            successes: pulls / 2,
            size_mb: 1.0 + arm as f64,
            complexity_mmac: 10.0,
        }
    }

    fn report(ranking: Vec<RankedArm>) -> ExperimentReport {
        let calls = ranking.iter().map(|r| r.pulls).sum();
        ExperimentReport {
            version: REPORT_VERSION,
            config_digest: "c".into(),
            family_digest: "f".into(),
            strategy: Strategy::Thompson,
            weights: WeightProfile::accuracy_only(),
            weights_source: None,
            budget: 10,
            n_models: ranking.len(),
            n_samples: 10,
            top3: ranking.iter().take(3).cloned().collect(),
            selection_counts: ranking.iter().map(|r| (r.model_id.clone(), r.pulls)).collect(),
            ranking,
            eval_calls_used: calls,
            mmacs_used: 0.0,
            brute_force_equivalent_mmacs: 0.0,
            mmac_savings: 0.0,
            trace_ref: None,
            baselines: Vec::new(),
        }
    }

    #[test]
    fn document_round_trip_and_table_shape() {
        let r = report(vec![ranked(2, "c", 4), ranked(0, "a", 3), ranked(1, "b", 3)]);
        let doc = export_report_string(&r, ExportFormat::Document).unwrap();
        assert_eq!(import_report(&doc).unwrap(), r);
        let table = export_report_string(&r, ExportFormat::Table).unwrap();
        let lines: Vec<&str> = table.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], REPORT_TABLE_HEADER.join(","));
        assert!(lines[1].starts_with("thompson,c,"));
    }

    #[test]
    fn aggregate_identical_runs() {
        let r = report(vec![ranked(0, "a", 10)]);
        let reports = vec![r; 200];
        let s = aggregate_runs(&reports).unwrap();
        assert_eq!(s.most_selected_model, "a");
        assert_eq!(s.most_selected_runs, 200);
        assert_eq!((s.avg_size_mb, s.avg_eval_calls, s.avg_accuracy), (1.0, 10.0, 0.5));
        assert!(s.tied_models.is_empty());
    }

    #[test]
    fn aggregate_reports_ties_and_breaks_by_index() {
        let a_first = report(vec![ranked(0, "a", 5), ranked(1, "b", 5)]);
        let b_first = report(vec![ranked(1, "b", 5), ranked(0, "a", 5)]);
        let s = aggregate_runs(&[b_first.clone(), a_first.clone()]).unwrap();
        assert_eq!(s.most_selected_model, "a");
        assert_eq!(s.tied_models, vec!["a".to_string(), "b".to_string()]);
        assert_eq!(s, aggregate_runs(&[a_first, b_first]).unwrap());
    }

    #[test]
    fn aggregate_rejects_mixed_configs() {
        let a = report(vec![ranked(0, "a", 5)]);
        let mut b = a.clone();
        b.family_digest = "other".into();
        assert!(matches!(aggregate_runs(&[a, b]), Err(ReportError::MixedConfigs(..))));
        assert!(matches!(aggregate_runs(&[]), Err(ReportError::Empty)));
    }

    #[test]
    fn most_selected_breaks_count_ties_by_rank() {
        let mut r = report(vec![ranked(2, "c", 500), ranked(0, "a", 500), ranked(1, "b", 40)]);
        assert_eq!(r.most_selected().unwrap().arm_index, 2);
        r.ranking = vec![ranked(2, "c", 10), ranked(0, "a", 500), ranked(1, "b", 40)];
        assert_eq!(r.most_selected().unwrap().arm_index, 0);
        r.ranking.clear();
        assert!(r.most_selected().is_none());
    }
}
