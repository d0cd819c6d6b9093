//! Synthetic model zoo: each model is a latent Bernoulli success rate on the
//! target set.
//!
//! Sample `i` of model `m` is correct iff `u < p_m`, where `u` is the 64-bit
//! ChaCha8 word pair at position `2 i` of the stream `stable_hash(m)` under key
//! `manifest.seed`. The lookup is random access, so answers do not depend on
//! the pull schedule.

use std::collections::HashMap;
use std::path::Path;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use super::{DatasetManifest, MeteredOracle, OracleError};
use crate::oracle::CorrectnessSource;
use crate::repository::{ModelCard, Repository, RepositoryError};
use crate::rng::{stable_hash, stream_rng};

pub const SYNTHETIC_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticModelSpec {
    #[serde(flatten)]
    pub card: ModelCard,
    /// Latent probability of a correct answer on any target sample.
    pub true_target_accuracy: f64,
}

impl SyntheticModelSpec {
    pub fn new(card: ModelCard, true_target_accuracy: f64) -> Self {
        Self {
            card,
            true_target_accuracy,
        }
    }
}

/// File form: `{"version": 1, "models": [{card fields..., "true_target_accuracy": p}]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpecDocument {
    pub version: u64,
    pub models: Vec<SyntheticModelSpec>,
}

impl SyntheticSpecDocument {
    pub fn new(models: Vec<SyntheticModelSpec>) -> Self {
        Self {
            version: SYNTHETIC_VERSION,
            models,
        }
    }

    pub fn parse(text: &str) -> Result<Self, OracleError> {
        let doc: Self = serde_json::from_str(text).map_err(|e| OracleError::InvalidSpec(e.to_string()))?;
        if doc.version != SYNTHETIC_VERSION {
            return Err(OracleError::InvalidSpec(format!("unsupported version {}", doc.version)));
        }
        Ok(doc)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, OracleError> {
        let path = path.as_ref();
        let text =
            std::fs::read_to_string(path).map_err(|e| OracleError::InvalidSpec(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn repository(&self) -> Result<Repository, RepositoryError> {
        Repository::new(self.models.iter().map(|s| s.card.clone()).collect())
    }
}

/// Deterministic correctness source backed by latent accuracies.
#[derive(Debug, Clone)]
pub struct SyntheticZoo {
    truth: HashMap<String, f64>,
    seed: u64,
}

impl SyntheticZoo {
    pub fn true_accuracy(&self, model_id: &str) -> Option<f64> {
        self.truth.get(model_id).copied()
    }

    fn uniform(&self, model_id: &str, sample_index: usize) -> f64 {
        let mut rng = stream_rng(self.seed, stable_hash(model_id));
        rng.set_word_pos(2 * sample_index as u128);
        (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

impl CorrectnessSource for SyntheticZoo {
    fn judge(&self, model_id: &str, sample_index: usize) -> Result<bool, OracleError> {
        let p = self
            .truth
            .get(model_id)
            .ok_or_else(|| OracleError::UnknownModel(model_id.to_string()))?;
        Ok(self.uniform(model_id, sample_index) < *p)
    }
}

/// Builds a metered synthetic backend over `specs`, sized by `manifest`.
pub fn make_synthetic_zoo(
    specs: &[SyntheticModelSpec],
    manifest: &DatasetManifest,
) -> Result<MeteredOracle<SyntheticZoo>, OracleError> {
    manifest.validate()?;
    let mut truth = HashMap::with_capacity(specs.len());
    for spec in specs {
        spec.card
            .validate()
            .map_err(|e| OracleError::InvalidSpec(e.to_string()))?;
        if !(0.0..=1.0).contains(&spec.true_target_accuracy) {
            return Err(OracleError::InvalidSpec(format!(
                "model {}: true_target_accuracy {} outside [0, 1]",
                spec.card.id, spec.true_target_accuracy
            )));
        }
        if truth.insert(spec.card.id.clone(), spec.true_target_accuracy).is_some() {
            return Err(OracleError::DuplicateModel(spec.card.id.clone()));
        }
    }
    let zoo = SyntheticZoo {
        truth,
        seed: manifest.seed,
    };
    MeteredOracle::new(zoo, specs.iter().map(|s| &s.card), manifest.n_samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::EvaluationBackend;

    fn spec(id: &str, p: f64) -> SyntheticModelSpec {
        SyntheticModelSpec::new(ModelCard::new(id, 10.0, 100.0, 0.5), p)
    }

    fn correctness(oracle: &MeteredOracle<SyntheticZoo>, id: &str, n: usize) -> Vec<bool> {
        (0..n).map(|i| oracle.evaluate(id, i).unwrap().correct).collect()
    }

    #[test]
    fn certain_models() {
        let manifest = DatasetManifest::new("t", 200, 1);
        let zoo = make_synthetic_zoo(&[spec("always", 1.0), spec("never", 0.0)], &manifest).unwrap();
        assert!(correctness(&zoo, "always", 200).iter().all(|&c| c));
        assert!(correctness(&zoo, "never", 200).iter().all(|&c| !c));
    }

    #[test]
    fn empirical_rate_is_within_three_standard_errors() {
        let n = 10_000;
        let p: f64 = 0.45;
        let zoo = make_synthetic_zoo(&[spec("regnet", p)], &DatasetManifest::new("t", n, 99)).unwrap();
        let hits = correctness(&zoo, "regnet", n).iter().filter(|&&c| c).count();
        let rate = hits as f64 / n as f64;
        let tol = 3.0 * (p * (1.0 - p) / n as f64).sqrt();
        assert!((rate - p).abs() <= tol, "rate {rate}");
    }

    #[test]
    fn seeds_change_draws_but_repeat_exactly() {
        let a = make_synthetic_zoo(&[spec("m", 0.5)], &DatasetManifest::new("t", 256, 1)).unwrap();
        let b = make_synthetic_zoo(&[spec("m", 0.5)], &DatasetManifest::new("t", 256, 2)).unwrap();
        let a2 = make_synthetic_zoo(&[spec("m", 0.5)], &DatasetManifest::new("t", 256, 1)).unwrap();
        assert_ne!(correctness(&a, "m", 256), correctness(&b, "m", 256));
        assert_eq!(correctness(&a, "m", 256), correctness(&a2, "m", 256));
    }

    #[test]
    fn answers_do_not_depend_on_query_order() {
        let manifest = DatasetManifest::new("t", 64, 5);
        let forward = make_synthetic_zoo(&[spec("m", 0.3)], &manifest).unwrap();
        let backward = make_synthetic_zoo(&[spec("m", 0.3)], &manifest).unwrap();
        let f: Vec<bool> = (0..64).map(|i| forward.evaluate("m", i).unwrap().correct).collect();
        let mut b: Vec<bool> = (0..64).rev().map(|i| backward.evaluate("m", i).unwrap().correct).collect();
        b.reverse();
        assert_eq!(f, b);
    }

    #[test]
    fn rejects_duplicates_and_bad_probabilities() {
        let manifest = DatasetManifest::new("t", 4, 0);
        assert!(matches!(
            make_synthetic_zoo(&[spec("a", 0.1), spec("a", 0.2)], &manifest),
            Err(OracleError::DuplicateModel(_))
        ));
        assert!(matches!(
            make_synthetic_zoo(&[spec("a", 1.1)], &manifest),
            Err(OracleError::InvalidSpec(_))
        ));
    }

    #[test]
    fn spec_document_flattens_card_fields() {
        let doc = SyntheticSpecDocument::new(vec![spec("a", 0.25)]);
        let text = serde_json::to_string(&doc).unwrap();
        assert!(text.contains(r#""size_mb":10.0"#));
        assert_eq!(SyntheticSpecDocument::parse(&text).unwrap(), doc);
        assert_eq!(doc.repository().unwrap().len(), 1);
    }
}
