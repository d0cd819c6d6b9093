//! The metered evaluation resource: "is model `m` correct on sample `x`?".
//!
//! One call is one `(model, sample)` pair. Answers are cached per pair and a
//! cached repeat is never metered again. The meter keeps per-model call
//! counts and derives the MMAC total from them on read, so readings do not
//! depend on the order in which concurrent calls landed.

mod http;
mod synthetic;

use std::collections::hash_map::Entry;
use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::repository::{ModelCard, Repository};

pub use http::{HttpEvaluationClient, EVAL_TOKEN_ENV, EVAL_URL_ENV};
pub use synthetic::{make_synthetic_zoo, SyntheticModelSpec, SyntheticSpecDocument, SyntheticZoo};

pub const MANIFEST_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("unknown model {0}")]
    UnknownModel(String),
    #[error("sample index {index} out of range for {n_samples} samples")]
    SampleOutOfRange { index: usize, n_samples: usize },
    #[error("duplicate model id {0}")]
    DuplicateModel(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("invalid dataset manifest: {0}")]
    InvalidManifest(String),
    /// Transport or upstream failure. Never reported as an incorrect answer.
    #[error("evaluation backend unavailable: {0}")]
    Unavailable(String),
}

impl OracleError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, OracleError::Unavailable(_))
    }
}

/// Result of one metered evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationOutcome {
    pub model_id: String,
    pub sample_index: usize,
    pub correct: bool,
    pub mmac_spent: f64,
}

/// Target evaluation set description.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(default = "manifest_version")]
    pub version: u64,
    pub name: String,
    pub n_samples: usize,
    /// Governs synthetic correctness draws.
    pub seed: u64,
}

fn manifest_version() -> u64 {
    MANIFEST_VERSION
}

impl DatasetManifest {
    pub fn new(name: impl Into<String>, n_samples: usize, seed: u64) -> Self {
        Self {
            version: MANIFEST_VERSION,
            name: name.into(),
            n_samples,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        if self.version != MANIFEST_VERSION {
            return Err(OracleError::InvalidManifest(format!("unsupported version {}", self.version)));
        }
        if self.n_samples == 0 {
            return Err(OracleError::InvalidManifest("n_samples must be at least 1".into()));
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self, OracleError> {
        let manifest: Self = serde_json::from_str(text).map_err(|e| OracleError::InvalidManifest(e.to_string()))?;
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, OracleError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| OracleError::InvalidManifest(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    /// Same dataset with a different correctness seed.
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MeterReading {
    pub calls: u64,
    pub mmacs: f64,
}

/// Raw per-sample correctness, without metering or caching.
pub trait CorrectnessSource: Send + Sync {
    fn judge(&self, model_id: &str, sample_index: usize) -> Result<bool, OracleError>;
}

/// A metered evaluation backend.
pub trait EvaluationBackend: Send + Sync {
    fn evaluate(&self, model_id: &str, sample_index: usize) -> Result<EvaluationOutcome, OracleError>;

    /// Distinct metered calls and their MMAC total since the last reset.
    fn meter_read(&self) -> MeterReading;

    fn reset_meter(&self);

    fn n_samples(&self) -> usize;

    fn covers(&self, model_id: &str) -> bool;
}

#[derive(Default)]
struct MeterState {
    cache: HashMap<(usize, usize), bool>,
    calls_per_model: Vec<u64>,
}

/// Caching, metering front for any [`CorrectnessSource`].
pub struct MeteredOracle<S> {
    source: S,
    ids: HashMap<String, usize>,
    complexities: Vec<f64>,
    n_samples: usize,
    state: Mutex<MeterState>,
}

impl<S: CorrectnessSource> MeteredOracle<S> {
    pub fn new<'a>(
        source: S,
        cards: impl IntoIterator<Item = &'a ModelCard>,
        n_samples: usize,
    ) -> Result<Self, OracleError> {
        let mut ids = HashMap::new();
        let mut complexities = Vec::new();
        for card in cards {
            if ids.insert(card.id.clone(), complexities.len()).is_some() {
                return Err(OracleError::DuplicateModel(card.id.clone()));
            }
            complexities.push(card.complexity_mmac);
        }
        let state = MeterState {
            cache: HashMap::new(),
            calls_per_model: vec![0; complexities.len()],
        };
        Ok(Self {
            source,
            ids,
            complexities,
            n_samples,
            state: Mutex::new(state),
        })
    }

    pub fn for_repository(source: S, repo: &Repository, n_samples: usize) -> Result<Self, OracleError> {
        Self::new(source, repo.models(), n_samples)
    }

    pub fn source(&self) -> &S {
        &self.source
    }
}

impl<S: CorrectnessSource> EvaluationBackend for MeteredOracle<S> {
    fn evaluate(&self, model_id: &str, sample_index: usize) -> Result<EvaluationOutcome, OracleError> {
        let model = *self
            .ids
            .get(model_id)
            .ok_or_else(|| OracleError::UnknownModel(model_id.to_string()))?;
        if sample_index >= self.n_samples {
            return Err(OracleError::SampleOutOfRange {
                index: sample_index,
                n_samples: self.n_samples,
            });
        }
        let outcome = |correct| EvaluationOutcome {
            model_id: model_id.to_string(),
            sample_index,
            correct,
            mmac_spent: self.complexities[model],
        };

        if let Some(&correct) = self.state.lock().expect("meter lock").cache.get(&(model, sample_index)) {
            return Ok(outcome(correct));
        }
        // The source is consulted without holding the lock; a racing duplicate
        // is metered only by whichever caller inserts first.
        let correct = self.source.judge(model_id, sample_index)?;
        let mut guard = self.state.lock().expect("meter lock");
        let state = &mut *guard;
        let correct = match state.cache.entry((model, sample_index)) {
            Entry::Occupied(existing) => *existing.get(),
            Entry::Vacant(slot) => {
                slot.insert(correct);
                state.calls_per_model[model] += 1;
                correct
            }
        };
        Ok(outcome(correct))
    }

    fn meter_read(&self) -> MeterReading {
        let state = self.state.lock().expect("meter lock");
        let calls = state.calls_per_model.iter().sum();
        let mmacs = state
            .calls_per_model
            .iter()
            .zip(&self.complexities)
            .map(|(&n, &c)| n as f64 * c)
            .sum();
        MeterReading { calls, mmacs }
    }

    fn reset_meter(&self) {
        let mut state = self.state.lock().expect("meter lock");
        state.calls_per_model.iter_mut().for_each(|n| *n = 0);
    }

    fn n_samples(&self) -> usize {
        self.n_samples
    }

    fn covers(&self, model_id: &str) -> bool {
        self.ids.contains_key(model_id)
    }
}

/// Wraps a backend and fails the `fail_at_call`-th evaluation attempt (1-based)
/// and every attempt after it with [`OracleError::Unavailable`].
pub struct FailingOracle<B> {
    inner: B,
    fail_at_call: u64,
    attempts: AtomicU64,
}

impl<B> FailingOracle<B> {
    pub fn new(inner: B, fail_at_call: u64) -> Self {
        Self {
            inner,
            fail_at_call,
            attempts: AtomicU64::new(0),
        }
    }
}

impl<B: EvaluationBackend> EvaluationBackend for FailingOracle<B> {
    fn evaluate(&self, model_id: &str, sample_index: usize) -> Result<EvaluationOutcome, OracleError> {
        let attempt = self.attempts.fetch_add(1, Ordering::SeqCst) + 1;
        if attempt >= self.fail_at_call {
            return Err(OracleError::Unavailable(format!("injected failure at call {attempt}")));
        }
        self.inner.evaluate(model_id, sample_index)
    }

    fn meter_read(&self) -> MeterReading {
        self.inner.meter_read()
    }

    fn reset_meter(&self) {
        self.inner.reset_meter()
    }

    fn n_samples(&self) -> usize {
        self.inner.n_samples()
    }

    fn covers(&self, model_id: &str) -> bool {
        self.inner.covers(model_id)
    }
}

impl<B: EvaluationBackend + ?Sized> EvaluationBackend for Box<B> {
    fn evaluate(&self, model_id: &str, sample_index: usize) -> Result<EvaluationOutcome, OracleError> {
        (**self).evaluate(model_id, sample_index)
    }

    fn meter_read(&self) -> MeterReading {
        (**self).meter_read()
    }

    fn reset_meter(&self) {
        (**self).reset_meter()
    }

    fn n_samples(&self) -> usize {
        (**self).n_samples()
    }

    fn covers(&self, model_id: &str) -> bool {
        (**self).covers(model_id)
    }
}
