//! Experiment lifecycle: setup, staging, runs and results over a durable store.

use std::collections::{BTreeMap, HashMap};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread::JoinHandle;

use greenrunner_core::oracle::{HttpEvaluationClient, SyntheticSpecDocument};
use greenrunner_core::reasoning::{ReasoningError, DEFAULT_PARSE_RETRIES};
use greenrunner_core::{
    benchmark_select, brute_force_select, load_repository, make_synthetic_zoo, run_experiment_observed, suggest_weights,
    DatasetManifest, EvaluationBackend, ExperimentReport, MeteredOracle, OracleError, Reasoner, Strategy,
    SyntheticModelSpec, WeightProfile,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{info, warn};
use uuid::Uuid;

use crate::record::{ExperimentRecord, ExperimentState, IllegalTransition, Progress, RunSetup};
use crate::store::{FileStore, StoreError};

pub const INTERRUPTED: &str = "interrupted";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub message: String,
}

impl FieldError {
    fn new(field: &str, message: impl Into<String>) -> Self {
        Self {
            field: field.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("experiment {0} not found")]
    NotFound(Uuid),
    #[error("invalid request: {}", summarize(.0))]
    Validation(Vec<FieldError>),
    #[error("experiment {id}: {source}")]
    Transition { id: Uuid, source: IllegalTransition },
    #[error("experiment {id} is {state}; {operation} needs {expected}")]
    WrongState {
        id: Uuid,
        operation: &'static str,
        state: ExperimentState,
        expected: &'static str,
    },
    #[error("experiment {id} failed: {diagnostic}")]
    RunFailed { id: Uuid, diagnostic: String },
    #[error("upstream failure: {0}")]
    Upstream(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("service is shutting down")]
    ShuttingDown,
}

fn summarize(fields: &[FieldError]) -> String {
    fields
        .iter()
        .map(|f| format!("{}: {}", f.field, f.message))
        .collect::<Vec<_>>()
        .join("; ")
}

/// Setup-page payload. Documents may be inline or referenced by path.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateRequest {
    #[serde(default)]
    pub repository: Option<serde_json::Value>,
    #[serde(default)]
    pub repository_path: Option<PathBuf>,
    #[serde(default)]
    pub manifest: Option<serde_json::Value>,
    #[serde(default)]
    pub manifest_path: Option<PathBuf>,
    /// Latent accuracy per model id; selects the simulated oracle.
    #[serde(default)]
    pub synthetic_truth: Option<BTreeMap<String, f64>>,
    /// A synthetic-spec document whose accuracies become `synthetic_truth`.
    #[serde(default)]
    pub synthetic_path: Option<PathBuf>,
    #[serde(default)]
    pub use_case: String,
    #[serde(default)]
    pub strategy: Option<String>,
    #[serde(default)]
    pub budget: Option<u64>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub ucb_c: Option<f64>,
    #[serde(default)]
    pub prior_alpha: Option<f64>,
    #[serde(default)]
    pub prior_beta: Option<f64>,
    #[serde(default)]
    pub compare_baselines: Option<bool>,
}

/// Builds the evaluation backend a run spends its budget on.
pub trait OracleProvider: Send + Sync {
    fn oracle(&self, record: &ExperimentRecord) -> Result<Box<dyn EvaluationBackend>, OracleError>;
}

/// Simulated oracle when the record carries latent accuracies, otherwise the
/// remote evaluation service named by the environment.
#[derive(Debug, Default, Clone, Copy)]
pub struct DefaultOracleProvider;

impl OracleProvider for DefaultOracleProvider {
    fn oracle(&self, record: &ExperimentRecord) -> Result<Box<dyn EvaluationBackend>, OracleError> {
        if let Some(truth) = &record.synthetic_truth {
            let specs = synthetic_specs(record, truth)?;
            return Ok(Box::new(make_synthetic_zoo(&specs, &record.manifest)?));
        }
        let client = HttpEvaluationClient::from_env()
            .ok_or_else(|| OracleError::Unavailable("no evaluation service configured".into()))??;
        Ok(Box::new(MeteredOracle::for_repository(
            client,
            &record.repository,
            record.manifest.n_samples,
        )?))
    }
}

pub fn synthetic_specs(
    record: &ExperimentRecord,
    truth: &BTreeMap<String, f64>,
) -> Result<Vec<SyntheticModelSpec>, OracleError> {
    record
        .repository
        .models()
        .iter()
        .map(|card| {
            truth
                .get(&card.id)
                .map(|&p| SyntheticModelSpec::new(card.clone(), p))
                .ok_or_else(|| OracleError::InvalidSpec(format!("no latent accuracy for {}", card.id)))
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct ServiceOptions {
    pub suggestion_repeats: u32,
    pub parse_retries: u32,
    pub baseline_threads: usize,
}

impl Default for ServiceOptions {
    fn default() -> Self {
        Self {
            suggestion_repeats: 5,
            parse_retries: DEFAULT_PARSE_RETRIES,
            baseline_threads: 4,
        }
    }
}

type Slot = Arc<Mutex<ExperimentRecord>>;

struct Inner {
    store: FileStore,
    records: Mutex<HashMap<Uuid, Slot>>,
    live: Mutex<HashMap<Uuid, Arc<AtomicU64>>>,
    reasoner: Reasoner,
    provider: Arc<dyn OracleProvider>,
    options: ServiceOptions,
    shutting_down: AtomicBool,
}

#[derive(Clone)]
pub struct ExperimentService {
    inner: Arc<Inner>,
}

/// A background run. The record is updated when it finishes whether or not
/// anyone waits.
pub struct RunHandle {
    pub id: Uuid,
    service: ExperimentService,
    thread: JoinHandle<()>,
}

impl RunHandle {
    /// Blocks until the run has stored its outcome, then returns the record.
    pub fn wait(self) -> Result<ExperimentRecord, ServiceError> {
        if self.thread.join().is_err() {
            warn!(id = %self.id, "run thread panicked");
        }
        self.service.get(self.id)
    }
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

fn read_document(inline: &Option<serde_json::Value>, path: &Option<PathBuf>, field: &str) -> Result<String, FieldError> {
    match (inline, path) {
        (Some(_), Some(_)) => Err(FieldError::new(field, "give the document inline or by path, not both")),
        (Some(value), None) => Ok(value.to_string()),
        (None, Some(path)) => {
            std::fs::read_to_string(path).map_err(|e| FieldError::new(field, format!("{}: {e}", path.display())))
        }
        (None, None) => Err(FieldError::new(field, "required")),
    }
}

fn check_range(errors: &mut Vec<FieldError>, field: &str, value: f64, ok: bool, expected: &str) {
    if !ok {
        errors.push(FieldError::new(field, format!("{value} is not {expected}")));
    }
}

fn reasoning_failure(err: ReasoningError) -> ServiceError {
    match err {
        ReasoningError::EmptyUseCase => ServiceError::Validation(vec![FieldError::new("use_case", "must not be empty")]),
        other => ServiceError::Upstream(other.to_string()),
    }
}

impl ExperimentService {
    /// Opens the store at `dir`. Records left running by a previous process
    /// are marked failed as interrupted.
    pub fn open(
        dir: impl AsRef<Path>,
        reasoner: Reasoner,
        provider: Arc<dyn OracleProvider>,
        options: ServiceOptions,
    ) -> Result<Self, ServiceError> {
        let store = FileStore::open(dir.as_ref())?;
        let mut records = HashMap::new();
        for mut record in store.load_all()? {
            if record.state == ExperimentState::Running {
                record
                    .transition(ExperimentState::Failed, Some(INTERRUPTED.into()))
                    .expect("running records can always fail");
                record.diagnostic = Some(INTERRUPTED.into());
                store.save(&record)?;
                info!(id = %record.id, "recovered interrupted run");
            }
            records.insert(record.id, Arc::new(Mutex::new(record)));
        }
        Ok(Self {
            inner: Arc::new(Inner {
                store,
                records: Mutex::new(records),
                live: Mutex::new(HashMap::new()),
                reasoner,
                provider,
                options,
                shutting_down: AtomicBool::new(false),
            }),
        })
    }

    /// Stops persisting anything. Returns once no writer holds a record, so
    /// the store can be reopened as if this process had died.
    pub fn shutdown(&self) {
        self.inner.shutting_down.store(true, Ordering::SeqCst);
        let slots: Vec<Slot> = lock(&self.inner.records).values().cloned().collect();
        for slot in slots {
            drop(lock(&slot));
        }
    }

    fn live(&self) -> Result<(), ServiceError> {
        if self.inner.shutting_down.load(Ordering::SeqCst) {
            Err(ServiceError::ShuttingDown)
        } else {
            Ok(())
        }
    }

    fn slot(&self, id: Uuid) -> Result<Slot, ServiceError> {
        lock(&self.inner.records).get(&id).cloned().ok_or(ServiceError::NotFound(id))
    }

    /// Applies `change` to a copy of the record under its lock and stores
    /// the copy. Nothing changes if `change` or the write fails.
    fn update<T>(
        &self,
        id: Uuid,
        change: impl FnOnce(&mut ExperimentRecord) -> Result<T, ServiceError>,
    ) -> Result<(T, ExperimentRecord), ServiceError> {
        let slot = self.slot(id)?;
        let mut guard = lock(&slot);
        self.live()?;
        let mut next = guard.clone();
        let value = change(&mut next)?;
        next.updated_at = chrono::Utc::now();
        self.inner.store.save(&next)?;
        *guard = next.clone();
        Ok((value, next))
    }

    pub fn create(&self, request: CreateRequest) -> Result<ExperimentRecord, ServiceError> {
        self.live()?;
        let mut errors = Vec::new();

        let repository = match read_document(&request.repository, &request.repository_path, "repository") {
            Ok(text) => load_repository(&text, true)
                .map_err(|e| errors.push(FieldError::new("repository", e.to_string())))
                .ok(),
            Err(e) => {
                errors.push(e);
                None
            }
        };
        let manifest = match read_document(&request.manifest, &request.manifest_path, "manifest") {
            Ok(text) => DatasetManifest::parse(&text)
                .map_err(|e| errors.push(FieldError::new("manifest", e.to_string())))
                .ok(),
            Err(e) => {
                errors.push(e);
                None
            }
        };
        let truth = match (&request.synthetic_truth, &request.synthetic_path) {
            (Some(_), Some(_)) => {
                errors.push(FieldError::new("synthetic_truth", "give latent accuracies inline or by path, not both"));
                None
            }
            (Some(map), None) => Some(map.clone()),
            (None, Some(path)) => match SyntheticSpecDocument::from_path(path) {
                Ok(doc) => Some(
                    doc.models
                        .into_iter()
                        .map(|m| (m.card.id, m.true_target_accuracy))
                        .collect::<BTreeMap<_, _>>(),
                ),
                Err(e) => {
                    errors.push(FieldError::new("synthetic_path", e.to_string()));
                    None
                }
            },
            (None, None) => None,
        };
        if let (Some(truth), Some(repo)) = (&truth, &repository) {
            for card in repo.models() {
                match truth.get(&card.id) {
                    None => errors.push(FieldError::new("synthetic_truth", format!("missing model {}", card.id))),
                    Some(p) if !(0.0..=1.0).contains(p) => errors.push(FieldError::new(
                        "synthetic_truth",
                        format!("accuracy {p} for {} is outside [0, 1]", card.id),
                    )),
                    Some(_) => {}
                }
            }
            for id in truth.keys().filter(|id| repo.get(id).is_none()) {
                errors.push(FieldError::new("synthetic_truth", format!("unknown model {id}")));
            }
        }

        if request.use_case.trim().is_empty() {
            errors.push(FieldError::new("use_case", "must not be empty"));
        }
        let strategy = match request.strategy.as_deref() {
            None => {
                errors.push(FieldError::new("strategy", "required"));
                None
            }
            Some(s) => s
                .parse::<Strategy>()
                .map_err(|e| errors.push(FieldError::new("strategy", e.to_string())))
                .ok(),
        };
        let budget = request.budget;
        match (budget, &repository) {
            (None, _) => errors.push(FieldError::new("budget", "required")),
            (Some(b), Some(repo)) if (b as usize) < repo.len() => errors.push(FieldError::new(
                "budget",
                format!("{b} is below the {} calls the warm start needs", repo.len()),
            )),
            _ => {}
        }

        let mut setup = RunSetup::new(strategy.unwrap_or(Strategy::Thompson), budget.unwrap_or(0));
        setup.seed = request.seed.unwrap_or(0);
        setup.compare_baselines = request.compare_baselines.unwrap_or(false);
        if let Some(v) = request.epsilon {
            check_range(&mut errors, "epsilon", v, (0.0..=1.0).contains(&v), "in [0, 1]");
            setup.epsilon = v;
        }
        if let Some(v) = request.ucb_c {
            check_range(&mut errors, "ucb_c", v, v.is_finite() && v >= 0.0, "a finite non-negative number");
            setup.ucb_c = v;
        }
        if let Some(v) = request.prior_alpha {
            check_range(&mut errors, "prior_alpha", v, v.is_finite() && v > 0.0, "positive");
            setup.prior_alpha = v;
        }
        if let Some(v) = request.prior_beta {
            check_range(&mut errors, "prior_beta", v, v.is_finite() && v > 0.0, "positive");
            setup.prior_beta = v;
        }

        let (Some(repository), Some(manifest), true) = (repository, manifest, errors.is_empty()) else {
            return Err(ServiceError::Validation(errors));
        };
        if let Err(e) = setup
            .config(WeightProfile::accuracy_only(), manifest.clone())
            .validate(repository.len())
        {
            return Err(ServiceError::Validation(vec![FieldError::new("setup", e.to_string())]));
        }

        let record = ExperimentRecord::new_draft(repository, manifest, request.use_case, setup, truth);
        self.inner.store.save(&record)?;
        lock(&self.inner.records).insert(record.id, Arc::new(Mutex::new(record.clone())));
        info!(id = %record.id, "created experiment");
        Ok(record)
    }

    /// Asks the reasoner for weights. The call happens without holding the
    /// record, so the state is checked again before the result is stored.
    pub fn stage(&self, id: Uuid) -> Result<ExperimentRecord, ServiceError> {
        self.live()?;
        let use_case = {
            let slot = self.slot(id)?;
            let record = lock(&slot);
            ensure_stageable(&record)?;
            record.use_case.clone()
        };
        let outcome = suggest_weights(
            &use_case,
            self.inner.options.suggestion_repeats,
            &self.inner.reasoner,
            self.inner.options.parse_retries,
        );
        match outcome {
            Ok(suggestion) => self
                .update(id, |record| {
                    ensure_stageable(record)?;
                    record
                        .transition(ExperimentState::Staged, Some(format!("suggestion from {}", suggestion.source.as_str())))
                        .map_err(|source| ServiceError::Transition { id, source })?;
                    record.weights = Some(suggestion.profile.clone());
                    if let Some(previous) = record.suggestion.replace(suggestion) {
                        record.suggestion_history.push(previous);
                    }
                    record.annotation = None;
                    Ok(())
                })
                .map(|(_, record)| record),
            Err(err) => {
                let message = err.to_string();
                self.update(id, |record| {
                    record.annotation = Some(format!("staging failed: {message}"));
                    Ok(())
                })?;
                Err(reasoning_failure(err))
            }
        }
    }

    /// Replaces the run weights. The stored suggestion is left as it was.
    pub fn update_weights(&self, id: Uuid, weights: WeightProfile) -> Result<ExperimentRecord, ServiceError> {
        self.live()?;
        let mut errors = Vec::new();
        for (field, value) in [
            ("weight_acc", weights.weight_acc),
            ("weight_size", weights.weight_size),
            ("weight_complexity", weights.weight_complexity),
        ] {
            check_range(&mut errors, field, value, (0.0..=1.0).contains(&value), "in [0, 1]");
        }
        if !errors.is_empty() {
            self.slot(id)?;
            return Err(ServiceError::Validation(errors));
        }
        self.update(id, |record| {
            if record.state != ExperimentState::Staged {
                return Err(ServiceError::WrongState {
                    id,
                    operation: "weight update",
                    state: record.state,
                    expected: "staged",
                });
            }
            record
                .transition(ExperimentState::Staged, Some(format!("weights set to {}", weights.label())))
                .map_err(|source| ServiceError::Transition { id, source })?;
            record.weights = Some(weights);
            Ok(())
        })
        .map(|(_, record)| record)
    }

    /// Starts the bandit run on a background thread.
    pub fn start_run(&self, id: Uuid) -> Result<RunHandle, ServiceError> {
        self.live()?;
        let counter = Arc::new(AtomicU64::new(0));
        let (oracle, record) = self.update(id, |record| {
            if record.state != ExperimentState::Staged {
                return Err(ServiceError::Transition {
                    id,
                    source: IllegalTransition {
                        from: record.state,
                        to: ExperimentState::Running,
                    },
                });
            }
            let oracle = self
                .inner
                .provider
                .oracle(record)
                .map_err(|e| ServiceError::Upstream(e.to_string()))?;
            record
                .transition(ExperimentState::Running, None)
                .map_err(|source| ServiceError::Transition { id, source })?;
            record.progress = Progress {
                calls_spent: 0,
                budget: record.setup.budget,
            };
            Ok(oracle)
        })?;
        lock(&self.inner.live).insert(id, counter.clone());

        let service = self.clone();
        let thread = std::thread::Builder::new()
            .name(format!("run-{id}"))
            .spawn(move || service.execute(record, oracle, counter))
            .map_err(|e| ServiceError::Upstream(format!("cannot start run thread: {e}")))?;
        Ok(RunHandle {
            id,
            service: self.clone(),
            thread,
        })
    }

    fn execute(&self, record: ExperimentRecord, oracle: Box<dyn EvaluationBackend>, counter: Arc<AtomicU64>) {
        let id = record.id;
        let outcome = self.compute(&record, oracle.as_ref(), &counter);
        let calls_spent = oracle.meter_read().calls;
        let stored = self.update(id, |current| {
            current.progress.calls_spent = calls_spent;
            match outcome {
                Ok(report) => {
                    current.report = Some(report);
                    current.transition(ExperimentState::Complete, None)
                }
                Err(diagnostic) => {
                    current.diagnostic = Some(diagnostic.clone());
                    current.transition(ExperimentState::Failed, Some(diagnostic))
                }
            }
            .map_err(|source| ServiceError::Transition { id, source })
        });
        match stored {
            Ok((_, r)) => info!(%id, state = %r.state, calls_spent, "run finished"),
            Err(e) => warn!(%id, error = %e, "run outcome not stored"),
        }
        lock(&self.inner.live).remove(&id);
    }

    fn compute(
        &self,
        record: &ExperimentRecord,
        oracle: &dyn EvaluationBackend,
        counter: &AtomicU64,
    ) -> Result<ExperimentReport, String> {
        let weights = record.weights.clone().ok_or("no weights staged")?;
        let config = record.setup.config(weights.clone(), record.manifest.clone());
        let mut observer = |pull: &greenrunner_core::PullRecord| counter.store(pull.step + 1, Ordering::SeqCst);
        let outcome = run_experiment_observed(&config, &record.repository, oracle, &mut observer)
            .map_err(|e| e.to_string())?;
        let mut report = outcome.report;
        report.weights_source = Some(weights_source(record, &weights).into());
        if record.setup.compare_baselines {
            let threads = self.inner.options.baseline_threads;
            let fresh = || self.inner.provider.oracle(record).map_err(|e| e.to_string());
            let benchmark = benchmark_select(&record.repository, &weights, fresh()?.as_ref()).map_err(|e| e.to_string())?;
            let brute =
                brute_force_select(&record.repository, &weights, fresh()?.as_ref(), threads).map_err(|e| e.to_string())?;
            report.baselines = vec![benchmark, brute];
        }
        Ok(report)
    }

    /// The record with live progress while a run is in flight.
    pub fn get(&self, id: Uuid) -> Result<ExperimentRecord, ServiceError> {
        let slot = self.slot(id)?;
        let mut record = lock(&slot).clone();
        if record.state == ExperimentState::Running {
            if let Some(counter) = lock(&self.inner.live).get(&id) {
                record.progress.calls_spent = counter.load(Ordering::SeqCst);
            }
        }
        Ok(record)
    }

    pub fn get_results(&self, id: Uuid) -> Result<ExperimentReport, ServiceError> {
        let record = self.get(id)?;
        match record.state {
            ExperimentState::Complete => Ok(record.report.expect("complete records carry a report")),
            ExperimentState::Failed => Err(ServiceError::RunFailed {
                id,
                diagnostic: record.diagnostic.unwrap_or_default(),
            }),
            state => Err(ServiceError::WrongState {
                id,
                operation: "results",
                state,
                expected: "complete",
            }),
        }
    }

    /// All records, oldest first.
    pub fn list(&self) -> Vec<ExperimentRecord> {
        let ids: Vec<Uuid> = lock(&self.inner.records).keys().copied().collect();
        let mut records: Vec<_> = ids.into_iter().filter_map(|id| self.get(id).ok()).collect();
        records.sort_by(|a, b| a.created_at.cmp(&b.created_at).then(a.id.cmp(&b.id)));
        records
    }

    pub fn store_dir(&self) -> &Path {
        self.inner.store.dir()
    }
}

fn ensure_stageable(record: &ExperimentRecord) -> Result<(), ServiceError> {
    if record.state.can_transition_to(ExperimentState::Staged) {
        Ok(())
    } else {
        Err(ServiceError::Transition {
            id: record.id,
            source: IllegalTransition {
                from: record.state,
                to: ExperimentState::Staged,
            },
        })
    }
}

fn weights_source(record: &ExperimentRecord, weights: &WeightProfile) -> &'static str {
    match &record.suggestion {
        Some(s) if s.profile.triple() == weights.triple() => s.source.as_str(),
        _ => "user",
    }
}
