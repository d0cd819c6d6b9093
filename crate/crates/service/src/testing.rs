//! Oracle providers with injected slowness or failures, for exercising runs.

use std::time::Duration;

use greenrunner_core::oracle::{FailingOracle, MeterReading};
use greenrunner_core::{EvaluationBackend, EvaluationOutcome, OracleError};

use crate::record::ExperimentRecord;
use crate::service::{DefaultOracleProvider, OracleProvider};

/// Sleeps before every evaluation.
pub struct SlowOracle<B> {
    inner: B,
    delay: Duration,
}

impl<B: EvaluationBackend> EvaluationBackend for SlowOracle<B> {
    fn evaluate(&self, model_id: &str, sample_index: usize) -> Result<EvaluationOutcome, OracleError> {
        std::thread::sleep(self.delay);
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

/// Wraps [`DefaultOracleProvider`] with a per-call delay and an optional
/// failure from the given 1-based call onwards.
#[derive(Debug, Clone, Default)]
pub struct FaultyProvider {
    pub delay: Duration,
    pub fail_at_call: Option<u64>,
}

impl FaultyProvider {
    pub fn failing_at(call: u64) -> Self {
        Self {
            delay: Duration::ZERO,
            fail_at_call: Some(call),
        }
    }

    pub fn slow(delay: Duration) -> Self {
        Self {
            delay,
            fail_at_call: None,
        }
    }
}

impl OracleProvider for FaultyProvider {
    fn oracle(&self, record: &ExperimentRecord) -> Result<Box<dyn EvaluationBackend>, OracleError> {
        let base = DefaultOracleProvider.oracle(record)?;
        let slow = SlowOracle {
            inner: base,
            delay: self.delay,
        };
        Ok(match self.fail_at_call {
            Some(call) => Box::new(FailingOracle::new(slow, call)),
            None => Box::new(slow),
        })
    }
}
