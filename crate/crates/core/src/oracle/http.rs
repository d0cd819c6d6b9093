//! Client for an external evaluation service.
//!
//! `POST {base}/evaluate` with `{"model_id": .., "sample_index": ..}` answers
//! `{"correct": bool}`. Transport errors and 5xx responses are retried a
//! bounded number of times and then surface as [`OracleError::Unavailable`].

use std::time::Duration;

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};

use super::{CorrectnessSource, OracleError};

pub const EVAL_URL_ENV: &str = "GREENRUNNER_EVAL_URL";
pub const EVAL_TOKEN_ENV: &str = "GREENRUNNER_EVAL_TOKEN";

#[derive(Serialize)]
struct EvaluateRequest<'a> {
    model_id: &'a str,
    sample_index: usize,
}

#[derive(Deserialize)]
struct EvaluateResponse {
    correct: bool,
}

#[derive(Debug, Clone)]
pub struct HttpEvaluationClient {
    endpoint: String,
    token: Option<String>,
    max_retries: u32,
    backoff: Duration,
    client: Client,
}

impl HttpEvaluationClient {
    pub fn new(base_url: &str, token: Option<String>, timeout: Duration) -> Result<Self, OracleError> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| OracleError::Unavailable(e.to_string()))?;
        Ok(Self {
            endpoint: format!("{}/evaluate", base_url.trim_end_matches('/')),
            token,
            max_retries: 3,
            backoff: Duration::from_millis(50),
            client,
        })
    }

    /// Reads `GREENRUNNER_EVAL_URL` / `GREENRUNNER_EVAL_TOKEN`; `None` when the URL is unset.
    pub fn from_env() -> Option<Result<Self, OracleError>> {
        let url = std::env::var(EVAL_URL_ENV).ok().filter(|u| !u.is_empty())?;
        let token = std::env::var(EVAL_TOKEN_ENV).ok().filter(|t| !t.is_empty());
        Some(Self::new(&url, token, Duration::from_secs(10)))
    }

    pub fn with_retries(mut self, max_retries: u32, backoff: Duration) -> Self {
        self.max_retries = max_retries;
        self.backoff = backoff;
        self
    }

    fn attempt(&self, model_id: &str, sample_index: usize) -> Result<bool, Attempt> {
        let mut request = self.client.post(&self.endpoint).json(&EvaluateRequest { model_id, sample_index });
        if let Some(token) = &self.token {
            request = request.bearer_auth(token);
        }
        let response = request.send().map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = response.status();
        if status.is_server_error() {
            return Err(Attempt::Retry(format!("upstream status {status}")));
        }
        if !status.is_success() {
            return Err(Attempt::Fatal(format!("upstream rejected request with status {status}")));
        }
        response
            .json::<EvaluateResponse>()
            .map(|r| r.correct)
            .map_err(|e| Attempt::Fatal(format!("malformed upstream response: {e}")))
    }
}

enum Attempt {
    Retry(String),
    Fatal(String),
}

impl CorrectnessSource for HttpEvaluationClient {
    fn judge(&self, model_id: &str, sample_index: usize) -> Result<bool, OracleError> {
        let mut last = String::new();
        for attempt in 0..=self.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff * attempt);
            }
            match self.attempt(model_id, sample_index) {
                Ok(correct) => return Ok(correct),
                Err(Attempt::Retry(message)) => {
                    tracing::warn!(model_id, sample_index, attempt, %message, "evaluation call failed");
                    last = message;
                }
                Err(Attempt::Fatal(message)) => return Err(OracleError::Unavailable(message)),
            }
        }
        Err(OracleError::Unavailable(format!(
            "gave up after {} attempts: {last}",
            self.max_retries + 1
        )))
    }
}
