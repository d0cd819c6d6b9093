//! Weight suggestions from a plain-text use-case description.
//!
//! A language model is asked for a JSON document of the form
//!
//! ```json
//! { "weight_accuracy": 0.63, "weight_size": 0.25, "weight_complexity": 0.21,
//!   "justification": "...", "tradeoffs": "..." }
//! ```
//!
//! The query is repeated and the weight triples are averaged per component.
//! Without a configured model, a keyword rule table ([`FALLBACK_RULES`])
//! supplies the profile.

use std::sync::Arc;
use std::time::Duration;

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::par::{order_free_mean, parallel_map};
use crate::reward::WeightProfile;

pub const LLM_URL_ENV: &str = "GREENRUNNER_LLM_URL";
pub const LLM_TOKEN_ENV: &str = "GREENRUNNER_LLM_TOKEN";

/// Retries per repeat when a response cannot be parsed or the call fails.
pub const DEFAULT_PARSE_RETRIES: u32 = 2;

pub const PROMPT_TEMPLATE: &str = r#"You are helping a developer select a pre-trained deep learning model.
Use case: {use_case}

Assign an importance weight between 0 and 1 to each of these metrics:
- model accuracy on the target data
- model size on disk
- model complexity (multiply-accumulate operations per inference)

Explain why you chose the weights and describe the tradeoffs the developer should consider.
Respond with only a JSON object with exactly these fields:
{"weight_accuracy": <number>, "weight_size": <number>, "weight_complexity": <number>, "justification": "<text>", "tradeoffs": "<text>"}"#;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ReasoningError {
    #[error("use case description is empty")]
    EmptyUseCase,
    #[error("repeats must be at least 1")]
    NoRepeats,
    #[error("language model unreachable: {0}")]
    Unreachable(String),
    #[error("malformed weight response: {0}")]
    Malformed(String),
    #[error("weight {name} = {value} outside [0, 1]")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("none of the {0} responses could be parsed")]
    AllUnparseable(u32),
}

pub trait LlmClient: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, ReasoningError>;
}

/// `POST {url}` with `{"prompt": ..}`, answered by `{"content": ..}`.
#[derive(Debug, Clone)]
pub struct HttpLlmClient {
    url: String,
    token: Option<String>,
    client: Client,
}

impl HttpLlmClient {
    pub fn new(url: impl Into<String>, token: Option<String>, timeout: Duration) -> Result<Self, ReasoningError> {
        let client = Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| ReasoningError::Unreachable(e.to_string()))?;
        Ok(Self {
            url: url.into(),
            token,
            client,
        })
    }

    pub fn from_env() -> Option<Result<Self, ReasoningError>> {
        let url = std::env::var(LLM_URL_ENV).ok().filter(|u| !u.is_empty())?;
        let token = std::env::var(LLM_TOKEN_ENV).ok().filter(|t| !t.is_empty());
        Some(Self::new(url, token, Duration::from_secs(60)))
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    prompt: &'a str,
}

#[derive(Deserialize)]
struct CompletionResponse {
    content: String,
}

impl LlmClient for HttpLlmClient {
    fn complete(&self, prompt: &str) -> Result<String, ReasoningError> {
        let mut request = self.client.post(&self.url).json(&CompletionRequest { prompt });
        if let Some(token) = &self.token {
            request = request.bearer_auth(token);
        }
        let response = request.send().map_err(|e| ReasoningError::Unreachable(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(ReasoningError::Unreachable(format!("status {status}")));
        }
        response
            .json::<CompletionResponse>()
            .map(|r| r.content)
            .map_err(|e| ReasoningError::Unreachable(format!("bad completion body: {e}")))
    }
}

/// Where suggestions come from.
#[derive(Clone)]
pub enum Reasoner {
    Llm(Arc<dyn LlmClient>),
    Fallback,
}

impl Reasoner {
    /// The HTTP client when `GREENRUNNER_LLM_URL` is set, otherwise the fallback table.
    pub fn from_env() -> Result<Self, ReasoningError> {
        match HttpLlmClient::from_env() {
            Some(client) => Ok(Reasoner::Llm(Arc::new(client?))),
            None => Ok(Reasoner::Fallback),
        }
    }
}

impl std::fmt::Debug for Reasoner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Reasoner::Llm(_) => f.write_str("Reasoner::Llm"),
            Reasoner::Fallback => f.write_str("Reasoner::Fallback"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuggestionSource {
    Llm,
    Fallback,
}

impl SuggestionSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            SuggestionSource::Llm => "llm",
            SuggestionSource::Fallback => "fallback",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightSuggestion {
    pub profile: WeightProfile,
    pub source: SuggestionSource,
    /// Parsed `(accuracy, size, complexity)` triple of every usable response.
    pub raw_responses: Vec<[f64; 3]>,
    /// Verbatim model output of every attempt, parseable or not, for replay.
    #[serde(default)]
    pub raw_texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedWeights {
    pub weights: [f64; 3],
    pub justification: String,
    pub tradeoffs: String,
}

/// Extracts the weight document from a model response. Text around the
/// outermost `{ ... }` (code fences, preambles) is ignored.
pub fn parse_weight_response(raw: &str) -> Result<ParsedWeights, ReasoningError> {
    let start = raw.find('{').ok_or_else(|| ReasoningError::Malformed("no JSON object found".into()))?;
    let end = raw.rfind('}').ok_or_else(|| ReasoningError::Malformed("no JSON object found".into()))?;
    if end < start {
        return Err(ReasoningError::Malformed("no JSON object found".into()));
    }
    let doc: Value = serde_json::from_str(&raw[start..=end]).map_err(|e| ReasoningError::Malformed(e.to_string()))?;

    let weight = |name: &'static str| -> Result<f64, ReasoningError> {
        let value = doc
            .get(name)
            .ok_or_else(|| ReasoningError::Malformed(format!("missing `{name}`")))?
            .as_f64()
            .ok_or_else(|| ReasoningError::Malformed(format!("`{name}` is not a number")))?;
        if !(0.0..=1.0).contains(&value) {
            return Err(ReasoningError::OutOfRange { name, value });
        }
        Ok(value)
    };
    let text = |name: &'static str| -> Result<String, ReasoningError> {
        doc.get(name)
            .and_then(Value::as_str)
            .map(str::to_owned)
            .ok_or_else(|| ReasoningError::Malformed(format!("missing text field `{name}`")))
    };
    Ok(ParsedWeights {
        weights: [weight("weight_accuracy")?, weight("weight_size")?, weight("weight_complexity")?],
        justification: text("justification")?,
        tradeoffs: text("tradeoffs")?,
    })
}

pub fn render_prompt(use_case: &str) -> String {
    PROMPT_TEMPLATE.replace("{use_case}", use_case.trim())
}

/// One entry of the keyword fallback table.
#[derive(Debug, Clone, Copy)]
pub struct FallbackRule {
    pub name: &'static str,
    /// A word of the use case matches when it starts with one of these.
    pub keywords: &'static [&'static str],
    pub weights: [f64; 3],
    pub tradeoffs: &'static str,
}

/// Checked in order; the first rule with a matching keyword wins.
pub const FALLBACK_RULES: [FallbackRule; 4] = [
    FallbackRule {
        name: "resource-constrained deployment",
        keywords: &[
            "drone", "uav", "edge", "embedded", "mobile", "phone", "smartphone", "battery", "iot",
            "microcontroller", "on-device", "raspberry", "wearable", "satellite",
        ],
        weights: [0.63, 0.25, 0.21],
        tradeoffs: "Smaller, cheaper models extend battery life and fit constrained hardware but usually give up some accuracy.",
    },
    FallbackRule {
        name: "latency-sensitive inference",
        keywords: &["real-time", "realtime", "latency", "autonomous", "vehicle", "video", "streaming", "interactive"],
        weights: [0.70, 0.10, 0.30],
        tradeoffs: "Lower complexity shortens inference time; the most accurate models are often too slow to respond in time.",
    },
    FallbackRule {
        name: "accuracy-critical decisions",
        keywords: &["medical", "diagnos", "clinical", "safety", "critical", "fraud", "security", "legal"],
        weights: [0.90, 0.05, 0.05],
        tradeoffs: "Errors are costly, so larger and slower models are acceptable if they are measurably more accurate.",
    },
    FallbackRule {
        name: "cost-sensitive serving",
        keywords: &["cost", "cheap", "budget", "storage", "bandwidth", "serverless", "download"],
        weights: [0.60, 0.30, 0.20],
        tradeoffs: "Compact models cut storage and transfer costs at some loss of accuracy.",
    },
];

/// Profile used when no rule matches.
pub const FALLBACK_DEFAULT: [f64; 3] = [0.80, 0.10, 0.10];

/// Deterministic profile from the keyword table.
pub fn fallback_profile(use_case: &str) -> WeightProfile {
    let lowered = use_case.to_lowercase();
    let words: Vec<&str> = lowered
        .split(|c: char| !(c.is_alphanumeric() || c == '-'))
        .filter(|w| !w.is_empty())
        .collect();
    for rule in &FALLBACK_RULES {
        if let Some(keyword) = rule
            .keywords
            .iter()
            .find(|k| words.iter().any(|w| w.starts_with(**k)))
        {
            let [a, s, c] = rule.weights;
            return WeightProfile {
                weight_acc: a,
                weight_size: s,
                weight_complexity: c,
                justification: format!(
                    "The use case mentions \"{keyword}\", indicating {}; accuracy stays the dominant metric while size and complexity are weighted {s:.2} and {c:.2}.",
                    rule.name
                ),
                tradeoffs: rule.tradeoffs.to_string(),
            };
        }
    }
    let [a, s, c] = FALLBACK_DEFAULT;
    WeightProfile {
        weight_acc: a,
        weight_size: s,
        weight_complexity: c,
        justification: "No deployment constraints were mentioned, so accuracy dominates with small penalties for size and complexity.".into(),
        tradeoffs: "Without stated constraints the most accurate model is preferred even if it is large.".into(),
    }
}

enum RepeatOutcome {
    Parsed(ParsedWeights),
    Failed,
    Unreachable(String),
}

/// Queries the reasoner `repeats` times and averages the weight triples.
///
/// Each repeat is retried up to `max_retries` times on an unparseable answer or
/// a failed call, and skipped after that. The suggestion fails only when every
/// repeat was skipped.
pub fn suggest_weights(
    use_case: &str,
    repeats: u32,
    reasoner: &Reasoner,
    max_retries: u32,
) -> Result<WeightSuggestion, ReasoningError> {
    if use_case.trim().is_empty() {
        return Err(ReasoningError::EmptyUseCase);
    }
    if repeats == 0 {
        return Err(ReasoningError::NoRepeats);
    }
    let client = match reasoner {
        Reasoner::Fallback => {
            let profile = fallback_profile(use_case);
            return Ok(WeightSuggestion {
                raw_responses: vec![profile.triple()],
                profile,
                source: SuggestionSource::Fallback,
                raw_texts: Vec::new(),
            });
        }
        Reasoner::Llm(client) => client,
    };

    let prompt = render_prompt(use_case);
    let results = parallel_map(repeats as usize, 4, |_| {
        let mut texts = Vec::new();
        let mut last = RepeatOutcome::Failed;
        for _ in 0..=max_retries {
            match client.complete(&prompt) {
                Ok(text) => {
                    let parsed = parse_weight_response(&text);
                    texts.push(text);
                    match parsed {
                        Ok(p) => return (RepeatOutcome::Parsed(p), texts),
                        Err(e) => {
                            tracing::debug!(error = %e, "discarding unparseable weight response");
                            last = RepeatOutcome::Failed;
                        }
                    }
                }
                Err(e) => last = RepeatOutcome::Unreachable(e.to_string()),
            }
        }
        (last, texts)
    });

    let mut parsed = Vec::new();
    let mut raw_texts = Vec::new();
    let mut unreachable = None;
    for (outcome, texts) in results {
        raw_texts.extend(texts);
        match outcome {
            RepeatOutcome::Parsed(p) => parsed.push(p),
            RepeatOutcome::Unreachable(e) => unreachable = Some(e),
            RepeatOutcome::Failed => {}
        }
    }
    if parsed.is_empty() {
        return Err(match unreachable {
            Some(e) if raw_texts.is_empty() => ReasoningError::Unreachable(e),
            _ => ReasoningError::AllUnparseable(repeats),
        });
    }
    let component = |k: usize| order_free_mean(parsed.iter().map(|p| p.weights[k]).collect()).clamp(0.0, 1.0);
    let profile = WeightProfile {
        weight_acc: component(0),
        weight_size: component(1),
        weight_complexity: component(2),
        justification: parsed[0].justification.clone(),
        tradeoffs: parsed[0].tradeoffs.clone(),
    };
    Ok(WeightSuggestion {
        profile,
        source: SuggestionSource::Llm,
        raw_responses: parsed.iter().map(|p| p.weights).collect(),
        raw_texts,
    })
}

/// Replays responses in order, for tests and for re-deriving stored suggestions.
pub struct ScriptedClient {
    responses: std::sync::Mutex<std::collections::VecDeque<Result<String, ReasoningError>>>,
}

impl ScriptedClient {
    pub fn new(responses: impl IntoIterator<Item = Result<String, ReasoningError>>) -> Self {
        Self {
            responses: std::sync::Mutex::new(responses.into_iter().collect()),
        }
    }

    pub fn from_texts<S: Into<String>>(texts: impl IntoIterator<Item = S>) -> Self {
        Self::new(texts.into_iter().map(|t| Ok(t.into())))
    }
}

impl LlmClient for ScriptedClient {
    fn complete(&self, _prompt: &str) -> Result<String, ReasoningError> {
        self.responses
            .lock()
            .expect("script lock")
            .pop_front()
            .unwrap_or_else(|| Err(ReasoningError::Unreachable("script exhausted".into())))
    }
}
