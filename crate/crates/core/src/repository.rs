//! Candidate model repository: the arms of an experiment.
//!
//! Repository documents are JSON:
//!
//! ```json
//! { "version": 1,
//!   "models": [ { "id": "mobilenet_v3", "size_mb": 22.0,
//!                 "complexity_mmac": 229.0, "benchmark_accuracy": 0.67 } ] }
//! ```
//!
//! Arm index `i` is the `i`-th entry of `models`.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::reward::RewardExtents;

pub const REPOSITORY_VERSION: u64 = 1;

const CARD_FIELDS: [&str; 4] = ["id", "size_mb", "complexity_mmac", "benchmark_accuracy"];

#[derive(Debug, Error)]
pub enum RepositoryError {
    #[error("malformed repository document: {0}")]
    Malformed(String),
    #[error("unsupported repository version {0}")]
    UnsupportedVersion(u64),
    #[error("repository contains no models")]
    Empty,
    #[error("model {id}: missing field `{field}`")]
    MissingField { id: String, field: &'static str },
    #[error("model {id}: unknown field `{field}`")]
    UnknownField { id: String, field: String },
    #[error("duplicate model id {0}")]
    DuplicateId(String),
    #[error("model {id}: size_mb must be positive, got {value}")]
    NonPositiveSize { id: String, value: f64 },
    #[error("model {id}: complexity_mmac must be positive, got {value}")]
    NonPositiveComplexity { id: String, value: f64 },
    #[error("model {id}: benchmark_accuracy {value} outside [0, 1]")]
    AccuracyOutOfRange { id: String, value: f64 },
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Static metadata of one candidate model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCard {
    pub id: String,
    /// Megabytes on disk.
    pub size_mb: f64,
    /// Millions of multiply-accumulate operations per inference call.
    pub complexity_mmac: f64,
    /// Accuracy reported on the benchmark (source) dataset.
    pub benchmark_accuracy: f64,
}

impl ModelCard {
    pub fn new(id: impl Into<String>, size_mb: f64, complexity_mmac: f64, benchmark_accuracy: f64) -> Self {
        Self {
            id: id.into(),
            size_mb,
            complexity_mmac,
            benchmark_accuracy,
        }
    }

    pub fn validate(&self) -> Result<(), RepositoryError> {
        if !self.size_mb.is_finite() || self.size_mb <= 0.0 {
            return Err(RepositoryError::NonPositiveSize {
                id: self.id.clone(),
                value: self.size_mb,
            });
        }
        if !self.complexity_mmac.is_finite() || self.complexity_mmac <= 0.0 {
            return Err(RepositoryError::NonPositiveComplexity {
                id: self.id.clone(),
                value: self.complexity_mmac,
            });
        }
        if !(0.0..=1.0).contains(&self.benchmark_accuracy) {
            return Err(RepositoryError::AccuracyOutOfRange {
                id: self.id.clone(),
                value: self.benchmark_accuracy,
            });
        }
        Ok(())
    }
}

/// On-disk form of a repository.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepositoryDocument {
    pub version: u64,
    pub models: Vec<ModelCard>,
}

/// Validated, immutable candidate set with cached reward extents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RepositoryDocument", into = "RepositoryDocument")]
pub struct Repository {
    models: Vec<ModelCard>,
    extents: RewardExtents,
    index: HashMap<String, usize>,
}

impl Repository {
    pub fn new(models: Vec<ModelCard>) -> Result<Self, RepositoryError> {
        if models.is_empty() {
            return Err(RepositoryError::Empty);
        }
        let mut index = HashMap::with_capacity(models.len());
        for (i, card) in models.iter().enumerate() {
            card.validate()?;
            if index.insert(card.id.clone(), i).is_some() {
                return Err(RepositoryError::DuplicateId(card.id.clone()));
            }
        }
        let extents = compute_extents(&models)?;
        Ok(Self {
            models,
            extents,
            index,
        })
    }

    pub fn from_path(path: impl AsRef<Path>, strict: bool) -> Result<Self, RepositoryError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| RepositoryError::Io {
            path: path.display().to_string(),
            source,
        })?;
        load_repository(&text, strict)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), RepositoryError> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.to_document())
            .map_err(|e| RepositoryError::Malformed(e.to_string()))?;
        std::fs::write(path, text + "\n").map_err(|source| RepositoryError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn to_document(&self) -> RepositoryDocument {
        RepositoryDocument {
            version: REPOSITORY_VERSION,
            models: self.models.clone(),
        }
    }

    pub fn models(&self) -> &[ModelCard] {
        &self.models
    }

    pub fn len(&self) -> usize {
        self.models.len()
    }

    pub fn is_empty(&self) -> bool {
        self.models.is_empty()
    }

    pub fn extents(&self) -> &RewardExtents {
        &self.extents
    }

    pub fn card(&self, arm: usize) -> &ModelCard {
        &self.models[arm]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn get(&self, id: &str) -> Option<&ModelCard> {
        self.index_of(id).map(|i| &self.models[i])
    }
}

impl TryFrom<RepositoryDocument> for Repository {
    type Error = RepositoryError;

    fn try_from(doc: RepositoryDocument) -> Result<Self, Self::Error> {
        if doc.version != REPOSITORY_VERSION {
            return Err(RepositoryError::UnsupportedVersion(doc.version));
        }
        Repository::new(doc.models)
    }
}

impl From<Repository> for RepositoryDocument {
    fn from(repo: Repository) -> Self {
        RepositoryDocument {
            version: REPOSITORY_VERSION,
            models: repo.models,
        }
    }
}

/// Parses and validates a repository document.
///
/// With `strict`, unknown fields (top-level or per model) are rejected;
/// otherwise they are ignored.
pub fn load_repository(text: &str, strict: bool) -> Result<Repository, RepositoryError> {
    let root: Value = serde_json::from_str(text).map_err(|e| RepositoryError::Malformed(e.to_string()))?;
    let root = root
        .as_object()
        .ok_or_else(|| RepositoryError::Malformed("document is not an object".into()))?;

    if strict {
        if let Some(field) = root.keys().find(|k| *k != "version" && *k != "models") {
            return Err(RepositoryError::UnknownField {
                id: "<document>".into(),
                field: field.clone(),
            });
        }
    }
    let version = root
        .get("version")
        .and_then(Value::as_u64)
        .ok_or_else(|| RepositoryError::Malformed("missing or non-integer `version`".into()))?;
    if version != REPOSITORY_VERSION {
        return Err(RepositoryError::UnsupportedVersion(version));
    }
    let entries = root
        .get("models")
        .and_then(Value::as_array)
        .ok_or_else(|| RepositoryError::Malformed("missing `models` array".into()))?;

    let mut models = Vec::with_capacity(entries.len());
    for (position, entry) in entries.iter().enumerate() {
        models.push(parse_card(position, entry, strict)?);
    }
    Repository::new(models)
}

fn parse_card(position: usize, entry: &Value, strict: bool) -> Result<ModelCard, RepositoryError> {
    let object = entry
        .as_object()
        .ok_or_else(|| RepositoryError::Malformed(format!("models[{position}] is not an object")))?;
    let id = match object.get("id") {
        Some(Value::String(id)) => id.clone(),
        Some(_) => return Err(RepositoryError::Malformed(format!("models[{position}].id is not a string"))),
        None => {
            return Err(RepositoryError::MissingField {
                id: format!("models[{position}]"),
                field: "id",
            })
        }
    };
    if strict {
        if let Some(field) = object.keys().find(|k| !CARD_FIELDS.contains(&k.as_str())) {
            return Err(RepositoryError::UnknownField {
                id,
                field: field.clone(),
            });
        }
    }
    let number = |field: &'static str| -> Result<f64, RepositoryError> {
        match object.get(field) {
            Some(value) => value
                .as_f64()
                .ok_or_else(|| RepositoryError::Malformed(format!("model {id}: `{field}` is not a number"))),
            None => Err(RepositoryError::MissingField { id: id.clone(), field }),
        }
    };
    Ok(ModelCard {
        size_mb: number("size_mb")?,
        complexity_mmac: number("complexity_mmac")?,
        benchmark_accuracy: number("benchmark_accuracy")?,
        id,
    })
}

/// Min/max of size and complexity over the candidate set.
pub fn compute_extents(models: &[ModelCard]) -> Result<RewardExtents, RepositoryError> {
    let first = models.first().ok_or(RepositoryError::Empty)?;
    let mut extents = RewardExtents {
        min_size: first.size_mb,
        max_size: first.size_mb,
        min_complexity: first.complexity_mmac,
        max_complexity: first.complexity_mmac,
    };
    for card in &models[1..] {
        extents.min_size = extents.min_size.min(card.size_mb);
        extents.max_size = extents.max_size.max(card.size_mb);
        extents.min_complexity = extents.min_complexity.min(card.complexity_mmac);
        extents.max_complexity = extents.max_complexity.max(card.complexity_mmac);
    }
    Ok(extents)
}
