//! REST front end over [`ExperimentService`].

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use greenrunner_core::WeightProfile;
use serde::{Deserialize, Serialize};
use serde_json::json;
use uuid::Uuid;

use crate::record::{ExperimentRecord, ExperimentState, Progress};
use crate::service::{CreateRequest, ExperimentService, FieldError, ServiceError};

pub fn router(service: ExperimentService) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/experiments", post(create).get(list))
        .route("/experiments/{id}", get(fetch))
        .route("/experiments/{id}/stage", post(stage))
        .route("/experiments/{id}/weights", patch(update_weights))
        .route("/experiments/{id}/run", post(run))
        .route("/experiments/{id}/report", get(report))
        .with_state(service)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub fields: Vec<FieldError>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

pub struct ApiError(ServiceError);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        ApiError(e)
    }
}

fn bad_request(message: String) -> ApiError {
    ApiError(ServiceError::Validation(vec![FieldError {
        field: "body".into(),
        message,
    }]))
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (status, kind) = match &self.0 {
            ServiceError::NotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            ServiceError::Validation(_) => (StatusCode::BAD_REQUEST, "validation"),
            ServiceError::Transition { .. } | ServiceError::WrongState { .. } => (StatusCode::CONFLICT, "state"),
            ServiceError::RunFailed { .. } => (StatusCode::CONFLICT, "run_failed"),
            ServiceError::Upstream(_) => (StatusCode::BAD_GATEWAY, "upstream"),
            ServiceError::Store(_) => (StatusCode::INTERNAL_SERVER_ERROR, "store"),
            ServiceError::ShuttingDown => (StatusCode::SERVICE_UNAVAILABLE, "shutting_down"),
        };
        let body = ErrorBody {
            error: kind.into(),
            message: self.0.to_string(),
            fields: match &self.0 {
                ServiceError::Validation(fields) => fields.clone(),
                _ => Vec::new(),
            },
            diagnostic: match &self.0 {
                ServiceError::RunFailed { diagnostic, .. } => Some(diagnostic.clone()),
                _ => None,
            },
        };
        (status, Json(body)).into_response()
    }
}

/// Weight sliders as sent by the staging page.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsUpdate {
    #[serde(alias = "weight_accuracy")]
    pub weight_acc: f64,
    pub weight_size: f64,
    pub weight_complexity: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RunStarted {
    pub id: Uuid,
    pub state: ExperimentState,
    pub progress: Progress,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RecordSummary {
    pub id: Uuid,
    pub state: ExperimentState,
    pub use_case: String,
    pub n_models: usize,
    pub progress: Progress,
    pub created_at: chrono::DateTime<chrono::Utc>,
    pub updated_at: chrono::DateTime<chrono::Utc>,
}

impl From<&ExperimentRecord> for RecordSummary {
    fn from(r: &ExperimentRecord) -> Self {
        Self {
            id: r.id,
            state: r.state,
            use_case: r.use_case.clone(),
            n_models: r.repository.len(),
            progress: r.progress,
            created_at: r.created_at,
            updated_at: r.updated_at,
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Runs blocking service work off the async executor.
async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(ServiceError::Upstream(format!("worker failed: {e}"))))?
        .map_err(ApiError)
}

fn parse_id(raw: &str) -> ApiResult<Uuid> {
    Uuid::parse_str(raw).map_err(|_| ApiError(ServiceError::NotFound(Uuid::nil())))
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn create(State(service): State<ExperimentService>, body: Bytes) -> ApiResult<(StatusCode, Json<ExperimentRecord>)> {
    let request: CreateRequest = serde_json::from_slice(&body).map_err(|e| bad_request(e.to_string()))?;
    let record = blocking(move || service.create(request)).await?;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn list(State(service): State<ExperimentService>) -> ApiResult<Json<Vec<RecordSummary>>> {
    let records = blocking(move || Ok(service.list())).await?;
    Ok(Json(records.iter().map(RecordSummary::from).collect()))
}

async fn fetch(State(service): State<ExperimentService>, Path(id): Path<String>) -> ApiResult<Json<ExperimentRecord>> {
    let id = parse_id(&id)?;
    Ok(Json(blocking(move || service.get(id)).await?))
}

async fn stage(State(service): State<ExperimentService>, Path(id): Path<String>) -> ApiResult<Json<ExperimentRecord>> {
    let id = parse_id(&id)?;
    Ok(Json(blocking(move || service.stage(id)).await?))
}

async fn update_weights(
    State(service): State<ExperimentService>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Json<ExperimentRecord>> {
    let id = parse_id(&id)?;
    let update: WeightsUpdate = serde_json::from_slice(&body).map_err(|e| bad_request(e.to_string()))?;
    let weights = WeightProfile::new(update.weight_acc, update.weight_size, update.weight_complexity);
    Ok(Json(blocking(move || service.update_weights(id, weights)).await?))
}

async fn run(State(service): State<ExperimentService>, Path(id): Path<String>) -> ApiResult<Json<RunStarted>> {
    let id = parse_id(&id)?;
    let record = blocking(move || {
        // The handle is dropped; the run stores its own outcome.
        service.start_run(id)?;
        service.get(id)
    })
    .await?;
    Ok(Json(RunStarted {
        id,
        state: record.state,
        progress: record.progress,
    }))
}

async fn report(
    State(service): State<ExperimentService>,
    Path(id): Path<String>,
) -> ApiResult<Json<greenrunner_core::ExperimentReport>> {
    let id = parse_id(&id)?;
    Ok(Json(blocking(move || service.get_results(id)).await?))
}
