//! Durable experiment records behind a small REST API.

pub mod http;
pub mod record;
pub mod service;
pub mod store;
pub mod testing;

pub use http::router;
pub use record::{ExperimentRecord, ExperimentState, Progress, RunSetup};
pub use service::{
    CreateRequest, DefaultOracleProvider, ExperimentService, FieldError, OracleProvider, RunHandle, ServiceError,
    ServiceOptions, INTERRUPTED,
};
pub use store::{FileStore, StoreError};
