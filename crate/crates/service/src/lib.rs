//! Device registry, assessment orchestration and view payloads behind an
//! HTTP/JSON API.

use std::io;
use std::path::Path;

use iotrisk_core::kb::KbError;
use iotrisk_core::pipeline::PipelineError;
use iotrisk_core::RiskAssessment;
use thiserror::Error;

pub mod api;
pub mod config;
pub mod notify;
pub mod schema;
pub mod service;
pub mod store;
pub mod views;

pub use config::ServiceConfig;
pub use service::Service;

#[derive(Debug, Clone, Error)]
pub enum ServiceError {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("unknown device {0}")]
    UnknownDevice(String),
    #[error("unknown category {0:?}")]
    UnknownCategory(String),
    #[error("unknown subscription target: {0}")]
    UnknownTarget(String),
    #[error("unknown subscription {0}")]
    UnknownSubscription(String),
    #[error("device {0} has no assessment")]
    NoAssessment(String),
    #[error("identification failed: {reason}")]
    IdentificationFailed { reason: String },
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("ingest failed: {0}")]
    Ingest(String),
    #[error("pipeline error: {0}")]
    Pipeline(String),
    #[error("storage error: {0}")]
    Storage(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ServiceError {
    pub fn storage(path: &Path, err: io::Error) -> Self {
        ServiceError::Storage(format!("{}: {err}", path.display()))
    }

    /// Stable machine-readable code used in HTTP error bodies.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::Validation(_) => "validation",
            ServiceError::UnknownDevice(_) => "unknown_device",
            ServiceError::UnknownCategory(_) => "unknown_category",
            ServiceError::UnknownTarget(_) => "unknown_target",
            ServiceError::UnknownSubscription(_) => "unknown_subscription",
            ServiceError::NoAssessment(_) => "no_assessment",
            ServiceError::IdentificationFailed { .. } => "identification_failed",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Ingest(_) => "ingest",
            ServiceError::Pipeline(_) => "pipeline",
            ServiceError::Storage(_) => "storage",
            ServiceError::Config(_) => "config",
            ServiceError::Internal(_) => "internal",
        }
    }

    /// True when the caller supplied bad or missing data rather than the
    /// service failing.
    pub fn is_data_error(&self) -> bool {
        !matches!(self, ServiceError::Storage(_) | ServiceError::Config(_) | ServiceError::Internal(_))
    }
}

impl From<KbError> for ServiceError {
    fn from(e: KbError) -> Self {
        match e {
            KbError::UnknownCategory(c) => ServiceError::UnknownCategory(c),
            other => ServiceError::Pipeline(other.to_string()),
        }
    }
}

impl From<PipelineError> for ServiceError {
    fn from(e: PipelineError) -> Self {
        match e {
            PipelineError::NoEvidence(_) => ServiceError::IdentificationFailed { reason: e.to_string() },
            PipelineError::Kb(kb) => kb.into(),
            other => ServiceError::Pipeline(other.to_string()),
        }
    }
}

/// Canonical JSON rendering of an assessment, shared by the CLI and the
/// HTTP API so both produce identical bytes.
pub fn render_assessment_json(assessment: &RiskAssessment) -> String {
    let mut out = serde_json::to_string_pretty(assessment).expect("assessment serializes");
    out.push('\n');
    out
}
