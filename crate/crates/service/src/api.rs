//! HTTP routes. Handlers are thin: blocking work runs on the blocking pool
//! against the shared [`Service`].

use std::sync::Arc;
use std::time::Duration;

use axum::extract::rejection::{JsonRejection, QueryRejection};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use chrono::NaiveDate;
use iotrisk_core::enrich::FirmwareManifest;
use iotrisk_core::identify::{FingerprintSignature, SkewProfile};
use iotrisk_core::{DeviceCategory, DeviceId, RiskAssessment};
use serde::de::DeserializeOwned;
use serde::Deserialize;
use tokio::net::TcpListener;
use tracing::{error, info};

use crate::notify::{deliver, SubscriptionRequest};
use crate::schema::{schemas, ErrorBody, Health};
use crate::service::{ListFilter, Outbound, RegisterRequest, Service};
use crate::views::ViewVersion;
use crate::{render_assessment_json, ServiceConfig, ServiceError};

#[derive(Clone)]
pub struct AppState {
    pub service: Arc<Service>,
    pub http: reqwest::Client,
    pub webhook_timeout: Duration,
}

impl AppState {
    pub fn new(service: Arc<Service>) -> Self {
        let webhook_timeout = Duration::from_secs(service.config().webhook_timeout_secs);
        Self { service, http: reqwest::Client::new(), webhook_timeout }
    }
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::Validation(_) | ServiceError::BadRequest(_) | ServiceError::Ingest(_) => StatusCode::BAD_REQUEST,
            ServiceError::UnknownDevice(_)
            | ServiceError::UnknownCategory(_)
            | ServiceError::UnknownTarget(_)
            | ServiceError::UnknownSubscription(_)
            | ServiceError::NoAssessment(_) => StatusCode::NOT_FOUND,
            ServiceError::IdentificationFailed { .. } | ServiceError::Pipeline(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::Storage(_) | ServiceError::Config(_) | ServiceError::Internal(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        if status.is_server_error() {
            error!(error = %self, "request failed");
        }
        (status, Json(ErrorBody { error: self.code().into(), message: self.to_string() })).into_response()
    }
}

type ApiResult<T> = Result<T, ServiceError>;

fn body<T>(payload: Result<Json<T>, JsonRejection>) -> ApiResult<T> {
    payload.map(|Json(v)| v).map_err(|e| ServiceError::BadRequest(e.body_text()))
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> ApiResult<T> {
    q.map(|Query(v)| v).map_err(|e| ServiceError::BadRequest(e.body_text()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ServiceError::Internal(e.to_string()))?
}

fn assessment_response(a: &RiskAssessment) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], render_assessment_json(a)).into_response()
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/healthz", get(health))
        .route("/schemas", get(list_schemas))
        .route("/devices", post(register).get(list_devices))
        .route("/devices/{id}", get(get_device))
        .route("/devices/{id}/assessment", get(get_assessment))
        .route("/devices/{id}/assess", post(assess))
        .route("/devices/{id}/view", get(view))
        .route("/categories/{label}/compare", get(compare))
        .route("/subscriptions", post(subscribe).get(list_subscriptions))
        .route("/subscriptions/{id}", delete(unsubscribe))
        .route("/notifications", get(list_notifications))
        .route("/admin/ingest/feed", post(ingest_feed))
        .route("/admin/ingest/manifests", post(ingest_manifests))
        .route("/admin/ingest/signatures", post(ingest_signatures))
        .route("/admin/ingest/profiles", post(ingest_profiles))
        .with_state(state)
}

async fn health(State(s): State<AppState>) -> Json<Health> {
    let devices = s.service.store().read().devices.len();
    let kb = s.service.kb();
    Json(Health { status: "ok".into(), devices, feed_entries: kb.feed().len(), models: kb.models().count() })
}

async fn list_schemas() -> Response {
    Json(schemas()).into_response()
}

async fn register(State(s): State<AppState>, payload: Result<Json<RegisterRequest>, JsonRejection>) -> ApiResult<Response> {
    let req = body(payload)?;
    let reg = blocking(move || s.service.register(req)).await?;
    let status = if reg.created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, Json(reg)).into_response())
}

#[derive(Debug, Deserialize)]
struct ListQuery {
    owner: Option<String>,
    category: Option<DeviceCategory>,
}

async fn list_devices(State(s): State<AppState>, q: Result<Query<ListQuery>, QueryRejection>) -> ApiResult<Response> {
    let q = query(q)?;
    let rows = s.service.list_devices(&ListFilter { owner: q.owner, category: q.category });
    Ok(Json(rows).into_response())
}

async fn get_device(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(Json(s.service.get_device(&DeviceId::new(id))?).into_response())
}

async fn get_assessment(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    Ok(assessment_response(&s.service.get_assessment(&DeviceId::new(id))?))
}

#[derive(Debug, Deserialize)]
struct AsOfQuery {
    as_of: Option<NaiveDate>,
}

async fn assess(
    State(s): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<AsOfQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let as_of = query(q)?.as_of.unwrap_or_else(|| s.service.default_as_of());
    let service = s.service.clone();
    let run = blocking(move || service.run_assessment(&DeviceId::new(id), as_of)).await?;
    dispatch(&s, run.outbound);
    Ok(assessment_response(&run.assessment))
}

fn dispatch(s: &AppState, outbound: Vec<Outbound>) {
    for o in outbound {
        let (http, timeout) = (s.http.clone(), s.webhook_timeout);
        tokio::spawn(async move { deliver(&http, &o.sink, &o.notification, timeout).await });
    }
}

#[derive(Debug, Deserialize)]
struct ViewQuery {
    version: Option<String>,
}

async fn view(
    State(s): State<AppState>,
    Path(id): Path<String>,
    q: Result<Query<ViewQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let version = match query(q)?.version {
        None => ViewVersion::Guided,
        Some(v) => v.parse().map_err(ServiceError::BadRequest)?,
    };
    Ok(Json(s.service.get_view(&DeviceId::new(id), version)?).into_response())
}

async fn compare(
    State(s): State<AppState>,
    Path(label): Path<String>,
    q: Result<Query<AsOfQuery>, QueryRejection>,
) -> ApiResult<Response> {
    let as_of = query(q)?.as_of.unwrap_or_else(|| s.service.default_as_of());
    let service = s.service.clone();
    Ok(Json(blocking(move || service.compare_category(&label, as_of)).await?).into_response())
}

async fn subscribe(
    State(s): State<AppState>,
    payload: Result<Json<SubscriptionRequest>, JsonRejection>,
) -> ApiResult<Response> {
    let req = body(payload)?;
    let sub = blocking(move || s.service.subscribe(req)).await?;
    Ok((StatusCode::CREATED, Json(sub)).into_response())
}

async fn list_subscriptions(State(s): State<AppState>) -> Response {
    Json(s.service.subscriptions()).into_response()
}

async fn unsubscribe(State(s): State<AppState>, Path(id): Path<String>) -> ApiResult<StatusCode> {
    blocking(move || s.service.unsubscribe(&id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn list_notifications(State(s): State<AppState>) -> Response {
    Json(s.service.notifications()).into_response()
}

/// Like the other ingest endpoints, a lone entry is accepted as well as an array.
async fn ingest_feed(State(s): State<AppState>, text: String) -> ApiResult<Response> {
    let text = if text.trim_start().starts_with('{') { format!("[{text}]") } else { text };
    let report = blocking(move || s.service.ingest_feed_text(&text, "request body")).await?;
    Ok(Json(report).into_response())
}

/// Accepts a single object or an array of them.
fn one_or_many<T: DeserializeOwned>(text: &str) -> ApiResult<Vec<T>> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
    let result = if value.is_array() { serde_json::from_value(value) } else { serde_json::from_value(value).map(|v| vec![v]) };
    result.map_err(|e| ServiceError::Ingest(e.to_string()))
}

async fn ingest_manifests(State(s): State<AppState>, text: String) -> ApiResult<Response> {
    let manifests: Vec<FirmwareManifest> = one_or_many(&text)?;
    Ok(Json(blocking(move || s.service.ingest_manifests(manifests)).await?).into_response())
}

async fn ingest_signatures(State(s): State<AppState>, text: String) -> ApiResult<Response> {
    let signatures: Vec<FingerprintSignature> = one_or_many(&text)?;
    Ok(Json(blocking(move || s.service.ingest_signatures(signatures)).await?).into_response())
}

async fn ingest_profiles(State(s): State<AppState>, text: String) -> ApiResult<Response> {
    let profiles: Vec<SkewProfile> = one_or_many(&text)?;
    Ok(Json(blocking(move || s.service.ingest_profiles(profiles)).await?).into_response())
}

/// Binds the configured address and serves until Ctrl-C.
pub async fn serve(config: ServiceConfig) -> Result<(), ServiceError> {
    let listen = config.listen.clone();
    let service = tokio::task::spawn_blocking(move || Service::open(config))
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))??;
    let listener = TcpListener::bind(&listen).await.map_err(|e| ServiceError::Config(format!("bind {listen}: {e}")))?;
    info!(address = %listen, "listening");
    axum::serve(listener, router(AppState::new(Arc::new(service))))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
            info!("shutting down");
        })
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))
}
