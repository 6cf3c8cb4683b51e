//! HTTP front ends: the TEDS authoring service (backed by the directory)
//! and the NCAP control API. Errors are JSON bodies
//! `{"error": <kind>, "message": <text>}`.

use std::net::SocketAddr;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use snaas_core::authoring::{
    create_template, fetch_description, parse_description, register_device, render_description,
    render_template, AuthoringError,
};
use snaas_core::ident::parse_uuid_hex;
use snaas_core::ncap::{ChannelUpdate, Ncap, NcapError};
use snaas_core::registry::RegistryClient;
use snaas_core::teds::TedsClass;
use tokio::net::TcpListener;
use uuid::Uuid;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, kind: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            kind,
            message: message.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "error": self.kind, "message": self.message })),
        )
            .into_response()
    }
}

impl From<AuthoringError> for ApiError {
    fn from(e: AuthoringError) -> Self {
        let (status, kind) = match &e {
            AuthoringError::UnknownClass(_) => (StatusCode::NOT_FOUND, "unknown_class"),
            AuthoringError::SchemaError { .. } => (StatusCode::BAD_REQUEST, "schema_error"),
            AuthoringError::ConstraintViolation { .. } => {
                (StatusCode::UNPROCESSABLE_ENTITY, "constraint_violation")
            }
            AuthoringError::InvalidRecord(_) => {
                (StatusCode::UNPROCESSABLE_ENTITY, "invalid_record")
            }
            AuthoringError::RegistryUnreachable(_) => {
                (StatusCode::BAD_GATEWAY, "registry_unreachable")
            }
            AuthoringError::UnknownDevice(_) => (StatusCode::NOT_FOUND, "unknown_device"),
            AuthoringError::StoreRejected { .. } => (StatusCode::BAD_GATEWAY, "store_rejected"),
        };
        ApiError::new(status, kind, e.to_string())
    }
}

impl From<NcapError> for ApiError {
    fn from(e: NcapError) -> Self {
        let (status, kind) = match &e {
            NcapError::UnknownDevice(_) => (StatusCode::NOT_FOUND, "unknown_device"),
            NcapError::UnknownChannel { .. } => (StatusCode::NOT_FOUND, "unknown_channel"),
            NcapError::NotConnected(_) => (StatusCode::CONFLICT, "not_connected"),
            NcapError::InvalidInterval => (StatusCode::BAD_REQUEST, "invalid_interval"),
            NcapError::InvalidDeadband => (StatusCode::BAD_REQUEST, "invalid_deadband"),
            NcapError::InvalidPattern(_) => (StatusCode::BAD_REQUEST, "invalid_pattern"),
            NcapError::TimUnresponsive { .. } => (StatusCode::GATEWAY_TIMEOUT, "tim_unresponsive"),
            NcapError::RegistryUnreachable(_) => (StatusCode::BAD_GATEWAY, "registry_unreachable"),
            NcapError::InvalidTeds { .. } => (StatusCode::BAD_GATEWAY, "invalid_teds"),
            NcapError::CacheIo(_) => (StatusCode::INTERNAL_SERVER_ERROR, "cache_io"),
            NcapError::BindFailure { .. } | NcapError::Packet(_) => {
                (StatusCode::INTERNAL_SERVER_ERROR, "internal")
            }
        };
        ApiError::new(status, kind, e.to_string())
    }
}

fn uuid_param(s: &str) -> Result<Uuid, ApiError> {
    parse_uuid_hex(s).ok_or_else(|| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "bad_uuid",
            format!("{s:?} is not 32 hex digits"),
        )
    })
}

/// A class name (`meta`, `channel`, `name`, `phy`) or two hex digits.
pub fn class_code(selector: &str) -> Option<u8> {
    if let Some(c) = TedsClass::ALL
        .iter()
        .find(|c| c.name().eq_ignore_ascii_case(selector))
    {
        return Some(c.code());
    }
    let hex = selector.strip_prefix("0x").unwrap_or(selector);
    if hex.len() == 2 {
        return u8::from_str_radix(hex, 16).ok();
    }
    None
}

fn xml(body: String) -> Response {
    (
        [(header::CONTENT_TYPE, "application/xml; charset=utf-8")],
        body,
    )
        .into_response()
}

async fn healthz() -> &'static str {
    "ok\n"
}

async fn template(Path(class): Path<String>) -> Result<Response, ApiError> {
    let code = class_code(&class).ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "unknown_class",
            format!("no TEDS class {class:?}"),
        )
    })?;
    Ok(xml(render_template(&create_template(code)?)))
}

async fn register(
    State(registry): State<RegistryClient>,
    body: Bytes,
) -> Result<Response, ApiError> {
    let text = std::str::from_utf8(&body)
        .map_err(|_| ApiError::new(StatusCode::BAD_REQUEST, "schema_error", "body is not UTF-8"))?;
    let desc = parse_description(text)?;
    let receipt = register_device(&desc, &registry).await?;
    Ok((StatusCode::CREATED, Json(receipt)).into_response())
}

async fn description(
    State(registry): State<RegistryClient>,
    Path(uuid): Path<String>,
) -> Result<Response, ApiError> {
    let uuid = uuid_param(&uuid)?;
    let desc = fetch_description(uuid, &registry).await?;
    Ok(xml(render_description(&desc)?))
}

/// Routes of the authoring service, storing into the directory behind
/// `registry`.
pub fn authoring_router(registry: RegistryClient) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/templates/{class}", get(template))
        .route("/devices", post(register))
        .route("/devices/{uuid}", get(description))
        .with_state(registry)
}

async fn devices(State(ncap): State<Ncap>) -> Response {
    Json(ncap.devices()).into_response()
}

async fn device(State(ncap): State<Ncap>, Path(uuid): Path<String>) -> Result<Response, ApiError> {
    let uuid = uuid_param(&uuid)?;
    let detail = ncap.device(uuid).ok_or(NcapError::UnknownDevice(uuid))?;
    Ok(Json(detail).into_response())
}

async fn update_channel(
    State(ncap): State<Ncap>,
    Path((uuid, channel)): Path<(String, u8)>,
    Json(update): Json<ChannelUpdate>,
) -> Result<Response, ApiError> {
    let uuid = uuid_param(&uuid)?;
    let state = ncap.apply_update(uuid, channel, &update).await?;
    Ok(Json(state).into_response())
}

#[derive(Deserialize)]
struct LatencyQuery {
    format: Option<String>,
}

async fn latency(
    State(ncap): State<Ncap>,
    Query(q): Query<LatencyQuery>,
) -> Result<Response, ApiError> {
    match q.format.as_deref().unwrap_or("json") {
        "json" => Ok(Json(ncap.latency().snapshot()).into_response()),
        "csv" => Ok((
            [(header::CONTENT_TYPE, "text/csv; charset=utf-8")],
            ncap.latency().to_csv(),
        )
            .into_response()),
        other => Err(ApiError::new(
            StatusCode::BAD_REQUEST,
            "bad_format",
            format!("format must be json or csv, not {other:?}"),
        )),
    }
}

async fn flush_cache(State(ncap): State<Ncap>) -> Result<Response, ApiError> {
    let flushed = ncap.flush_cache()?;
    Ok(Json(json!({ "flushed": flushed })).into_response())
}

/// Routes of the NCAP control API.
pub fn control_router(ncap: Ncap) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/devices", get(devices))
        .route("/devices/{uuid}", get(device))
        .route("/devices/{uuid}/channels/{id}", post(update_channel))
        .route("/metrics/latency", get(latency))
        .route("/cache/flush", post(flush_cache))
        .with_state(ncap)
}

/// Binds `addr` and serves `router` in the background. Returns the bound
/// address.
pub async fn spawn_http(addr: &str, router: Router) -> std::io::Result<SocketAddr> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    tokio::spawn(async move {
        if let Err(e) = axum::serve(listener, router).await {
            tracing::error!(error = %e, "http server stopped");
        }
    });
    Ok(local)
}

pub fn init_tracing() {
    let filter =
        tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into());
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}
