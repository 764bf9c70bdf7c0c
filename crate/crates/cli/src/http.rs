//! Local JSON API. Every handler parses its input, calls the matching
//! function in [`crate::service`] on a blocking thread, and returns the
//! canonical report JSON.

use std::net::SocketAddr;
use std::path::PathBuf;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::de::DeserializeOwned;
use serde_json::json;
use tower_http::services::ServeDir;

use crate::report::{to_json, Report};
use crate::service::{self, AnovaOptions, ServiceError, DEFAULT_REPLICATION_CAP};

pub const DEFAULT_PORT: u16 = 8707;
pub const PORT_ENV: &str = "RMPOWER_PORT";

#[derive(Debug, Clone)]
pub struct ServerConfig {
    pub replication_cap: usize,
    /// Directory holding the browser UI; a small built-in page is served at
    /// `/` when absent.
    pub ui_dir: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        ServerConfig {
            replication_cap: DEFAULT_REPLICATION_CAP,
            ui_dir: None,
        }
    }
}

/// Port from the command line, else `RMPOWER_PORT`, else 8707.
pub fn resolve_port(flag: Option<u16>) -> Result<u16, String> {
    if let Some(p) = flag {
        return Ok(p);
    }
    match std::env::var(PORT_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| format!("{PORT_ENV}='{v}' is not a valid port")),
        Err(_) => Ok(DEFAULT_PORT),
    }
}

struct ApiError {
    status: StatusCode,
    kind: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            kind: "bad_request",
            message: message.into(),
        }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let status = if e.is_unsatisfiable() {
            StatusCode::UNPROCESSABLE_ENTITY
        } else if e.is_internal() {
            StatusCode::INTERNAL_SERVER_ERROR
        } else {
            StatusCode::BAD_REQUEST
        };
        ApiError {
            status,
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({ "error": { "kind": self.kind, "message": self.message } });
        (self.status, axum::Json(body)).into_response()
    }
}

fn report_response(r: &Report) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], to_json(r)).into_response()
}

fn parse_body<T: DeserializeOwned>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

async fn run_blocking<F>(f: F) -> Result<Response, ApiError>
where
    F: FnOnce() -> Result<Report, ServiceError> + Send + 'static,
{
    let report = tokio::task::spawn_blocking(f).await.map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        kind: "internal",
        message: e.to_string(),
    })??;
    Ok(report_response(&report))
}

async fn health() -> Response {
    axum::Json(json!({ "status": "ok" })).into_response()
}

async fn power(body: Bytes) -> Result<Response, ApiError> {
    let req = parse_body(&body)?;
    run_blocking(move || service::power(&req)).await
}

async fn nsize(body: Bytes) -> Result<Response, ApiError> {
    let req = parse_body(&body)?;
    run_blocking(move || service::nsize(&req)).await
}

async fn mde(body: Bytes) -> Result<Response, ApiError> {
    let req = parse_body(&body)?;
    run_blocking(move || service::mde(&req)).await
}

async fn curve(body: Bytes) -> Result<Response, ApiError> {
    let req: service::CurveRequest = parse_body(&body)?;
    run_blocking(move || service::curve(&req)).await
}

async fn anova(Query(opts): Query<AnovaOptions>, body: Bytes) -> Result<Response, ApiError> {
    let text = String::from_utf8(body.to_vec()).map_err(|_| ApiError::bad_request("CSV body is not UTF-8"))?;
    run_blocking(move || service::anova(&text, &opts)).await
}

async fn simulate(State(cfg): State<ServerConfig>, body: Bytes) -> Result<Response, ApiError> {
    let req = parse_body(&body)?;
    let cap = cfg.replication_cap;
    run_blocking(move || service::simulate(&req, cap)).await
}

const INDEX: &str = "<!doctype html>
<html><head><meta charset=\"utf-8\"><title>rmpower</title></head>
<body>
<h1>rmpower</h1>
<p>The JSON API is available under <code>/api</code>:</p>
<ul>
<li>GET /api/health</li>
<li>POST /api/power, /api/nsize, /api/mde, /api/curve, /api/simulate (JSON body)</li>
<li>POST /api/anova (CSV body; query flags gg, hf, friedman, eps)</li>
</ul>
</body></html>
";

async fn index() -> Html<&'static str> {
    Html(INDEX)
}

pub fn router(cfg: ServerConfig) -> Router {
    let ui_dir = cfg.ui_dir.clone().filter(|d| d.is_dir());
    let api = Router::new()
        .route("/api/health", get(health))
        .route("/api/power", post(power))
        .route("/api/nsize", post(nsize))
        .route("/api/mde", post(mde))
        .route("/api/curve", post(curve))
        .route("/api/anova", post(anova))
        .route("/api/simulate", post(simulate))
        .with_state(cfg);
    match ui_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(index)),
    }
}

pub async fn serve(addr: SocketAddr, cfg: ServerConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(cfg))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
