//! HTTP API.
//!
//! | route | result |
//! |---|---|
//! | `GET /api/runs` | run descriptors |
//! | `GET /api/runs/{id}` | overview payload |
//! | `GET /api/runs/{id}/configs/{config_id}` | configuration detail |
//! | `POST /api/groups` | `{group_id}` |
//! | `POST /api/jobs` | `{job_id, state}` |
//! | `GET /api/jobs/{job_id}` | `{job_id, plugin, state, cached, result?, error?}` |
//!
//! Errors are `{"error": {"code", "message", "field"?}}`.

use std::path::{Component, Path as FsPath, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::value::RawValue;
use serde_json::{json, Map, Value};

use crate::error::RequestError;
use crate::jobs::JobQueue;
use crate::overview::{config_detail, descriptor, overview};
use crate::plugins::prepare;
use crate::registry::Registry;

pub struct AppState {
    pub registry: Arc<Registry>,
    pub jobs: Arc<JobQueue>,
    /// Directory with the dashboard's built assets, served at `/`.
    pub assets_dir: Option<PathBuf>,
}

pub struct ApiError {
    status: StatusCode,
    body: RequestError,
}

impl From<RequestError> for ApiError {
    fn from(body: RequestError) -> Self {
        let status = if body.is_not_found() {
            StatusCode::NOT_FOUND
        } else {
            StatusCode::BAD_REQUEST
        };
        Self { status, body }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.body }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/runs", get(list_runs))
        .route("/api/runs/{id}", get(get_run))
        .route("/api/runs/{id}/configs/{config_id}", get(get_config))
        .route("/api/groups", post(create_group))
        .route("/api/jobs", post(submit_job))
        .route("/api/jobs/{job_id}", get(job_status))
        .fallback(static_files)
        .with_state(state)
}

fn unknown_run(id: &str) -> ApiError {
    RequestError::new("unknown_run", format!("unknown run `{id}`")).into()
}

async fn list_runs(State(s): State<Arc<AppState>>) -> Json<Vec<Value>> {
    Json(
        s.registry
            .list()
            .iter()
            .map(|(h, run, live)| descriptor(h, run, *live))
            .collect(),
    )
}

async fn get_run(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let run = s.registry.get(&id).ok_or_else(|| unknown_run(&id))?;
    Ok(Json(overview(&id, &run).map_err(RequestError::from)?))
}

async fn get_config(
    State(s): State<Arc<AppState>>,
    Path((id, config_id)): Path<(String, String)>,
) -> ApiResult<Json<Value>> {
    let run = s.registry.get(&id).ok_or_else(|| unknown_run(&id))?;
    if run.config(&config_id).is_none() {
        return Err(RequestError::new(
            "unknown_config",
            format!("run `{id}` has no configuration `{config_id}`"),
        )
        .into());
    }
    Ok(Json(config_detail(&id, &run, &config_id).map_err(RequestError::from)?))
}

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| {
        RequestError::new("invalid_request", format!("malformed request body: {e}")).into()
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GroupRequest {
    name: String,
    run_ids: Vec<String>,
}

async fn create_group(State(s): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: GroupRequest = parse_body(&body)?;
    let group = s.registry.create_group(&req.name, &req.run_ids)?;
    Ok((
        StatusCode::CREATED,
        Json(json!({ "group_id": group.id, "name": group.name, "run_ids": group.members })),
    ))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JobRequest {
    plugin: String,
    run_ids: Vec<String>,
    #[serde(default)]
    params: Map<String, Value>,
}

async fn submit_job(State(s): State<Arc<AppState>>, body: Bytes) -> ApiResult<(StatusCode, Json<Value>)> {
    let req: JobRequest = parse_body(&body)?;
    req.plugin.parse::<crate::plugins::Plugin>()?;
    let (runs, saw_group) = s.registry.resolve(&req.run_ids)?;
    let spec = prepare(&req.plugin, runs, saw_group, &req.params)?;
    let jobs = s.jobs.clone();
    let id = tokio::task::spawn_blocking(move || jobs.submit(spec))
        .await
        .map_err(|e| RequestError::new("internal", e.to_string()))?;
    let state = s.jobs.status(&id).map(|v| v.state);
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": id, "state": state }))))
}

async fn job_status(State(s): State<Arc<AppState>>, Path(job_id): Path<String>) -> ApiResult<Response> {
    let view = s
        .jobs
        .status(&job_id)
        .ok_or_else(|| ApiError::from(RequestError::new("unknown_job", format!("unknown job `{job_id}`"))))?;
    let mut body = json!({
        "job_id": view.id,
        "plugin": view.plugin,
        "state": view.state,
        "cached": view.cached,
    });
    if let Some(e) = &view.error {
        body["error"] = json!(e);
    }
    let Some(result) = view.result else {
        return Ok(Json(body).into_response());
    };
    // splice the stored payload bytes in unchanged
    let raw = RawValue::from_string(String::from_utf8_lossy(&result).into_owned())
        .map_err(|e| RequestError::new("internal", format!("stored payload is not JSON: {e}")))?;
    let mut map: Map<String, Value> = match body {
        Value::Object(m) => m,
        _ => unreachable!("built as an object"),
    };
    map.remove("result");
    #[derive(serde::Serialize)]
    struct WithResult<'a> {
        #[serde(flatten)]
        head: &'a Map<String, Value>,
        result: &'a RawValue,
    }
    let bytes = serde_json::to_vec(&WithResult {
        head: &map,
        result: &raw,
    })
    .map_err(|e| RequestError::new("internal", e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

const PLACEHOLDER: &str = "<!doctype html>
<html><head><meta charset=\"utf-8\"><title>hpolens</title></head>
<body><h1>hpolens</h1>
<p>The dashboard assets are not installed. The JSON API is available under <code>/api</code>:
<a href=\"/api/runs\">/api/runs</a>.</p></body></html>
";

fn content_type(path: &FsPath) -> &'static str {
    match path.extension().and_then(|e| e.to_str()).unwrap_or("") {
        "html" => "text/html; charset=utf-8",
        "js" | "mjs" => "text/javascript",
        "css" => "text/css",
        "json" | "map" => "application/json",
        "svg" => "image/svg+xml",
        "png" => "image/png",
        "ico" => "image/x-icon",
        "woff2" => "font/woff2",
        _ => "application/octet-stream",
    }
}

async fn static_files(State(s): State<Arc<AppState>>, uri: Uri) -> Response {
    let path = uri.path();
    if path.starts_with("/api") {
        return ApiError::from(RequestError::new("unknown_route", format!("no route for {path}")).field("path"))
            .into_response();
    }
    let Some(root) = &s.assets_dir else {
        if path == "/" || path == "/index.html" {
            return ([(header::CONTENT_TYPE, "text/html; charset=utf-8")], PLACEHOLDER).into_response();
        }
        return StatusCode::NOT_FOUND.into_response();
    };
    let relative = FsPath::new(path.trim_start_matches('/'));
    if relative.components().any(|c| !matches!(c, Component::Normal(_))) {
        return StatusCode::NOT_FOUND.into_response();
    }
    let mut file = root.join(relative);
    if path == "/" || !file.is_file() {
        // client-side routes fall back to the app shell
        file = root.join("index.html");
    }
    match tokio::fs::read(&file).await {
        Ok(bytes) => ([(header::CONTENT_TYPE, content_type(&file))], bytes).into_response(),
        Err(_) => StatusCode::NOT_FOUND.into_response(),
    }
}
