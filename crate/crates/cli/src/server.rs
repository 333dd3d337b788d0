//! HTTP/JSON facade over a directory of run artifacts.
//!
//! Reads serve stored artifacts as-is; `POST /runs` executes the pipeline
//! with the posted config and stores the result under its content hash.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::{json, Value};
use si_core::io::{ArtifactStore, RunArtifact, StoreError};
use si_core::pipeline;
use si_core::RunConfig;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

pub struct AppState {
    pub store: ArtifactStore,
    /// Base directory for relative input paths in posted configs.
    pub data_root: PathBuf,
    pub timeout: Duration,
}

pub struct ApiError {
    status: StatusCode,
    stage: Option<&'static str>,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            stage: None,
            message: message.into(),
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = json!({
            "error": { "status": self.status.as_u16(), "stage": self.stage, "message": self.message }
        });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/runs", get(list_runs).post(create_run))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/counterfactuals", get(get_counterfactuals))
        .route("/runs/{id}/diagnostics", get(get_diagnostics))
        .route("/runs/{id}/projections", get(get_projections))
        .with_state(state)
}

fn load(state: &AppState, id: &str) -> ApiResult<RunArtifact> {
    state
        .store
        .get(id)?
        .ok_or_else(|| ApiError::not_found(format!("unknown run id `{id}`")))
}

async fn list_runs(State(state): State<Arc<AppState>>) -> ApiResult<Json<Value>> {
    let mut runs = Vec::new();
    for id in state.store.list()? {
        if let Some(artifact) = state.store.get(&id)? {
            runs.push(json!({ "id": id, "config": artifact.config }));
        }
    }
    Ok(Json(Value::Array(runs)))
}

async fn get_run(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    load(&state, &id)?;
    let bytes = std::fs::read(state.store.path_for(&id)).map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

#[derive(Deserialize)]
struct UnitQuery {
    unit: Option<String>,
}

async fn get_counterfactuals(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<UnitQuery>,
) -> ApiResult<Json<Value>> {
    let artifact = load(&state, &id)?;
    let unit = q
        .unit
        .ok_or_else(|| ApiError::new(StatusCode::BAD_REQUEST, "missing `unit` query parameter"))?;
    let summary = artifact
        .unit(&unit)
        .ok_or_else(|| ApiError::not_found(format!("unknown unit `{unit}`")))?;
    let t0 = artifact.panel.t0_index;
    let trajectories: BTreeMap<&str, &[f64]> = artifact
        .counterfactuals_for(&unit)
        .map(|c| (c.label.as_str(), c.trajectory.as_slice()))
        .collect();
    Ok(Json(json!({
        "run_id": artifact.content_hash,
        "unit_id": unit,
        "own_label": artifact.partition.label_of(&unit),
        "labels": artifact.partition.labels(),
        "day0_date": summary.day0_date,
        "day_labels": &artifact.panel.day_labels[t0..],
        "observed": &summary.observed[t0..],
        "trajectories": trajectories,
    })))
}

async fn get_diagnostics(State(state): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let artifact = load(&state, &id)?;
    Ok(Json(json!(artifact.diagnostics)))
}

async fn get_projections(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<UnitQuery>,
) -> ApiResult<Json<Value>> {
    let artifact = load(&state, &id)?;
    if let Some(unit) = &q.unit {
        if artifact.unit(unit).is_none() {
            return Err(ApiError::not_found(format!("unknown unit `{unit}`")));
        }
    }
    let rows: Vec<_> = artifact
        .diagnostics
        .projections
        .iter()
        .filter(|p| q.unit.as_ref().is_none_or(|u| &p.unit_id == u))
        .collect();
    Ok(Json(json!(rows)))
}

async fn create_run(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let config = RunConfig::from_json(&body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, e.to_string()))?;
    let base = state.data_root.clone();
    let job = tokio::task::spawn_blocking(move || pipeline::run(&config, &base));
    let artifact = match tokio::time::timeout(state.timeout, job).await {
        Err(_) => {
            return Err(ApiError::new(
                StatusCode::GATEWAY_TIMEOUT,
                format!("run did not finish within {}s", state.timeout.as_secs()),
            ))
        }
        Ok(Err(join)) => return Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, join.to_string())),
        Ok(Ok(Err(e))) => {
            return Err(ApiError {
                status: StatusCode::UNPROCESSABLE_ENTITY,
                stage: Some(e.stage()),
                message: e.to_string(),
            })
        }
        Ok(Ok(Ok(artifact))) => artifact,
    };
    let existed = state.store.contains(&artifact.content_hash);
    let id = state.store.put(&artifact)?;
    log::info!("run {id} stored (existed: {existed})");
    let status = if existed { StatusCode::OK } else { StatusCode::CREATED };
    Ok((status, Json(json!({ "id": id }))).into_response())
}

/// Bind and serve until the process is stopped.
pub async fn serve(state: AppState, bind: &str) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    log::info!("serving {} on {}", state.store.dir().display(), listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state))).await?;
    Ok(())
}
