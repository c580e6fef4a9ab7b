//! Read-mostly HTTP API over stored runs, for the results dashboard.
//!
//! Unknown run or task ids answer 404. Any malformed query or body answers
//! 422 with `{"error": ...}`.

use std::collections::HashMap;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::Serialize;
use serde_json::json;

use crate::classify::{ClassificationStore, ClassifyError, NewClassification};
use crate::compare::compare_runs;
use crate::metrics::compute_metrics;
use crate::record::RunRecord;
use crate::sample::SampleSpec;
use crate::store::RunStore;
use crate::trajectory_store::{StoreError, TrajectoryStore};

pub const DEFAULT_PAGE: usize = 50;
pub const MAX_PAGE: usize = 500;

#[derive(Clone)]
pub struct AppState {
    pub runs: Arc<RunStore>,
    pub trajectories: Option<Arc<TrajectoryStore>>,
    pub classifications: Arc<ClassificationStore>,
}

#[derive(Debug)]
pub enum ApiError {
    NotFound(String),
    Invalid(String),
    Internal(String),
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let (code, msg) = match self {
            ApiError::NotFound(m) => (StatusCode::NOT_FOUND, m),
            ApiError::Invalid(m) => (StatusCode::UNPROCESSABLE_ENTITY, m),
            ApiError::Internal(m) => (StatusCode::INTERNAL_SERVER_ERROR, m),
        };
        (code, Json(json!({"error": msg}))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Params = Result<Query<HashMap<String, String>>, QueryRejection>;

fn params(q: Params) -> ApiResult<HashMap<String, String>> {
    q.map(|Query(m)| m).map_err(|e| ApiError::Invalid(e.body_text()))
}

fn uint(p: &HashMap<String, String>, key: &str, default: usize) -> ApiResult<usize> {
    match p.get(key) {
        None => Ok(default),
        Some(v) => v
            .parse()
            .map_err(|_| ApiError::Invalid(format!("`{key}` must be a non-negative integer, got `{v}`"))),
    }
}

fn find_run(state: &AppState, id: &str) -> ApiResult<RunRecord> {
    state.runs.get(id).ok_or_else(|| ApiError::NotFound(format!("unknown run `{id}`")))
}

#[derive(Debug, Serialize)]
pub struct RunSummary {
    pub run_id: String,
    pub agent_version: String,
    pub sample: SampleSpec,
    pub tasks: usize,
    pub successes: usize,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
}

#[derive(Debug, Serialize)]
pub struct Page<T> {
    pub total: usize,
    pub limit: usize,
    pub offset: usize,
    pub items: Vec<T>,
}

/// `(limit, offset)` from the query string.
fn page_bounds(q: Params) -> ApiResult<(usize, usize)> {
    let p = params(q)?;
    let limit = uint(&p, "limit", DEFAULT_PAGE)?;
    let offset = uint(&p, "offset", 0)?;
    if limit == 0 || limit > MAX_PAGE {
        return Err(ApiError::Invalid(format!("`limit` must be between 1 and {MAX_PAGE}")));
    }
    Ok((limit, offset))
}

async fn list_runs(State(state): State<AppState>, q: Params) -> ApiResult<Json<Page<RunSummary>>> {
    let (limit, offset) = page_bounds(q)?;
    let all = state.runs.list();
    let items = all
        .iter()
        .skip(offset)
        .take(limit)
        .map(|r| RunSummary {
            run_id: r.run_id.clone(),
            agent_version: r.agent_version.clone(),
            sample: r.sample.clone(),
            tasks: r.results.len(),
            successes: r.results.values().filter(|t| t.passed()).count(),
            started_at: r.started_at,
            finished_at: r.finished_at,
        })
        .collect();
    Ok(Json(Page {
        total: all.len(),
        limit,
        offset,
        items,
    }))
}

async fn get_run(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<RunRecord>> {
    find_run(&state, &id).map(Json)
}

async fn get_metrics(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Response> {
    let run = find_run(&state, &id)?;
    let m = compute_metrics(&run).map_err(|e| ApiError::Invalid(e.to_string()))?;
    Ok(Json(m).into_response())
}

async fn get_trajectory(
    State(state): State<AppState>,
    Path((id, task)): Path<(String, String)>,
) -> ApiResult<Response> {
    let run = find_run(&state, &id)?;
    if !run.results.contains_key(&task) {
        return Err(ApiError::NotFound(format!("run `{id}` has no task `{task}`")));
    }
    let Some(store) = &state.trajectories else {
        return Err(ApiError::NotFound(format!("no trajectory recorded for {id}/{task}")));
    };
    match store.load(&id, &task) {
        Ok(events) => Ok(Json(json!({"run_id": id, "task_id": task, "events": events})).into_response()),
        Err(StoreError::UnknownTrajectory { .. }) | Err(StoreError::InvalidId(_)) => {
            Err(ApiError::NotFound(format!("no trajectory recorded for {id}/{task}")))
        }
        Err(e) => Err(ApiError::Internal(e.to_string())),
    }
}

async fn compare(State(state): State<AppState>, q: Params) -> ApiResult<Response> {
    let p = params(q)?;
    let id = |k: &str| {
        p.get(k)
            .filter(|v| !v.is_empty())
            .cloned()
            .ok_or_else(|| ApiError::Invalid(format!("query parameter `{k}` is required")))
    };
    let (base, new) = (id("base")?, id("new")?);
    let base = find_run(&state, &base)?;
    let new = find_run(&state, &new)?;
    Ok(Json(compare_runs(&base, &new)).into_response())
}

async fn post_classification(State(state): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let input: NewClassification =
        serde_json::from_slice(&body).map_err(|e| ApiError::Invalid(format!("invalid classification: {e}")))?;
    let run = find_run(&state, &input.run_id)?;
    match state.classifications.record(input, &run) {
        Ok(c) => Ok((StatusCode::CREATED, Json(c)).into_response()),
        Err(e @ ClassifyError::UnknownTask { .. }) => Err(ApiError::NotFound(e.to_string())),
        Err(e @ (ClassifyError::UnknownLabel(_) | ClassifyError::Empty(_))) => Err(ApiError::Invalid(e.to_string())),
        Err(e @ ClassifyError::Io(_)) => Err(ApiError::Internal(e.to_string())),
    }
}

async fn list_classifications(
    State(state): State<AppState>,
    Path(id): Path<String>,
    q: Params,
) -> ApiResult<Response> {
    let (limit, offset) = page_bounds(q)?;
    find_run(&state, &id)?;
    let all = state.classifications.list(&id);
    let page = Page {
        total: all.len(),
        limit,
        offset,
        items: all.into_iter().skip(offset).take(limit).collect(),
    };
    Ok(Json(page).into_response())
}

async fn taxonomy(State(state): State<AppState>) -> Response {
    Json(state.classifications.taxonomy().clone()).into_response()
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/runs", get(list_runs))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/metrics", get(get_metrics))
        .route("/runs/{id}/tasks/{task}/trajectory", get(get_trajectory))
        .route("/runs/{id}/classifications", get(list_classifications))
        .route("/compare", get(compare))
        .route("/classifications", post(post_classification))
        .route("/taxonomy", get(taxonomy))
        .with_state(state)
}

/// Serves until the listener fails.
pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
