//! Local HTTP endpoints for the design UI.
//!
//! Every model gets one worker task fed by a channel, so runs on the same
//! model execute one at a time in submission order while different models
//! proceed in parallel.

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Path, Query, Request, State};
use axum::http::{header, HeaderValue, Method as HttpMethod, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rctouch::circuit::{delay_separations, Method, Session};
use rctouch::export::MANIFEST_FILE;
use rctouch::mesh::{read_stl, TriangleMesh};
use rctouch::pipeline::{precheck, preview_session, run_pipeline, write_bundle, PipelineConfig, PipelineOutput};
use rctouch::selection::{read_selection, TouchpointSet};
use rctouch::Error;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex};
use tokio::sync::mpsc;

const BODY_LIMIT: usize = 512 * 1024 * 1024;

pub struct AppState {
    pub base: PipelineConfig,
    pub output_dir: PathBuf,
    registry: Mutex<Registry>,
}

#[derive(Default)]
struct Registry {
    next_model: u64,
    next_run: u64,
    models: HashMap<String, Model>,
    runs: HashMap<String, Run>,
}

struct Model {
    name: String,
    mesh: Arc<TriangleMesh>,
    selection: Option<TouchpointSet>,
    /// Runs waiting for the worker, oldest first.
    pending: Vec<String>,
    running: Option<String>,
    jobs: mpsc::UnboundedSender<Job>,
}

struct Job {
    run_id: String,
    config: PipelineConfig,
    selection: TouchpointSet,
}

struct Run {
    model: String,
    state: RunState,
    output: Option<Arc<RunOutput>>,
}

struct RunOutput {
    pipeline: PipelineOutput,
    session: Session,
    files: Vec<(String, Vec<u8>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum RunState {
    Queued,
    Running,
    Succeeded { bundle_dir: PathBuf },
    Failed { error: ErrorBody },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub kind: String,
    pub message: String,
    pub stage: Option<String>,
    pub hint: Option<String>,
}

impl From<&Error> for ErrorBody {
    fn from(e: &Error) -> Self {
        ErrorBody {
            kind: e.kind().into(),
            message: e.to_string(),
            stage: e.stage().map(|s| s.0.to_string()),
            hint: e.stage().map(|s| s.1.to_string()),
        }
    }
}

pub struct ApiError {
    status: StatusCode,
    body: ErrorBody,
}

impl ApiError {
    fn new(status: StatusCode, kind: &str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            body: ErrorBody {
                kind: kind.into(),
                message: message.into(),
                stage: None,
                hint: None,
            },
        }
    }

    fn not_found(what: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not-found", format!("{what} not found"))
    }

    fn from_core(status: StatusCode, e: &Error) -> Self {
        ApiError {
            status,
            body: e.into(),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.body }))).into_response()
    }
}

type ApiResult<T> = std::result::Result<T, ApiError>;

impl AppState {
    pub fn new(base: PipelineConfig, output_dir: PathBuf) -> Arc<Self> {
        Arc::new(AppState {
            base,
            output_dir,
            registry: Mutex::new(Registry::default()),
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Registry> {
        self.registry.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn run_output(&self, id: &str) -> ApiResult<Arc<RunOutput>> {
        let reg = self.lock();
        let run = reg.runs.get(id).ok_or_else(|| ApiError::not_found("run"))?;
        run.output.clone().ok_or_else(|| {
            ApiError::new(StatusCode::CONFLICT, "not-ready", "run has not finished successfully")
        })
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/health", get(|| async { Json(json!({ "ok": true })) }))
        .route("/config", get(get_config))
        .route("/models", post(upload_model))
        .route("/models/{id}", get(get_model))
        .route("/models/{id}/mesh", get(get_mesh))
        .route("/models/{id}/selection", get(get_selection).post(submit_selection).put(submit_selection))
        .route("/models/{id}/runs", post(start_run))
        .route("/runs/{id}", get(get_run))
        .route("/runs/{id}/polylines", get(get_polylines))
        .route("/runs/{id}/feasibility", get(get_feasibility))
        .route("/runs/{id}/delay-profile", get(get_delay_profile))
        .route("/runs/{id}/session", get(get_session))
        .route("/runs/{id}/manifest", get(get_manifest))
        .route("/runs/{id}/bundle", get(get_bundle))
        .route("/runs/{id}/bundle/{file}", get(get_bundle_file))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .layer(middleware::from_fn(cors))
        .with_state(state)
}

/// Allow a UI served from another local origin.
async fn cors(req: Request, next: Next) -> Response {
    let mut res = if req.method() == HttpMethod::OPTIONS {
        StatusCode::NO_CONTENT.into_response()
    } else {
        next.run(req).await
    };
    let h = res.headers_mut();
    h.insert(header::ACCESS_CONTROL_ALLOW_ORIGIN, HeaderValue::from_static("*"));
    h.insert(header::ACCESS_CONTROL_ALLOW_METHODS, HeaderValue::from_static("GET, POST, PUT, OPTIONS"));
    h.insert(header::ACCESS_CONTROL_ALLOW_HEADERS, HeaderValue::from_static("content-type"));
    res
}

async fn get_config(State(st): State<Arc<AppState>>) -> Json<PipelineConfig> {
    Json(st.base.clone())
}

#[derive(Deserialize)]
struct UploadQuery {
    name: Option<String>,
}

fn model_summary(id: &str, m: &Model) -> Value {
    json!({
        "id": id,
        "name": m.name,
        "triangles": m.mesh.triangles.len(),
        "vertices": m.mesh.vertices.len(),
        "bounding_box": m.mesh.bounding_box(),
        "has_selection": m.selection.is_some(),
    })
}

async fn upload_model(
    State(st): State<Arc<AppState>>,
    Query(q): Query<UploadQuery>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let mesh = tokio::task::spawn_blocking(move || read_stl(&body))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(|e| ApiError::from_core(StatusCode::BAD_REQUEST, &e))?;
    let (tx, rx) = mpsc::unbounded_channel();
    let mut reg = st.lock();
    reg.next_model += 1;
    let id = format!("m{}", reg.next_model);
    let model = Model {
        name: q.name.unwrap_or_else(|| "model.stl".into()),
        mesh: Arc::new(mesh),
        selection: None,
        pending: Vec::new(),
        running: None,
        jobs: tx,
    };
    let summary = model_summary(&id, &model);
    reg.models.insert(id.clone(), model);
    drop(reg);
    tokio::spawn(worker(st.clone(), id, rx));
    Ok((StatusCode::CREATED, Json(summary)))
}

async fn get_model(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let reg = st.lock();
    let m = reg.models.get(&id).ok_or_else(|| ApiError::not_found("model"))?;
    Ok(Json(model_summary(&id, m)))
}

async fn get_mesh(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let mesh = {
        let reg = st.lock();
        reg.models.get(&id).ok_or_else(|| ApiError::not_found("model"))?.mesh.clone()
    };
    Ok(Json(json!({
        "triangle_count": mesh.triangles.len(),
        "vertices": mesh.vertices,
        "triangles": mesh.triangles,
    })))
}

async fn get_selection(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<TouchpointSet>> {
    let reg = st.lock();
    let m = reg.models.get(&id).ok_or_else(|| ApiError::not_found("model"))?;
    m.selection
        .clone()
        .map(Json)
        .ok_or_else(|| ApiError::not_found("selection"))
}

async fn submit_selection(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: String,
) -> ApiResult<Json<TouchpointSet>> {
    let mesh = {
        let reg = st.lock();
        reg.models.get(&id).ok_or_else(|| ApiError::not_found("model"))?.mesh.clone()
    };
    let invalid = |e: Error| ApiError::from_core(StatusCode::UNPROCESSABLE_ENTITY, &e);
    let mut set = read_selection(&body).map_err(invalid)?;
    set.resolve(Some(&mesh)).map_err(invalid)?;
    let mut reg = st.lock();
    let m = reg.models.get_mut(&id).ok_or_else(|| ApiError::not_found("model"))?;
    m.selection = Some(set.clone());
    Ok(Json(set))
}

async fn start_run(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: String,
) -> ApiResult<(StatusCode, Json<Value>)> {
    let config = if body.trim().is_empty() {
        st.base.clone()
    } else {
        serde_json::from_str::<PipelineConfig>(&body)
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "config", e.to_string()))?
    };
    let mut reg = st.lock();
    reg.next_run += 1;
    let run_id = format!("r{}", reg.next_run);
    let m = reg.models.get_mut(&id).ok_or_else(|| ApiError::not_found("model"))?;
    let selection = m
        .selection
        .clone()
        .ok_or_else(|| ApiError::new(StatusCode::CONFLICT, "selection", "submit a selection first"))?;
    precheck(&config, &selection).map_err(|e| ApiError::from_core(StatusCode::UNPROCESSABLE_ENTITY, &e))?;
    m.pending.push(run_id.clone());
    m.jobs
        .send(Job {
            run_id: run_id.clone(),
            config,
            selection,
        })
        .map_err(|_| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", "model worker stopped"))?;
    reg.runs.insert(
        run_id.clone(),
        Run {
            model: id,
            state: RunState::Queued,
            output: None,
        },
    );
    let status = run_status(&reg, &run_id);
    Ok((StatusCode::ACCEPTED, Json(status)))
}

async fn worker(st: Arc<AppState>, model_id: String, mut rx: mpsc::UnboundedReceiver<Job>) {
    while let Some(job) = rx.recv().await {
        let (mesh, name) = {
            let mut reg = st.lock();
            let Some(m) = reg.models.get_mut(&model_id) else { return };
            m.pending.retain(|r| r != &job.run_id);
            m.running = Some(job.run_id.clone());
            let out = (m.mesh.clone(), m.name.clone());
            if let Some(r) = reg.runs.get_mut(&job.run_id) {
                r.state = RunState::Running;
            }
            out
        };
        let run_id = job.run_id.clone();
        let dir = st.output_dir.join(&model_id).join(&run_id);
        let result = tokio::task::spawn_blocking(move || execute(&job.config, &mesh, &name, &job.selection, dir))
            .await
            .unwrap_or_else(|e| Err(Error::Invalid(format!("run panicked: {e}"))));
        let mut reg = st.lock();
        if let Some(m) = reg.models.get_mut(&model_id) {
            m.running = None;
        }
        if let Some(r) = reg.runs.get_mut(&run_id) {
            match result {
                Ok((out, dir)) => {
                    r.state = RunState::Succeeded { bundle_dir: dir };
                    r.output = Some(Arc::new(out));
                }
                Err(e) => r.state = RunState::Failed { error: (&e).into() },
            }
        }
    }
}

fn execute(
    config: &PipelineConfig,
    mesh: &TriangleMesh,
    name: &str,
    selection: &TouchpointSet,
    dir: PathBuf,
) -> rctouch::Result<(RunOutput, PathBuf)> {
    let pipeline = run_pipeline(config, mesh, name, selection)?;
    write_bundle(&pipeline.bundle, &dir)?;
    let session = preview_session(&pipeline.bundle.manifest.circuit, config.seed)?;
    let mut files: Vec<(String, Vec<u8>)> = pipeline
        .bundle
        .stl_bytes()
        .into_iter()
        .map(|(f, b)| (f.to_string(), b))
        .collect();
    files.push((MANIFEST_FILE.into(), pipeline.bundle.manifest_json()?.into_bytes()));
    Ok((
        RunOutput {
            pipeline,
            session,
            files,
        },
        dir,
    ))
}

fn run_status(reg: &Registry, run_id: &str) -> Value {
    let Some(run) = reg.runs.get(run_id) else {
        return Value::Null;
    };
    let mut v = serde_json::to_value(&run.state).unwrap_or(Value::Null);
    if run.state == RunState::Queued {
        if let Some(m) = reg.models.get(&run.model) {
            // Jobs ahead of this one, counting the one in flight.
            let ahead = m.pending.iter().position(|r| r == run_id).unwrap_or(0) + usize::from(m.running.is_some());
            v["position"] = json!(ahead);
        }
    }
    if let Some(out) = &run.output {
        v["timings"] = json!(out.pipeline.timings);
        v["warnings"] = json!(out.pipeline.bundle.manifest.warnings);
    }
    v["run_id"] = json!(run_id);
    v["model"] = json!(run.model);
    v
}

async fn get_run(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let reg = st.lock();
    if !reg.runs.contains_key(&id) {
        return Err(ApiError::not_found("run"));
    }
    Ok(Json(run_status(&reg, &id)))
}

async fn get_polylines(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let out = st.run_output(&id)?;
    Ok(Json(json!(out.pipeline.route.polylines())))
}

async fn get_feasibility(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let out = st.run_output(&id)?;
    let opt = out.pipeline.embed.optimization.as_ref().ok_or_else(|| {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "not-applicable",
            "double-wire runs have no feasibility grid",
        )
    })?;
    Ok(Json(json!({
        "r1_values": opt.map.r1_values,
        "r_values": opt.map.r_values,
        "cells": opt.map.cells,
        "selected": { "r1": opt.r1, "r": opt.r },
        "min_separation": opt.min_separation,
        "best_score": opt.best_score,
        "near_optimal": opt.near_optimal,
    })))
}

async fn get_delay_profile(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let out = st.run_output(&id)?;
    let m = &out.pipeline.bundle.manifest;
    Ok(Json(json!({
        "circuit": m.circuit,
        "exact": m.delay_profile,
        "approx": m.delay_profile_approx,
        "separations": delay_separations(&m.circuit, Method::Exact),
        "min_separation": m.min_separation,
        "table": rctouch::export::delay_table(&m.delay_profile, &m.delay_profile_approx),
    })))
}

async fn get_session(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Session>> {
    Ok(Json(st.run_output(&id)?.session.clone()))
}

async fn get_manifest(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    Ok(Json(json!(st.run_output(&id)?.pipeline.bundle.manifest)))
}

async fn get_bundle(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let out = st.run_output(&id)?;
    let files: Vec<Value> = out
        .files
        .iter()
        .map(|(f, b)| json!({ "file": f, "bytes": b.len(), "url": format!("/runs/{id}/bundle/{f}") }))
        .collect();
    Ok(Json(json!({ "files": files })))
}

async fn get_bundle_file(
    State(st): State<Arc<AppState>>,
    Path((id, file)): Path<(String, String)>,
) -> ApiResult<Response> {
    let out = st.run_output(&id)?;
    let (_, bytes) = out
        .files
        .iter()
        .find(|(f, _)| *f == file)
        .ok_or_else(|| ApiError::not_found("bundle file"))?;
    let ctype = if file.ends_with(".json") {
        "application/json"
    } else {
        "application/octet-stream"
    };
    Ok((
        [
            (header::CONTENT_TYPE, ctype.to_string()),
            (header::CONTENT_DISPOSITION, format!("attachment; filename=\"{file}\"")),
        ],
        bytes.clone(),
    )
        .into_response())
}

pub async fn serve(state: Arc<AppState>, host: &str, port: u16) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind((host, port)).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}
