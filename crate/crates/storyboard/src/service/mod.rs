//! HTTP/JSON API over the pipeline and the store.
//!
//! Frame indices in routes are 0-based. Operations on one project are
//! serialized through a per-project lock; different projects run in
//! parallel.

pub mod error;
pub mod jobs;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use base64::Engine as _;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use storyboard_core::{FramePrompt, GenerationConfig, ProjectId, StyleParameters};
use tokio::sync::{Mutex, RwLock};

use crate::backends::Health;
use crate::pipeline::{Engine, PipelineError, ProjectState};
use crate::store::export::parse_formats;
use crate::store::{export, ExportFormat, ProjectStore, StoreError};

pub use error::ApiError;
pub use jobs::{Job, Jobs};

type ApiResult<T> = Result<T, ApiError>;
type Slot = Arc<Mutex<ProjectState>>;

pub struct AppState {
    pub engine: Arc<Engine>,
    /// When set, every mutation is saved and unknown ids are looked up here.
    pub persist: Option<Arc<ProjectStore>>,
    pub jobs: Jobs,
    projects: RwLock<HashMap<String, Slot>>,
}

impl AppState {
    pub fn new(engine: Arc<Engine>, persist: Option<Arc<ProjectStore>>) -> Arc<Self> {
        Arc::new(AppState {
            engine,
            persist,
            jobs: Jobs::default(),
            projects: RwLock::new(HashMap::new()),
        })
    }

    async fn slot(&self, id: &str) -> ApiResult<Slot> {
        if let Some(s) = self.projects.read().await.get(id) {
            return Ok(s.clone());
        }
        let not_found =
            || ApiError::not_found("project_not_found", format!("project {id} not found"));
        let store = self.persist.as_ref().ok_or_else(not_found)?;
        let loaded = match store.load(&ProjectId(id.to_string())) {
            Ok(l) => l,
            Err(StoreError::NotFound(_)) => return Err(not_found()),
            Err(e) => return Err(e.into()),
        };
        let mut map = self.projects.write().await;
        let slot = map
            .entry(id.to_string())
            .or_insert_with(|| Arc::new(Mutex::new(loaded.state)));
        Ok(slot.clone())
    }

    fn save(&self, state: &ProjectState) -> ApiResult<()> {
        if let Some(store) = &self.persist {
            store.save(state)?;
        }
        Ok(())
    }

    /// Saves whatever was committed, then surfaces the operation's result.
    fn settle<T>(&self, state: &ProjectState, result: Result<T, PipelineError>) -> ApiResult<T> {
        self.save(state)?;
        result.map_err(ApiError::from)
    }
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/projects", post(create_project))
        .route("/projects/{id}", get(get_project))
        .route("/projects/{id}/events", get(get_events))
        .route("/projects/{id}/style", put(put_style))
        .route("/projects/{id}/style:generate", post(style_generate))
        .route("/projects/{id}/style:regenerate", post(style_regenerate))
        .route("/projects/{id}/style:reset", post(style_reset))
        .route("/projects/{id}/story", put(put_story))
        .route("/projects/{id}/frame_count", put(put_frame_count))
        .route("/projects/{id}/resubmit", post(resubmit))
        .route("/projects/{id}/frames/{frame}", post(frame_action))
        .route(
            "/projects/{id}/frames/{frame}/prompt",
            put(put_frame_prompt),
        )
        .route("/projects/{id}/frames/{frame}/image", get(get_frame_image))
        .route("/projects/{id}/export", get(get_export))
        .route("/jobs/{job}", get(get_job))
        .fallback(|| async { ApiError::not_found("route_not_found", "no such route") })
        .with_state(state)
}

/// Binds and serves until the process is stopped.
pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

fn parse_body<T: DeserializeOwned>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::invalid_body(e.to_string()))
}

fn parse_index(raw: &str) -> ApiResult<usize> {
    raw.parse()
        .map_err(|_| ApiError::not_found("frame_not_found", format!("bad frame index {raw:?}")))
}

fn flag(q: &HashMap<String, String>, name: &str) -> bool {
    q.get(name)
        .is_some_and(|v| matches!(v.as_str(), "1" | "true" | "yes" | ""))
}

async fn healthz(State(st): State<Arc<AppState>>) -> Response {
    let chat = st.engine.chat.health_check().await;
    let image = st.engine.images.health_check().await;
    let down = |h: &Health| matches!(h, Health::Down(_));
    let (status, code) = match (&chat, &image) {
        (Health::Ok, Health::Ok) => ("ok", StatusCode::OK),
        (c, i) if down(c) && down(i) => ("down", StatusCode::SERVICE_UNAVAILABLE),
        _ => ("degraded", StatusCode::OK),
    };
    let body = json!({
        "status": status,
        "backends": {
            "chat": {"name": st.engine.chat.name(), "health": chat},
            "image": {"name": st.engine.images.name(), "health": image},
        }
    });
    (code, Json(body)).into_response()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateProject {
    narrative: String,
    #[serde(default)]
    frame_count: Option<usize>,
    #[serde(default)]
    config: Option<GenerationConfig>,
}

async fn create_project(State(st): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let req: CreateProject = parse_body(&body)?;
    let mut config = req.config.unwrap_or_default();
    if let Some(n) = req.frame_count {
        config.frame_count = n;
    }
    let state = st.engine.create_project(&req.narrative, config)?;
    st.save(&state)?;
    let project = state.project.clone();
    st.projects
        .write()
        .await
        .insert(project.id.0.clone(), Arc::new(Mutex::new(state)));
    Ok((StatusCode::CREATED, Json(project)).into_response())
}

async fn get_project(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let slot = st.slot(&id).await?;
    let ps = slot.lock().await;
    Ok(Json(&ps.project).into_response())
}

async fn get_events(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let slot = st.slot(&id).await?;
    let ps = slot.lock().await;
    Ok(Json(&ps.events).into_response())
}

fn style_response(ps: &ProjectState) -> Response {
    Json(json!({
        "style": ps.project.style.clone().unwrap_or_default(),
        "project": ps.project,
    }))
    .into_response()
}

async fn style_generate(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let slot = st.slot(&id).await?;
    let mut ps = slot.lock().await;
    let r = st.engine.generate_style(&mut ps).await;
    st.settle(&ps, r)?;
    Ok(style_response(&ps))
}

async fn style_regenerate(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let slot = st.slot(&id).await?;
    let mut ps = slot.lock().await;
    let r = st.engine.regenerate_style(&mut ps).await;
    st.settle(&ps, r)?;
    Ok(style_response(&ps))
}

async fn style_reset(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Response> {
    let slot = st.slot(&id).await?;
    let mut ps = slot.lock().await;
    st.engine.reset_style(&mut ps);
    st.save(&ps)?;
    Ok(style_response(&ps))
}

async fn put_style(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let style: StyleParameters = parse_body(&body)?;
    let slot = st.slot(&id).await?;
    let mut ps = slot.lock().await;
    if ps.project.style.as_ref() != Some(&style) {
        st.engine.edit_style(&mut ps, style);
        st.save(&ps)?;
    }
    Ok(style_response(&ps))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct StoryBody {
    narrative: String,
}

async fn put_story(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let req: StoryBody = parse_body(&body)?;
    let slot = st.slot(&id).await?;
    let mut ps = slot.lock().await;
    let r = st.engine.update_story(&mut ps, &req.narrative);
    st.settle(&ps, r)?;
    Ok(Json(&ps.project).into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameCountBody {
    frame_count: usize,
}

async fn put_frame_count(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult<Response> {
    let req: FrameCountBody = parse_body(&body)?;
    let slot = st.slot(&id).await?;
    let mut ps = slot.lock().await;
    if ps.project.frames.len() != req.frame_count {
        let r = st.engine.set_frame_count(&mut ps, req.frame_count);
        st.settle(&ps, r)?;
    }
    Ok(Json(&ps.project).into_response())
}

async fn run_resubmit(st: &AppState, slot: &Slot) -> ApiResult<Value> {
    let mut ps = slot.lock().await;
    let r = st.engine.resubmit(&mut ps).await;
    let outcome = st.settle(&ps, r)?;
    Ok(json!({
        "frames": outcome.frames,
        "failures": outcome.failures,
        "project": ps.project,
    }))
}

async fn resubmit(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let slot = st.slot(&id).await?;
    if flag(&q, "async") {
        let job = st.jobs.start();
        let (st2, job2) = (st.clone(), job.clone());
        tokio::spawn(async move {
            let outcome = run_resubmit(&st2, &slot).await;
            st2.jobs.finish(&job2, outcome);
        });
        let body = json!({"job_id": job, "poll": format!("/jobs/{job}")});
        return Ok((StatusCode::ACCEPTED, Json(body)).into_response());
    }
    Ok(Json(run_resubmit(&st, &slot).await?).into_response())
}

/// `POST /projects/{id}/frames/{i}:regenerate`
async fn frame_action(
    State(st): State<Arc<AppState>>,
    Path((id, frame)): Path<(String, String)>,
) -> ApiResult<Response> {
    let Some(raw) = frame.strip_suffix(":regenerate") else {
        return Err(ApiError::not_found(
            "route_not_found",
            "expected frames/{i}:regenerate",
        ));
    };
    let index = parse_index(raw)?;
    let slot = st.slot(&id).await?;
    let mut ps = slot.lock().await;
    let r = st.engine.regenerate_frame(&mut ps, index).await;
    let record = st.settle(&ps, r)?;
    Ok(Json(record).into_response())
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize, PartialEq, Eq)]
#[serde(rename_all = "lowercase")]
enum View {
    Parameterized,
    Natural,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PromptBody {
    view: View,
    body: Value,
    #[serde(default)]
    render: bool,
}

async fn put_frame_prompt(
    State(st): State<Arc<AppState>>,
    Path((id, frame)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult<Response> {
    let req: PromptBody = parse_body(&body)?;
    let index = parse_index(&frame)?;
    let slot = st.slot(&id).await?;
    let mut ps = slot.lock().await;
    let r = match req.view {
        View::Parameterized => {
            let prompt: FramePrompt = serde_json::from_value(req.body)
                .map_err(|e| ApiError::invalid_body(format!("body: {e}")))?;
            st.engine
                .update_frame_from_parameters(&mut ps, index, prompt, req.render)
                .await
        }
        View::Natural => {
            let Value::String(text) = req.body else {
                return Err(ApiError::invalid_body(
                    "body must be a string for the natural view",
                ));
            };
            st.engine
                .update_frame_from_natural_language(&mut ps, index, &text, req.render)
                .await
        }
    };
    let record = st.settle(&ps, r)?;
    Ok(Json(record).into_response())
}

async fn get_frame_image(
    State(st): State<Arc<AppState>>,
    Path((id, frame)): Path<(String, String)>,
    headers: HeaderMap,
) -> ApiResult<Response> {
    let index = parse_index(&frame)?;
    let slot = st.slot(&id).await?;
    let image_ref = {
        let ps = slot.lock().await;
        let f = ps.project.frames.get(index).ok_or_else(|| {
            ApiError::not_found("frame_not_found", format!("frame {index} out of range"))
        })?;
        f.image_ref.clone().ok_or(StoreError::NothingRendered)?
    };
    let etag = format!("\"{}\"", image_ref.0);
    let matches = headers
        .get(header::IF_NONE_MATCH)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.split(',').any(|t| t.trim() == etag || t.trim() == "*"));
    if matches {
        return Ok((StatusCode::NOT_MODIFIED, [(header::ETAG, etag)]).into_response());
    }
    let bytes = st.engine.store.get(&image_ref)?;
    Ok((
        [
            (header::CONTENT_TYPE, "image/png".to_string()),
            (header::ETAG, etag),
            (header::CACHE_CONTROL, "no-cache".to_string()),
        ],
        bytes,
    )
        .into_response())
}

async fn get_export(
    State(st): State<Arc<AppState>>,
    Path(id): Path<String>,
    Query(q): Query<HashMap<String, String>>,
) -> ApiResult<Response> {
    let formats = match q.get("formats") {
        Some(list) => parse_formats(list).map_err(ApiError::invalid_body)?,
        None => ExportFormat::ALL.to_vec(),
    };
    let slot = st.slot(&id).await?;
    let ps = slot.lock().await;
    let bundle = export(&ps.project, &*st.engine.store, &formats)?;
    let b64 = |b: &[u8]| base64::engine::general_purpose::STANDARD.encode(b);
    let frames: Vec<Value> = bundle
        .frames
        .iter()
        .map(|(file, bytes)| json!({"file": file, "sha256": crate::store::content_hash(bytes)}))
        .collect();
    Ok(Json(json!({
        "formats": formats,
        "manifest": bundle.manifest,
        "contact_sheet_png": bundle.contact_sheet.as_deref().map(b64),
        "html": bundle.html,
        "frames": frames,
    }))
    .into_response())
}

async fn get_job(State(st): State<Arc<AppState>>, Path(job): Path<String>) -> ApiResult<Response> {
    let j = st
        .jobs
        .get(&job)
        .ok_or_else(|| ApiError::not_found("job_not_found", format!("job {job} not found")))?;
    Ok(Json(j).into_response())
}
