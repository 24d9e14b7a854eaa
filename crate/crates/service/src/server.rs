//! HTTP service for the annotation UI.
//!
//! | method | path | body / query | reply |
//! |---|---|---|---|
//! | GET | `/api/healthz` | | `{"status":"ok"}` |
//! | GET | `/api/views` | | `{"views":[{id, file, width, height, fx, fy, cx, cy, c2w}]}` |
//! | GET | `/api/render` | `view`, `stage=original\|edited` | PNG |
//! | POST | `/api/masks` | `{view, mask}` | `{id, view, pixels}` |
//! | GET | `/api/masks/<id>` | | `{id, view, mask}` |
//! | DELETE | `/api/masks/<id>` | | `{id}` |
//! | POST | `/api/hull/preview` | `{mask_ids}` or `{mesh, transform}` | `{views:[{view, mask, pixels}]}` |
//! | POST | `/api/jobs` | job config | `{id, created_unix_ms, config_digest}` |
//! | GET | `/api/jobs/<id>` | | `{phase, step, strength, events_tail, ...}` |
//! | GET | `/api/jobs/<id>/preview` | `view` | PNG |
//! | DELETE | `/api/jobs/<id>` | | `{id, phase}` |
//!
//! Masks travel as base64 PNG. Errors are `{"error": "..."}`, with `issues`
//! for rejected job configs (422). POST and DELETE requests carrying an
//! `X-Request-Id` header are answered once; repeats get the stored reply.

use std::collections::{BTreeMap, HashMap};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::{to_bytes, Body, Bytes};
use axum::extract::{Path as UrlPath, Query, Request, State};
use axum::http::{header, HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use hullpaint::field::render::{render_view, SamplingConfig};
use hullpaint::hull::PosedMesh;
use hullpaint::idu::{
    hull_from_mesh, hull_from_view_masks, load_conditioning, load_region, prepare_view_masks, ConfigIssue, EditJobConfig,
};
use hullpaint::inpaint::backend_from_spec;
use hullpaint::maskproj::{DEFAULT_SIGMA_IN, DEFAULT_THRESHOLD};
use hullpaint::scene::{ManifestCamera, SceneDataset};
use hullpaint::{CameraModel, Error, MaskImage, RadianceField, VisualHull};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::oneshot;
use tower_http::services::ServeDir;

use crate::error::{ServiceError, ServiceResult};
use crate::jobs::{JobRunner, SubmitError};

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    /// Sampling for renders, previews and hull reprojection.
    pub sampling: SamplingConfig,
    pub sigma_in: f64,
    pub mask_threshold: f32,
    /// Job outputs, and the base for relative paths in job configs.
    pub work_dir: PathBuf,
    /// Annotation UI assets served at `/`.
    pub static_dir: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            sampling: SamplingConfig { n_samples: 64, ..SamplingConfig::default() },
            sigma_in: DEFAULT_SIGMA_IN,
            mask_threshold: DEFAULT_THRESHOLD,
            work_dir: PathBuf::from("."),
            static_dir: None,
        }
    }
}

#[derive(Clone)]
struct CachedReply {
    status: StatusCode,
    content_type: Option<HeaderValue>,
    body: Bytes,
}

#[derive(Default)]
struct MaskStore {
    next: u64,
    masks: BTreeMap<u64, (usize, MaskImage)>,
}

pub struct AppState {
    dataset: Arc<SceneDataset>,
    cameras: Vec<CameraModel>,
    original: Arc<RadianceField<f32>>,
    config: ServiceConfig,
    masks: Mutex<MaskStore>,
    jobs: JobRunner,
    original_renders: Mutex<HashMap<usize, Bytes>>,
    replies: Mutex<HashMap<String, CachedReply>>,
}

impl AppState {
    /// Starts the job worker as well.
    pub fn new(dataset: SceneDataset, original: RadianceField<f32>, config: ServiceConfig) -> Arc<Self> {
        let dataset = Arc::new(dataset);
        let original = Arc::new(original);
        let jobs = JobRunner::start(dataset.clone(), original.clone(), config.work_dir.clone());
        Arc::new(Self {
            cameras: dataset.cameras(),
            dataset,
            original,
            config,
            masks: Mutex::default(),
            jobs,
            original_renders: Mutex::default(),
            replies: Mutex::default(),
        })
    }

    pub fn jobs(&self) -> &JobRunner {
        &self.jobs
    }

    fn camera(&self, view: usize) -> Result<&CameraModel, ApiError> {
        self.cameras
            .get(view)
            .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no view {view}; the scene has {}", self.cameras.len())))
    }

    fn projection_config(&self) -> EditJobConfig {
        EditJobConfig {
            sampling: self.config.sampling,
            sigma_in: self.config.sigma_in,
            mask_threshold: self.config.mask_threshold,
            ..EditJobConfig::default()
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    issues: Vec<ConfigIssue>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into(), issues: Vec::new() }
    }

    fn unprocessable(issues: Vec<ConfigIssue>) -> Self {
        let text: Vec<String> = issues.iter().map(|i| format!("{}: {}", i.field, i.message)).collect();
        Self { status: StatusCode::UNPROCESSABLE_ENTITY, message: text.join("; "), issues }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::InvalidInput(_)
            | Error::Validation(_)
            | Error::Parse { .. }
            | Error::NoRegion
            | Error::DegenerateHull(_)
            | Error::Image(_)
            | Error::Protocol(_) => StatusCode::UNPROCESSABLE_ENTITY,
            Error::Io { .. } => StatusCode::NOT_FOUND,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self::new(status, e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = if self.issues.is_empty() {
            json!({"error": self.message})
        } else {
            json!({"error": self.message, "issues": self.issues})
        };
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn png(bytes: Bytes) -> Response {
    ([(header::CONTENT_TYPE, "image/png")], bytes).into_response()
}

fn mask_to_b64(mask: &MaskImage) -> ApiResult<String> {
    Ok(STANDARD.encode(mask.to_png()?))
}

fn mask_from_b64(text: &str) -> ApiResult<MaskImage> {
    let bytes = STANDARD
        .decode(text)
        .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("mask: invalid base64: {e}")))?;
    Ok(MaskImage::from_png(&bytes)?)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, format!("worker panicked: {e}")))?
}

async fn render_png(field: Arc<RadianceField<f32>>, camera: CameraModel, sampling: SamplingConfig) -> ApiResult<Bytes> {
    blocking(move || Ok(Bytes::from(render_view(&field, &camera, &sampling, None)?.to_png()?))).await
}

async fn healthz() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

#[derive(Serialize)]
struct ViewInfo {
    id: usize,
    #[serde(flatten)]
    camera: ManifestCamera,
}

async fn views(State(s): State<Arc<AppState>>) -> Json<serde_json::Value> {
    let views: Vec<ViewInfo> = s
        .dataset
        .views
        .iter()
        .enumerate()
        .map(|(id, v)| ViewInfo { id, camera: ManifestCamera::from_camera(v.file.to_string_lossy(), &v.camera) })
        .collect();
    Json(json!({ "views": views }))
}

#[derive(Deserialize)]
struct RenderQuery {
    view: usize,
    #[serde(default)]
    stage: Stage,
}

#[derive(Clone, Copy, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
enum Stage {
    #[default]
    Original,
    Edited,
}

async fn render(State(s): State<Arc<AppState>>, Query(q): Query<RenderQuery>) -> ApiResult<Response> {
    let camera = s.camera(q.view)?.clone();
    match q.stage {
        Stage::Original => {
            if let Some(cached) = s.original_renders.lock().expect("render cache lock").get(&q.view) {
                return Ok(png(cached.clone()));
            }
            let bytes = render_png(s.original.clone(), camera, s.config.sampling).await?;
            s.original_renders.lock().expect("render cache lock").insert(q.view, bytes.clone());
            Ok(png(bytes))
        }
        Stage::Edited => {
            let field = s.jobs.edited().ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, "no edit has finished yet"))?;
            Ok(png(render_png(field, camera, s.config.sampling).await?))
        }
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MaskUpload {
    view: usize,
    mask: String,
}

async fn upload_mask(State(s): State<Arc<AppState>>, Json(body): Json<MaskUpload>) -> ApiResult<Json<serde_json::Value>> {
    let cam = s.camera(body.view)?;
    let mask = mask_from_b64(&body.mask)?;
    if (mask.width, mask.height) != (cam.width, cam.height) {
        return Err(ApiError::new(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("mask is {}x{} but view {} is {}x{}", mask.width, mask.height, body.view, cam.width, cam.height),
        ));
    }
    let pixels = mask.count();
    let mut store = s.masks.lock().expect("mask store lock");
    store.next += 1;
    let id = store.next;
    store.masks.insert(id, (body.view, mask));
    Ok(Json(json!({"id": id, "view": body.view, "pixels": pixels})))
}

async fn get_mask(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<u64>) -> ApiResult<Json<serde_json::Value>> {
    let (view, mask) = s
        .masks
        .lock()
        .expect("mask store lock")
        .masks
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no mask {id}")))?;
    Ok(Json(json!({"id": id, "view": view, "mask": mask_to_b64(&mask)?})))
}

async fn delete_mask(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<u64>) -> ApiResult<Json<serde_json::Value>> {
    match s.masks.lock().expect("mask store lock").masks.remove(&id) {
        Some(_) => Ok(Json(json!({"id": id}))),
        None => Err(ApiError::new(StatusCode::NOT_FOUND, format!("no mask {id}"))),
    }
}

fn stored_masks(s: &AppState, ids: Option<&[u64]>) -> ApiResult<Vec<(usize, MaskImage)>> {
    let store = s.masks.lock().expect("mask store lock");
    match ids {
        None => Ok(store.masks.values().cloned().collect()),
        Some(ids) => ids
            .iter()
            .map(|id| {
                store
                    .masks
                    .get(id)
                    .cloned()
                    .ok_or_else(|| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("no mask {id}")))
            })
            .collect(),
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PreviewRequest {
    #[serde(default)]
    mask_ids: Option<Vec<u64>>,
    /// Base64 OBJ text.
    #[serde(default)]
    mesh: Option<String>,
    #[serde(default)]
    transform: Option<[f64; 16]>,
    #[serde(default)]
    resolution: Option<u32>,
    #[serde(default)]
    include_training_views: bool,
}

const IDENTITY: [f64; 16] = [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0];

fn preview_hull(s: &AppState, req: PreviewRequest) -> ApiResult<VisualHull> {
    match (req.mask_ids, req.mesh) {
        (Some(ids), None) => {
            if ids.is_empty() {
                return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "mask_ids is empty"));
            }
            Ok(hull_from_view_masks(&s.cameras, &stored_masks(s, Some(&ids))?)?)
        }
        (None, Some(obj)) => {
            let bytes = STANDARD
                .decode(obj)
                .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("mesh: invalid base64: {e}")))?;
            let text = String::from_utf8(bytes)
                .map_err(|_| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "mesh: OBJ text is not UTF-8"))?;
            let mesh = PosedMesh::parse_obj(&text)?;
            let training = req.include_training_views.then_some(s.cameras.as_slice());
            Ok(hull_from_mesh(&mesh, &req.transform.unwrap_or(IDENTITY), req.resolution.unwrap_or(256), training)?)
        }
        _ => Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "give either mask_ids or mesh")),
    }
}

async fn hull_preview(State(s): State<Arc<AppState>>, Json(req): Json<PreviewRequest>) -> ApiResult<Json<serde_json::Value>> {
    let state = s.clone();
    let views = blocking(move || {
        let hull = preview_hull(&state, req)?;
        let masks = prepare_view_masks(&hull, state.original.as_ref(), &state.cameras, &state.projection_config())?;
        masks
            .iter()
            .enumerate()
            .map(|(view, m)| Ok(json!({"view": view, "mask": mask_to_b64(&m.mask)?, "pixels": m.mask.count()})))
            .collect::<ApiResult<Vec<_>>>()
    })
    .await?;
    Ok(Json(json!({ "views": views })))
}

async fn submit_job(State(s): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let config = EditJobConfig::parse(std::str::from_utf8(&body).unwrap_or("")).map_err(|e| {
        ApiError::unprocessable(vec![ConfigIssue { field: "body".into(), message: e.to_string() }])
    })?;
    let mut issues = config.issues();
    if config.n_steps == 0 {
        issues.push(ConfigIssue { field: "n_steps".into(), message: "must be at least 1".into() });
    }
    if !issues.is_empty() {
        return Err(ApiError::unprocessable(issues));
    }
    if let Some(active) = s.jobs.active() {
        return Err(ApiError::new(StatusCode::CONFLICT, format!("job {active} is still running")));
    }
    let base = s.config.work_dir.clone();
    let hull = match &config.region {
        Some(region) => load_region(region, &base, &s.cameras)?,
        None => {
            let masks = stored_masks(&s, None)?;
            if masks.is_empty() {
                return Err(ApiError::unprocessable(vec![ConfigIssue {
                    field: "region".into(),
                    message: "no region given and no masks uploaded".into(),
                }]));
            }
            hull_from_view_masks(&s.cameras, &masks)?
        }
    };
    let conditioning = load_conditioning(&config.conditioning, &base)?;
    let backend = backend_from_spec(&config.backend, config.backend_timeout(), config.backend_retries)?;
    match s.jobs.submit(config, hull, conditioning, backend) {
        Ok(handle) => Ok((StatusCode::CREATED, Json(handle)).into_response()),
        Err(SubmitError::Busy(id)) => Err(ApiError::new(StatusCode::CONFLICT, format!("job {id} is still running"))),
        Err(e) => Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())),
    }
}

fn job_record(s: &AppState, id: &str) -> ApiResult<Arc<crate::jobs::JobRecord>> {
    s.jobs.get(id).ok_or_else(|| ApiError::new(StatusCode::NOT_FOUND, format!("no job {id}")))
}

async fn job_status(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    Ok(Json(job_record(&s, &id)?.status()).into_response())
}

#[derive(Deserialize)]
struct PreviewQuery {
    view: usize,
}

async fn job_preview(
    State(s): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<PreviewQuery>,
) -> ApiResult<Response> {
    let record = job_record(&s, &id)?;
    let camera = s.camera(q.view)?.clone();
    // Before the first snapshot the job's field is still the original.
    let field = record.snapshot().unwrap_or_else(|| s.original.clone());
    Ok(png(render_png(field, camera, s.config.sampling).await?))
}

async fn cancel_job(State(s): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<serde_json::Value>> {
    let record = job_record(&s, &id)?;
    record.cancel();
    Ok(Json(json!({"id": id, "phase": record.status().phase})))
}

async fn index() -> Html<&'static str> {
    Html(
        "<!doctype html><title>hullpaint</title><p>hullpaint service. \
         No UI assets configured; the API lives under <code>/api/</code>.</p>",
    )
}

/// Replays the stored reply for a repeated `X-Request-Id` on POST and DELETE.
async fn idempotency(State(s): State<Arc<AppState>>, req: Request, next: Next) -> Response {
    let key = match (req.method(), req.headers().get("x-request-id").and_then(|v| v.to_str().ok())) {
        (&Method::POST | &Method::DELETE, Some(id)) => format!("{} {} {id}", req.method(), req.uri().path()),
        _ => return next.run(req).await,
    };
    if let Some(c) = s.replies.lock().expect("reply cache lock").get(&key).cloned() {
        return cached_response(c);
    }
    let (parts, body) = next.run(req).await.into_parts();
    let body = match to_bytes(body, usize::MAX).await {
        Ok(b) => b,
        Err(e) => return ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    };
    let reply = CachedReply { status: parts.status, content_type: parts.headers.get(header::CONTENT_TYPE).cloned(), body };
    // A failed attempt may be retried for real.
    if !reply.status.is_server_error() {
        s.replies.lock().expect("reply cache lock").insert(key, reply.clone());
    }
    cached_response(reply)
}

fn cached_response(c: CachedReply) -> Response {
    let mut resp = Response::new(Body::from(c.body));
    *resp.status_mut() = c.status;
    if let Some(ct) = c.content_type {
        resp.headers_mut().insert(header::CONTENT_TYPE, ct);
    }
    resp
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/api/healthz", get(healthz))
        .route("/api/views", get(views))
        .route("/api/render", get(render))
        .route("/api/masks", post(upload_mask))
        .route("/api/masks/{id}", get(get_mask).delete(delete_mask))
        .route("/api/hull/preview", post(hull_preview))
        .route("/api/jobs", post(submit_job))
        .route("/api/jobs/{id}", get(job_status).delete(cancel_job))
        .route("/api/jobs/{id}/preview", get(job_preview));
    let app = match &state.config.static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api.route("/", get(index)),
    };
    app.layer(middleware::from_fn_with_state(state.clone(), idempotency)).with_state(state)
}

async fn bind(addr: SocketAddr) -> ServiceResult<tokio::net::TcpListener> {
    tokio::net::TcpListener::bind(addr).await.map_err(|source| ServiceError::Bind { addr, source })
}

/// Serves until Ctrl-C.
pub fn serve_forever(addr: SocketAddr, state: Arc<AppState>) -> ServiceResult<()> {
    let rt = tokio::runtime::Runtime::new().map_err(|e| ServiceError::Server(e.to_string()))?;
    rt.block_on(async move {
        let listener = bind(addr).await?;
        log::info!("listening on http://{}", listener.local_addr().map_err(|e| ServiceError::Server(e.to_string()))?);
        axum::serve(listener, router(state))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
            .map_err(|e| ServiceError::Server(e.to_string()))
    })
}

/// A service on a background thread, stopped on drop.
pub struct RunningService {
    pub addr: SocketAddr,
    pub state: Arc<AppState>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl RunningService {
    pub fn start(addr: SocketAddr, state: Arc<AppState>) -> ServiceResult<Self> {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .map_err(|e| ServiceError::Server(e.to_string()))?;
        let listener = rt.block_on(bind(addr))?;
        let addr = listener.local_addr().map_err(|e| ServiceError::Server(e.to_string()))?;
        let (tx, rx) = oneshot::channel::<()>();
        let app = router(state.clone());
        let thread = std::thread::spawn(move || {
            rt.block_on(async move {
                let stop = async {
                    let _ = rx.await;
                };
                if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(stop).await {
                    log::error!("service stopped: {e}");
                }
            })
        });
        Ok(Self { addr, state, shutdown: Some(tx), thread: Some(thread) })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }
}

impl Drop for RunningService {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Loads the scene and checkpoint a service runs on.
pub fn load_state(manifest: &Path, checkpoint: &Path, config: ServiceConfig) -> ServiceResult<Arc<AppState>> {
    let dataset = hullpaint::scene::load_manifest(manifest)?;
    let ckpt = hullpaint::scene::Checkpoint::load(checkpoint)?;
    Ok(AppState::new(dataset, ckpt.field, config))
}
