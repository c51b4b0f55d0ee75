//! HTTP service backing the scribble interface.
//!
//! One session per process. Readers take the session lock only long enough
//! to clone what they need, so rendering never waits on a running
//! diffusion. Diffusions run on the blocking pool, one at a time, and each
//! finished run bumps the result version.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::{Arc, OnceLock, RwLock};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::cors::{Any, CorsLayer};
use tower_http::services::ServeDir;

use splatlift::features::mask::{encode_mask, encode_rgb_png};
use splatlift::features::{FeatureMap, GaussianFeatures};
use splatlift::raster::{render, render_rgb, RasterConfig};
use splatlift::scene::{Camera, GaussianScene};
use splatlift::segmentation::{
    iou, segment_with_hints, ForegroundKind, ForegroundSpec, Scorer, SegmentationConfig, SegmentationResult,
};
use splatlift::Error;

use crate::args::ServeArgs;
use crate::viz::{pca_colors, scaled_to_unit};

/// Scribbled pixels of one view, as `(x, y)`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Strokes {
    pub fg: BTreeSet<(usize, usize)>,
    pub bg: BTreeSet<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum JobStatus {
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct Job {
    pub job_id: u64,
    pub status: JobStatus,
    /// Result version produced by this job once done.
    pub result_version: Option<u64>,
    pub error: Option<String>,
}

/// Finished diffusion with the parameters that produced it.
#[derive(Debug)]
pub struct StoredResult {
    pub version: u64,
    pub result: SegmentationResult,
    pub masks: BTreeMap<String, usize>,
}

/// Everything the service knows about the current session.
pub struct Session {
    pub scene: Arc<GaussianScene>,
    pub features: Arc<GaussianFeatures>,
    pub ground_truth: Arc<BTreeMap<String, FeatureMap>>,
    pub defaults: SegmentationConfig,
    pub strokes: BTreeMap<String, Strokes>,
    /// Bumped whenever the scribbles change.
    pub stroke_version: u64,
    pub result: Option<Arc<StoredResult>>,
    pub result_version: u64,
    pub jobs: BTreeMap<u64, Job>,
    pub running: Option<u64>,
}

/// Shared service state.
pub struct AppState {
    pub session: RwLock<Session>,
    pca: OnceLock<Result<Vec<f32>, String>>,
}

impl AppState {
    pub fn new(
        scene: GaussianScene,
        features: GaussianFeatures,
        ground_truth: BTreeMap<String, FeatureMap>,
        defaults: SegmentationConfig,
    ) -> splatlift::Result<Arc<AppState>> {
        if features.rows != scene.len() {
            return Err(Error::validation(format!(
                "{} feature rows for {} Gaussians",
                features.rows,
                scene.len()
            )));
        }
        defaults.validate()?;
        Ok(Arc::new(AppState {
            session: RwLock::new(Session {
                scene: Arc::new(scene),
                features: Arc::new(features),
                ground_truth: Arc::new(ground_truth),
                defaults,
                strokes: BTreeMap::new(),
                stroke_version: 0,
                result: None,
                result_version: 0,
                jobs: BTreeMap::new(),
                running: None,
            }),
            pca: OnceLock::new(),
        }))
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, Session> {
        self.session.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, Session> {
        self.session.write().unwrap_or_else(|e| e.into_inner())
    }
}

/// Error response with a JSON body `{error}`.
#[derive(Debug)]
pub struct ApiError(pub StatusCode, pub String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Validation(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError(code, e.to_string())
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| bad_request(format!("malformed body: {e}")))
}

fn camera<'a>(scene: &'a GaussianScene, id: &str) -> ApiResult<&'a Camera> {
    scene
        .cameras
        .iter()
        .find(|c| c.id == id)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown view {id:?}")))
}

fn png(bytes: Vec<u8>, version: Option<u64>) -> Response {
    let mut resp = ([(header::CONTENT_TYPE, "image/png")], bytes).into_response();
    if let Some(v) = version {
        resp.headers_mut()
            .insert("x-result-version", HeaderValue::from_str(&v.to_string()).expect("digits are valid"));
    }
    resp
}

/// Routes of the service API.
pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/views", get(views))
        .route("/api/render", get(render_layer))
        .route("/api/scribbles", post(add_scribbles).get(list_scribbles))
        .route("/api/diffuse", post(start_diffusion))
        .route("/api/jobs/{id}", get(job_status))
        .route("/api/result", get(result))
        .route("/api/reset", post(reset))
        .with_state(state)
}

#[derive(Serialize)]
struct ViewInfo {
    id: String,
    width: usize,
    height: usize,
}

async fn views(State(state): State<Arc<AppState>>) -> Json<Vec<ViewInfo>> {
    let scene = state.read().scene.clone();
    Json(
        scene
            .cameras
            .iter()
            .map(|c| ViewInfo { id: c.id.clone(), width: c.width, height: c.height })
            .collect(),
    )
}

#[derive(Deserialize)]
struct RenderQuery {
    view: String,
    #[serde(default = "default_layer")]
    layer: String,
}

fn default_layer() -> String {
    "rgb".into()
}

async fn render_layer(State(state): State<Arc<AppState>>, Query(q): Query<RenderQuery>) -> ApiResult<Response> {
    let (scene, features, stored) = {
        let s = state.read();
        (s.scene.clone(), s.features.clone(), s.result.clone())
    };
    let cam = camera(&scene, &q.view)?.clone();
    let layer = q.layer.clone();
    match layer.as_str() {
        "rgb" | "pca" => {
            let st = state.clone();
            let bytes = tokio::task::spawn_blocking(move || -> ApiResult<Vec<u8>> {
                let cfg = RasterConfig::default();
                let map = if layer == "rgb" {
                    render_rgb(&scene, &cam, [0.0; 3], &cfg)?.map
                } else {
                    let colors = st
                        .pca
                        .get_or_init(|| pca_colors(&features).map_err(|e| e.to_string()))
                        .as_ref()
                        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.clone()))?;
                    render(&scene, &cam, colors, 3, &cfg)?.map
                };
                Ok(encode_rgb_png(&map)?)
            })
            .await
            .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
            Ok(png(bytes, None))
        }
        "score" | "mask" => {
            let version = stored.as_ref().map(|r| r.version);
            let map = match stored.as_ref().and_then(|r| r.masks.get(&cam.id).map(|&i| (r, i))) {
                Some((r, i)) if layer == "mask" => r.result.masks[i].clone(),
                Some((r, i)) => scaled_to_unit(&r.result.scores[i]),
                None => FeatureMap::zeros(cam.height, cam.width, 1),
            };
            Ok(png(encode_mask(&map, image_png())?, version))
        }
        other => Err(bad_request(format!("unknown layer '{other}' (expected rgb, pca, score or mask)"))),
    }
}

fn image_png() -> splatlift::features::mask::ImageFormat {
    splatlift::features::mask::ImageFormat::Png
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScribbleBody {
    view: String,
    strokes: Vec<[i64; 2]>,
    label: Label,
}

#[derive(Deserialize, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
enum Label {
    Fg,
    Bg,
}

async fn add_scribbles(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Json<serde_json::Value>> {
    let body: ScribbleBody = parse_body(&body)?;
    let mut s = state.write();
    let cam = camera(&s.scene, &body.view)?;
    let (w, h) = (cam.width as i64, cam.height as i64);
    let mut points = Vec::with_capacity(body.strokes.len());
    for &[x, y] in &body.strokes {
        if x < 0 || y < 0 || x >= w || y >= h {
            return Err(bad_request(format!("point ({x}, {y}) outside the {w}x{h} view")));
        }
        points.push((x as usize, y as usize));
    }
    let entry = s.strokes.entry(body.view.clone()).or_default();
    let set = if body.label == Label::Fg { &mut entry.fg } else { &mut entry.bg };
    let before = set.len();
    set.extend(points);
    let changed = set.len() != before;
    let (fg, bg) = (entry.fg.len(), entry.bg.len());
    if changed {
        s.stroke_version += 1;
    }
    Ok(Json(json!({
        "view": body.view,
        "fg_points": fg,
        "bg_points": bg,
        "version": s.stroke_version,
    })))
}

#[derive(Deserialize)]
struct ViewQuery {
    view: String,
    #[serde(default)]
    format: Option<String>,
}

async fn list_scribbles(State(state): State<Arc<AppState>>, Query(q): Query<ViewQuery>) -> ApiResult<Json<serde_json::Value>> {
    let s = state.read();
    camera(&s.scene, &q.view)?;
    let strokes = s.strokes.get(&q.view).cloned().unwrap_or_default();
    let pts = |set: &BTreeSet<(usize, usize)>| set.iter().map(|&(x, y)| [x, y]).collect::<Vec<_>>();
    Ok(Json(json!({
        "view": q.view,
        "fg": pts(&strokes.fg),
        "bg": pts(&strokes.bg),
        "version": s.stroke_version,
    })))
}

/// Diffusion parameters; omitted fields keep the session defaults.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiffuseBody {
    #[serde(rename = "T")]
    pub steps: Option<usize>,
    pub bandwidth_edge: Option<f64>,
    pub bandwidth_unary: Option<f64>,
    pub unary_mode: Option<String>,
    pub g0_threshold: Option<f64>,
}

impl DiffuseBody {
    /// Session defaults with these overrides applied.
    pub fn apply(&self, defaults: &SegmentationConfig) -> splatlift::Result<SegmentationConfig> {
        let mut cfg = defaults.clone();
        if let Some(t) = self.steps {
            cfg.steps = t;
        }
        if let Some(b) = self.bandwidth_edge {
            cfg.graph.bandwidth_edge = b;
        }
        if let Some(b) = self.bandwidth_unary {
            cfg.graph.bandwidth_unary = b;
        }
        if let Some(t) = self.g0_threshold {
            cfg.g0_threshold = t;
        }
        if let Some(m) = &self.unary_mode {
            cfg.scorer = match m.as_str() {
                "none" => Scorer::None,
                "cosine_to_mean" | "cosine" => Scorer::Cosine,
                "logistic" => Scorer::Logistic,
                "auto" => Scorer::Auto,
                other => {
                    return Err(Error::validation(format!(
                        "unknown unary_mode '{other}' (expected none, cosine_to_mean or logistic)"
                    )))
                }
            };
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Scribbled pixels of each view as one-valued masks, in camera order.
pub fn stroke_masks(scene: &GaussianScene, strokes: &BTreeMap<String, Strokes>, label_fg: bool) -> splatlift::Result<Vec<ForegroundSpec>> {
    let mut out = Vec::new();
    for cam in &scene.cameras {
        let Some(st) = strokes.get(&cam.id) else { continue };
        let set = if label_fg { &st.fg } else { &st.bg };
        if set.is_empty() {
            continue;
        }
        let mut mask = FeatureMap::zeros(cam.height, cam.width, 1).with_camera(cam.id.clone());
        for &(x, y) in set {
            mask.data[y * cam.width + x] = 1.0;
        }
        out.push(ForegroundSpec::new(cam.id.clone(), mask, ForegroundKind::Scribbles)?);
    }
    Ok(out)
}

async fn start_diffusion(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult<Response> {
    let params: DiffuseBody = if body.is_empty() { DiffuseBody::default() } else { parse_body(&body)? };
    let (job_id, scene, features, cfg, fg, bg) = {
        let mut s = state.write();
        if let Some(id) = s.running {
            return Err(ApiError(StatusCode::CONFLICT, format!("job {id} is still running")));
        }
        let cfg = params.apply(&s.defaults)?;
        let fg = stroke_masks(&s.scene, &s.strokes, true)?;
        if fg.is_empty() {
            return Err(bad_request("no foreground scribbles submitted"));
        }
        let bg = stroke_masks(&s.scene, &s.strokes, false)?;
        let job_id = s.jobs.keys().next_back().map_or(1, |k| k + 1);
        s.jobs.insert(job_id, Job { job_id, status: JobStatus::Running, result_version: None, error: None });
        s.running = Some(job_id);
        (job_id, s.scene.clone(), s.features.clone(), cfg, fg, bg)
    };
    let st = state.clone();
    tokio::task::spawn_blocking(move || {
        let targets: Vec<&Camera> = scene.cameras.iter().collect();
        let outcome = segment_with_hints(&scene, &features, &fg, &bg, &cfg, &targets);
        let mut s = st.write();
        s.running = None;
        let job = s.jobs.get_mut(&job_id).expect("job registered before spawn");
        match outcome {
            Ok(result) => {
                job.status = JobStatus::Done;
                let version = s.result_version + 1;
                s.jobs.get_mut(&job_id).expect("job exists").result_version = Some(version);
                s.result_version = version;
                let masks = result.camera_ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
                s.result = Some(Arc::new(StoredResult { version, result, masks }));
            }
            Err(e) => {
                job.status = JobStatus::Failed;
                job.error = Some(e.to_string());
            }
        }
    });
    Ok((StatusCode::ACCEPTED, Json(json!({ "job_id": job_id }))).into_response())
}

async fn job_status(State(state): State<Arc<AppState>>, UrlPath(id): UrlPath<u64>) -> ApiResult<Json<Job>> {
    state
        .read()
        .jobs
        .get(&id)
        .cloned()
        .map(Json)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("unknown job {id}")))
}

async fn result(State(state): State<Arc<AppState>>, Query(q): Query<ViewQuery>) -> ApiResult<Response> {
    let (scene, stored, gt) = {
        let s = state.read();
        (s.scene.clone(), s.result.clone(), s.ground_truth.clone())
    };
    camera(&scene, &q.view)?;
    let stored = stored.ok_or_else(|| ApiError(StatusCode::NOT_FOUND, "no diffusion result yet".into()))?;
    let i = *stored
        .masks
        .get(&q.view)
        .ok_or_else(|| ApiError(StatusCode::NOT_FOUND, format!("no result for view {:?}", q.view)))?;
    let mask = &stored.result.masks[i];
    match q.format.as_deref() {
        None | Some("png") => Ok(png(encode_mask(mask, image_png())?, Some(stored.version))),
        Some("json") => {
            let iou = gt.get(&q.view).map(|g| iou(mask, g)).transpose()?;
            let cfg = &stored.result.config;
            Ok(Json(json!({
                "view": q.view,
                "result_version": stored.version,
                "foreground_pixels": mask.data.iter().filter(|&&v| v > 0.5).count(),
                "total_pixels": mask.pixel_count(),
                "anchors": stored.result.anchors.len(),
                "iou": iou,
                "params": {
                    "T": cfg.steps,
                    "bandwidth_edge": cfg.graph.bandwidth_edge,
                    "bandwidth_unary": cfg.graph.bandwidth_unary,
                    "scorer": cfg.scorer,
                    "g0_threshold": cfg.g0_threshold,
                },
            }))
            .into_response())
        }
        Some(other) => Err(bad_request(format!("unknown format '{other}' (expected png or json)"))),
    }
}

async fn reset(State(state): State<Arc<AppState>>) -> ApiResult<Json<serde_json::Value>> {
    let mut s = state.write();
    if let Some(id) = s.running {
        return Err(ApiError(StatusCode::CONFLICT, format!("job {id} is still running")));
    }
    s.strokes.clear();
    s.result = None;
    s.stroke_version += 1;
    Ok(Json(json!({ "version": s.stroke_version })))
}

/// Loads the inputs named on the command line and serves until interrupted.
pub fn serve_blocking(args: &ServeArgs) -> splatlift::Result<()> {
    let scene = crate::commands::load(&args.scene)?;
    let features = crate::commands::load_features(&args.features, &scene)?;
    let gt = match &args.gt_dir {
        Some(d) => crate::commands::load_ground_truth(d, &scene)?,
        None => BTreeMap::new(),
    };
    let defaults = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::format(p.display().to_string(), e.to_string()))?
        }
        None => SegmentationConfig::default(),
    };
    let state = AppState::new(scene, features, gt, defaults)?;
    let origin = HeaderValue::from_str(&args.cors_origin)
        .map_err(|_| Error::validation(format!("invalid CORS origin {:?}", args.cors_origin)))?;
    let mut app = router(state).layer(CorsLayer::new().allow_origin(origin).allow_methods(Any).allow_headers(Any));
    if let Some(dir) = &args.static_dir {
        app = app.fallback_service(ServeDir::new(dir));
    }
    let addr = format!("{}:{}", args.host, args.port);
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(&addr)
            .await
            .map_err(|e| Error::io(addr.clone(), e))?;
        log::info!("listening on http://{addr}");
        eprintln!("listening on http://{addr}");
        axum::serve(listener, app).await.map_err(|e| Error::io(addr, e))
    })
}
