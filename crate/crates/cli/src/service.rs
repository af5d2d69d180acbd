//! `/v1` HTTP service over a data directory:
//!
//! ```text
//! maps/<id>.smap            label maps
//! models/<id>.ckpt          trained checkpoints
//! demos.ndjson              demonstration store (append-only)
//! episodes/<id>.episode.json
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::Mutex;

use relaxnav_core::nav::{EpisodeLog, Granularity, Planner, SurenavPlanner};
use relaxnav_core::relax_gnn::load_model;
use relaxnav_core::semantic_map::{apply_perturbation, load_map, save_map};
use relaxnav_core::superpixel::{build_graph, build_graph_unanchored, slic_segment, GraphFile, DEFAULT_TAU};
use relaxnav_core::training::{append_demo, load_demos, DemoSource, Demonstration};
use relaxnav_core::{LabelInfo, Perturbation, Point, SemanticGrid, SlicParams};

use crate::commands::parse_point;
use crate::render::{label_color, raster_png};

#[derive(Clone)]
pub struct AppState {
    data_dir: Arc<PathBuf>,
    demo_lock: Arc<Mutex<()>>,
}

impl AppState {
    pub fn new(data_dir: impl Into<PathBuf>) -> Self {
        Self { data_dir: Arc::new(data_dir.into()), demo_lock: Arc::new(Mutex::new(())) }
    }

    fn map_path(&self, id: &str) -> PathBuf {
        self.data_dir.join("maps").join(format!("{id}.smap"))
    }

    fn demos_path(&self) -> PathBuf {
        self.data_dir.join("demos.ndjson")
    }
}

pub fn router(state: AppState) -> Router {
    let v1 = Router::new()
        .route("/maps", get(list_maps))
        .route("/maps/{id}", get(map_meta))
        .route("/maps/{id}/raster", get(map_raster))
        .route("/maps/{id}/graph", get(map_graph))
        .route("/maps/{id}/perturb", post(perturb_map))
        .route("/demos", get(list_demos).post(post_demo))
        .route("/plan", get(plan))
        .route("/episodes/{id}", get(episode));
    Router::new().nest("/v1", v1).with_state(state)
}

pub async fn serve(port: u16, data_dir: PathBuf) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(("127.0.0.1", port)).await?;
    tracing::info!(addr = %listener.local_addr()?, data_dir = %data_dir.display(), "serving /v1");
    axum::serve(listener, router(AppState::new(data_dir))).await?;
    Ok(())
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }

    fn bad_request(message: impl ToString) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message.to_string())
    }

    fn not_found(what: impl std::fmt::Display) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("{what} not found"))
    }

    fn internal(message: impl ToString) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Ids are file stems; anything that could escape the data directory is refused.
fn check_id(id: &str) -> ApiResult<()> {
    let ok = !id.is_empty() && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.')) && !id.starts_with('.');
    if ok {
        Ok(())
    } else {
        Err(ApiError::bad_request(format!("invalid id {id:?}")))
    }
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> ApiResult<T> + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(ApiError::internal)?
}

fn read_map(state: &AppState, id: &str) -> ApiResult<SemanticGrid> {
    check_id(id)?;
    let path = state.map_path(id);
    if !path.exists() {
        return Err(ApiError::not_found(format!("map {id}")));
    }
    load_map(&path).map_err(ApiError::internal)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MapSummary {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
}

async fn list_maps(State(state): State<AppState>) -> ApiResult<Json<Vec<MapSummary>>> {
    blocking(move || {
        let dir = state.data_dir.join("maps");
        let mut ids: Vec<String> = match std::fs::read_dir(&dir) {
            Ok(rd) => rd
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "smap"))
                .filter_map(|p| p.file_stem().and_then(|s| s.to_str()).map(str::to_owned))
                .collect(),
            Err(_) => Vec::new(),
        };
        ids.sort();
        ids.into_iter()
            .map(|id| {
                let g = read_map(&state, &id)?;
                Ok(MapSummary { id, width: g.width(), height: g.height(), resolution: g.resolution() })
            })
            .collect::<ApiResult<Vec<_>>>()
            .map(Json)
    })
    .await
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelRecord {
    pub index: u8,
    #[serde(flatten)]
    pub info: LabelInfo,
    pub color: [u8; 3],
}

#[derive(Debug, Serialize, Deserialize)]
pub struct MapMeta {
    pub id: String,
    pub width: usize,
    pub height: usize,
    pub resolution: f64,
    pub labels: Vec<LabelRecord>,
    pub class_counts: [usize; 3],
}

async fn map_meta(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<MapMeta>> {
    blocking(move || {
        let g = read_map(&state, &id)?;
        let labels = g
            .label_table()
            .iter()
            .enumerate()
            .map(|(k, l)| LabelRecord { index: k as u8, info: l.clone(), color: label_color(&l.name, l.class) })
            .collect();
        Ok(Json(MapMeta {
            id,
            width: g.width(),
            height: g.height(),
            resolution: g.resolution(),
            labels,
            class_counts: g.class_counts(),
        }))
    })
    .await
}

async fn map_raster(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Response> {
    blocking(move || {
        let g = read_map(&state, &id)?;
        let png = raster_png(&g).map_err(ApiError::internal)?;
        Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
    })
    .await
}

#[derive(Debug, Deserialize)]
pub struct GraphQuery {
    start: Option<String>,
    goal: Option<String>,
}

fn point_param(raw: Option<&str>, name: &str) -> ApiResult<Option<Point>> {
    raw.map(|s| parse_point(s).map_err(|e| ApiError::bad_request(format!("{name}: {e}")))).transpose()
}

async fn map_graph(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<GraphQuery>,
) -> ApiResult<Json<GraphFile>> {
    blocking(move || {
        let g = read_map(&state, &id)?;
        let seg = slic_segment(&g, &SlicParams::for_grid(&g)).map_err(ApiError::internal)?;
        let start = point_param(q.start.as_deref(), "start")?;
        let goal = point_param(q.goal.as_deref(), "goal")?;
        let graph = match (start, goal) {
            (Some(s), Some(t)) => build_graph(&g, &seg, s, t, DEFAULT_TAU).map_err(ApiError::bad_request)?,
            (None, None) => build_graph_unanchored(&g, &seg, DEFAULT_TAU).map_err(ApiError::internal)?,
            _ => return Err(ApiError::bad_request("start and goal must be given together")),
        };
        Ok(Json(GraphFile::from_graph(&graph, &g)))
    })
    .await
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbRequest {
    pub seed_xy: Point,
    pub radius: u32,
    /// Label name; defaults to the map's last label.
    #[serde(default)]
    pub label: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PerturbResponse {
    pub map_id: String,
    pub perturbation: Perturbation,
    pub changed_cells: usize,
}

/// Derived map ids are a hash of the source id and the request, so repeating
/// a request is idempotent.
fn derived_id(id: &str, p: &Perturbation) -> String {
    let mut h = crc32fast::Hasher::new();
    h.update(id.as_bytes());
    h.update(&p.seed_position.x.to_le_bytes());
    h.update(&p.seed_position.y.to_le_bytes());
    h.update(&p.radius.to_le_bytes());
    h.update(&[p.new_label]);
    format!("{id}-p{:08x}", h.finalize())
}

async fn perturb_map(
    State(state): State<AppState>,
    UrlPath(id): UrlPath<String>,
    Json(req): Json<PerturbRequest>,
) -> ApiResult<(StatusCode, Json<PerturbResponse>)> {
    blocking(move || {
        let g = read_map(&state, &id)?;
        let new_label = match &req.label {
            Some(name) => g.label_index(name).ok_or_else(|| ApiError::bad_request(format!("unknown label {name}")))?,
            None => (g.label_count() - 1) as u8,
        };
        let p = Perturbation { seed_position: req.seed_xy, radius: req.radius, new_label };
        let seg = slic_segment(&g, &SlicParams::for_grid(&g)).map_err(ApiError::internal)?;
        let out = apply_perturbation(&g, &seg, &p).map_err(ApiError::bad_request)?;
        let new_id = derived_id(&id, &p);
        save_map(&out, state.map_path(&new_id)).map_err(ApiError::internal)?;
        let changed = g.changed_cells(&out).len();
        Ok((StatusCode::CREATED, Json(PerturbResponse { map_id: new_id, perturbation: p, changed_cells: changed })))
    })
    .await
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DemoRequest {
    pub scenario_id: String,
    pub polyline: Vec<Point>,
    #[serde(default = "human")]
    pub source: DemoSource,
    #[serde(default)]
    pub perturbation_index: Option<usize>,
}

fn human() -> DemoSource {
    DemoSource::Human
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StoredDemo {
    pub index: usize,
    pub demo: Demonstration,
}

fn read_demos(path: &Path) -> ApiResult<Vec<Demonstration>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    load_demos(path).map_err(ApiError::internal)
}

async fn post_demo(State(state): State<AppState>, Json(req): Json<DemoRequest>) -> ApiResult<(StatusCode, Json<StoredDemo>)> {
    if req.polyline.len() < 2 {
        return Err(ApiError::bad_request("a demonstration needs at least two points"));
    }
    if req.polyline.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(ApiError::bad_request("non-finite coordinate"));
    }
    let _guard = state.demo_lock.lock().await;
    let path = state.demos_path();
    blocking(move || {
        let index = read_demos(&path)?.len();
        let mut demo = Demonstration::new(req.scenario_id, req.source, req.polyline);
        demo.perturbation_index = req.perturbation_index;
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(ApiError::internal)?;
        }
        append_demo(&path, &demo).map_err(ApiError::internal)?;
        Ok((StatusCode::CREATED, Json(StoredDemo { index, demo })))
    })
    .await
}

async fn list_demos(State(state): State<AppState>) -> ApiResult<Json<Vec<Demonstration>>> {
    let _guard = state.demo_lock.lock().await;
    let path = state.demos_path();
    blocking(move || read_demos(&path).map(Json)).await
}

#[derive(Debug, Deserialize)]
pub struct PlanQuery {
    map: String,
    model: String,
    start: String,
    goal: String,
    #[serde(default)]
    granularity: Option<Granularity>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PlanResponse {
    pub path: Vec<Point>,
    pub relaxed: Vec<usize>,
    pub graph_path: Vec<usize>,
    pub granularity: Option<Granularity>,
}

async fn plan(State(state): State<AppState>, Query(q): Query<PlanQuery>) -> ApiResult<Json<PlanResponse>> {
    blocking(move || {
        let g = read_map(&state, &q.map)?;
        check_id(&q.model)?;
        let model_path = state.data_dir.join("models").join(format!("{}.ckpt", q.model));
        if !model_path.exists() {
            return Err(ApiError::not_found(format!("model {}", q.model)));
        }
        let model = load_model(&model_path).map_err(ApiError::internal)?.model;
        let start = point_param(Some(&q.start), "start")?.expect("present");
        let goal = point_param(Some(&q.goal), "goal")?.expect("present");
        let mut planner = SurenavPlanner::new(model).with_granularity(q.granularity.unwrap_or_default());
        planner.reset(&g, start, goal).map_err(ApiError::bad_request)?;
        let p = planner.plan(&g, start, goal).map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
        Ok(Json(PlanResponse { path: p.path, relaxed: p.relaxed, graph_path: p.graph_path, granularity: p.granularity }))
    })
    .await
}

async fn episode(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    blocking(move || {
        check_id(&id)?;
        let path = state.data_dir.join("episodes").join(format!("{id}.episode.json"));
        if !path.exists() {
            return Err(ApiError::not_found(format!("episode {id}")));
        }
        let log = EpisodeLog::load(&path).map_err(ApiError::internal)?;
        serde_json::to_value(log).map(Json).map_err(ApiError::internal)
    })
    .await
}
