//! Endpoint sets for each role. The monolith mounts several of them over
//! in-process state.

use std::path::PathBuf;
use std::sync::{Arc, Mutex, RwLock};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use gridplan_core::geo::BoundingBox;
use gridplan_core::graph::{build_graph, serialize_graph, GraphConfig};
use gridplan_core::osm::{BridgePolygon, InfraStore, OsmNode, PowerLine, DEFAULT_CELL_DEG};
use gridplan_core::pathfinder::PathRequest;
use gridplan_core::solver::{plan_mission, InProcessClient, MissionRequest, SolverOptions};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::cache::GraphCache;
use crate::client::HttpPathClient;
use crate::error::{json_bytes, ApiError};

fn parse_body<T: for<'de> Deserialize<'de>>(body: &[u8]) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

async fn healthy() -> Json<serde_json::Value> {
    Json(json!({"status": "ok"}))
}

// ---- ingest ----

#[derive(Debug, Deserialize)]
struct TowersQuery {
    bbox: Option<String>,
}

async fn towers(State(store): State<Arc<InfraStore>>, Query(q): Query<TowersQuery>) -> Result<Response, ApiError> {
    match q.bbox {
        Some(raw) => {
            let bbox: BoundingBox = raw
                .parse()
                .map_err(|e| ApiError::bad_request(format!("invalid bbox {raw:?}: {e}")))?;
            Ok(json_bytes(&store.towers_in(&bbox)))
        }
        None => Ok(json_bytes(&store.towers().collect::<Vec<_>>())),
    }
}

async fn line_nodes(State(store): State<Arc<InfraStore>>) -> Response {
    json_bytes(&store.line_nodes().collect::<Vec<_>>())
}

async fn power_lines(State(store): State<Arc<InfraStore>>) -> Response {
    json_bytes(&store.power_lines().collect::<Vec<_>>())
}

async fn railways(State(store): State<Arc<InfraStore>>) -> Response {
    json_bytes(&store.railway_nodes().collect::<Vec<_>>())
}

async fn bridges(State(store): State<Arc<InfraStore>>) -> Response {
    json_bytes(&store.bridges().collect::<Vec<_>>())
}

/// GET /towers, /linenodes, /powerlines, /railways, /bridges.
pub fn ingest_routes(store: Arc<InfraStore>) -> Router {
    Router::new()
        .route("/towers", get(towers))
        .route("/linenodes", get(line_nodes))
        .route("/powerlines", get(power_lines))
        .route("/railways", get(railways))
        .route("/bridges", get(bridges))
        .with_state(store)
}

pub fn ingest_health() -> Router {
    Router::new().route("/healthz", get(healthy))
}

// ---- graph ----

#[derive(Debug, Clone)]
pub enum StoreOrigin {
    Path(PathBuf),
    /// Base URL of an ingest service.
    Ingest(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Idle,
    Running,
    Done,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RebuildStatus {
    pub job: u64,
    pub state: JobState,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nodes: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub edges: Option<usize>,
}

/// Builds the graph from the store and serves its serialized form.
#[derive(Debug)]
pub struct GraphService {
    origin: StoreOrigin,
    config: GraphConfig,
    http: reqwest::Client,
    current: RwLock<Option<Bytes>>,
    status: Mutex<RebuildStatus>,
}

async fn fetch_json<T: for<'de> Deserialize<'de>>(http: &reqwest::Client, url: String) -> Result<T, String> {
    let resp = http.get(&url).send().await.map_err(|e| format!("{url}: {e}"))?;
    if !resp.status().is_success() {
        return Err(format!("{url} answered {}", resp.status()));
    }
    let bytes = resp.bytes().await.map_err(|e| format!("{url}: {e}"))?;
    serde_json::from_slice(&bytes).map_err(|e| format!("{url}: {e}"))
}

impl GraphService {
    pub fn new(origin: StoreOrigin, config: GraphConfig, timeout: Duration) -> Self {
        GraphService {
            origin,
            config,
            http: reqwest::Client::builder().timeout(timeout).build().expect("http client builds"),
            current: RwLock::new(None),
            status: Mutex::new(RebuildStatus {
                job: 0,
                state: JobState::Idle,
                error: None,
                nodes: None,
                edges: None,
            }),
        }
    }

    pub fn graph_bytes(&self) -> Option<Bytes> {
        self.current.read().expect("graph lock").clone()
    }

    pub fn status(&self) -> RebuildStatus {
        self.status.lock().expect("status lock").clone()
    }

    async fn load_store(&self) -> Result<InfraStore, String> {
        match &self.origin {
            StoreOrigin::Path(dir) => {
                let dir = dir.clone();
                tokio::task::spawn_blocking(move || InfraStore::load(&dir))
                    .await
                    .expect("store load panicked")
                    .map_err(|e| e.to_string())
            }
            StoreOrigin::Ingest(base) => {
                let base = base.trim_end_matches('/');
                let towers: Vec<OsmNode> = fetch_json(&self.http, format!("{base}/towers")).await?;
                let line_nodes: Vec<OsmNode> = fetch_json(&self.http, format!("{base}/linenodes")).await?;
                let lines: Vec<PowerLine> = fetch_json(&self.http, format!("{base}/powerlines")).await?;
                let railways: Vec<OsmNode> = fetch_json(&self.http, format!("{base}/railways")).await?;
                let bridges: Vec<BridgePolygon> = fetch_json(&self.http, format!("{base}/bridges")).await?;
                InfraStore::from_collections(towers, line_nodes, lines, railways, bridges, DEFAULT_CELL_DEG)
                    .map_err(|e| e.to_string())
            }
        }
    }

    /// Rebuilds and swaps in the new graph. The previous graph keeps being
    /// served until the new one is ready, and stays if the build fails.
    pub async fn rebuild(&self) -> Result<(usize, usize), String> {
        let store = self.load_store().await?;
        let config = self.config.clone();
        let (bytes, nodes, edges) = tokio::task::spawn_blocking(move || {
            build_graph(&store, &config).map(|g| (serialize_graph(&g), g.node_count(), g.edges().len()))
        })
        .await
        .expect("graph build panicked")
        .map_err(|e| e.to_string())?;
        *self.current.write().expect("graph lock") = Some(Bytes::from(bytes));
        log::info!("graph built: {nodes} nodes, {edges} edges");
        Ok((nodes, edges))
    }

    async fn run_job(&self, job: u64) {
        let result = self.rebuild().await;
        let mut s = self.status.lock().expect("status lock");
        if s.job != job {
            return;
        }
        match result {
            Ok((nodes, edges)) => {
                s.state = JobState::Done;
                s.nodes = Some(nodes);
                s.edges = Some(edges);
            }
            Err(e) => {
                log::error!("graph rebuild {job} failed: {e}");
                s.state = JobState::Failed;
                s.error = Some(e);
            }
        }
    }

    /// Starts a background rebuild unless one is already running.
    pub fn start_rebuild(self: &Arc<Self>) -> RebuildStatus {
        let mut s = self.status.lock().expect("status lock");
        if s.state == JobState::Running {
            return s.clone();
        }
        *s = RebuildStatus {
            job: s.job + 1,
            state: JobState::Running,
            error: None,
            nodes: None,
            edges: None,
        };
        let job = s.job;
        let this = self.clone();
        tokio::spawn(async move { this.run_job(job).await });
        s.clone()
    }

    /// Builds until the first success, retrying while upstreams come up.
    pub async fn initial_build(self: Arc<Self>, retry: Duration) {
        loop {
            let job = {
                let mut s = self.status.lock().expect("status lock");
                s.job += 1;
                s.state = JobState::Running;
                s.job
            };
            self.run_job(job).await;
            if self.graph_bytes().is_some() {
                return;
            }
            tokio::time::sleep(retry).await;
        }
    }
}

async fn get_graph(State(svc): State<Arc<GraphService>>) -> Result<Response, ApiError> {
    let bytes = svc.graph_bytes().ok_or_else(|| ApiError::graph_unavailable("graph not built yet"))?;
    Ok(([(axum::http::header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

async fn post_rebuild(State(svc): State<Arc<GraphService>>) -> Response {
    (StatusCode::ACCEPTED, Json(svc.start_rebuild())).into_response()
}

async fn get_rebuild(State(svc): State<Arc<GraphService>>) -> Json<RebuildStatus> {
    Json(svc.status())
}

async fn graph_health(State(svc): State<Arc<GraphService>>) -> Response {
    match svc.graph_bytes() {
        Some(_) => Json(json!({"status": "ok"})).into_response(),
        None => ApiError::graph_unavailable("graph not built yet").into_response(),
    }
}

/// GET /graph, POST|GET /graph/rebuild, GET /healthz.
pub fn graph_routes(svc: Arc<GraphService>) -> Router {
    Router::new()
        .route("/graph", get(get_graph))
        .route("/graph/rebuild", post(post_rebuild).get(get_rebuild))
        .route("/healthz", get(graph_health))
        .with_state(svc)
}

// ---- pathfinder ----

#[derive(Debug)]
pub struct PathService {
    pub cache: Arc<GraphCache>,
    pub snap_radius_m: f64,
}

async fn post_path(State(svc): State<Arc<PathService>>, body: Bytes) -> Result<Response, ApiError> {
    let req: PathRequest = parse_body(&body)?;
    let graph = svc.cache.get().await.map_err(|e| ApiError::graph_unavailable(e.0))?;
    let path = graph.find_path(&req, svc.snap_radius_m)?;
    Ok(json_bytes(&path))
}

async fn invalidate(State(svc): State<Arc<PathService>>) -> Json<serde_json::Value> {
    svc.cache.invalidate();
    Json(json!({"invalidated": true}))
}

/// Readiness means the graph is loaded; polling it triggers the load.
async fn path_health(State(svc): State<Arc<PathService>>) -> Response {
    match svc.cache.get().await {
        Ok(g) => Json(json!({"status": "ok", "nodes": g.node_count()})).into_response(),
        Err(e) => ApiError::graph_unavailable(e.0).into_response(),
    }
}

/// POST /path, POST /cache/invalidate, GET /healthz.
pub fn path_routes(svc: Arc<PathService>) -> Router {
    Router::new()
        .route("/path", post(post_path))
        .route("/cache/invalidate", post(invalidate))
        .route("/healthz", get(path_health))
        .with_state(svc)
}

/// GET /graph served from an in-process cache (monolith).
async fn cached_graph(State(svc): State<Arc<PathService>>) -> Result<Response, ApiError> {
    let graph = svc.cache.get().await.map_err(|e| ApiError::graph_unavailable(e.0))?;
    let bytes = tokio::task::spawn_blocking(move || serialize_graph(graph.graph()))
        .await
        .expect("serialization panicked");
    Ok(([(axum::http::header::CONTENT_TYPE, "application/json")], bytes).into_response())
}

/// POST /path, GET /graph and GET /healthz over one local graph.
pub fn local_graph_routes(svc: Arc<PathService>) -> Router {
    Router::new()
        .route("/path", post(post_path))
        .route("/graph", get(cached_graph))
        .route("/healthz", get(path_health))
        .with_state(svc)
}

// ---- solver ----

#[derive(Debug)]
pub enum Planner {
    /// Fan-out to pathfinder replicas.
    Remote(HttpPathClient),
    /// In-process, one pair at a time.
    Sequential(Arc<PathService>),
}

#[derive(Debug)]
pub struct PlanService {
    pub planner: Planner,
    pub options: SolverOptions,
}

async fn post_plan(State(svc): State<Arc<PlanService>>, body: Bytes) -> Result<Response, ApiError> {
    let req: MissionRequest = parse_body(&body)?;
    let plan = match &svc.planner {
        Planner::Remote(client) => plan_mission(&req, client, &svc.options).await?,
        Planner::Sequential(local) => {
            let graph = local.cache.get().await.map_err(|e| ApiError::graph_unavailable(e.0))?;
            let client = InProcessClient::new(graph).with_snap_radius(local.snap_radius_m);
            let opts = SolverOptions {
                max_in_flight: 1,
                ..svc.options.clone()
            };
            tokio::task::spawn_blocking(move || futures::executor::block_on(plan_mission(&req, &client, &opts)))
                .await
                .expect("planning panicked")?
        }
    };
    Ok(json_bytes(&plan))
}

/// POST /plan.
pub fn plan_routes(svc: Arc<PlanService>) -> Router {
    Router::new().route("/plan", post(post_plan)).with_state(svc)
}
