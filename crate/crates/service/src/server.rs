//! Assembles the router for a role and serves it.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use axum::http::StatusCode;
use axum::routing::get;
use axum::{middleware, Router};
use gridplan_core::osm::InfraStore;
use thiserror::Error;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;
use tower_http::cors::CorsLayer;

use crate::cache::{GraphCache, GraphLoader};
use crate::client::HttpPathClient;
use crate::config::{ConfigError, GraphSource, Role, ServiceConfig};
use crate::error::ApiError;
use crate::metrics::{metrics_handler, track, MetricsRegistry};
use crate::roles::{
    graph_routes, ingest_health, ingest_routes, local_graph_routes, path_routes, plan_routes, GraphService,
    PathService, PlanService, Planner, StoreOrigin,
};

const INITIAL_BUILD_RETRY: Duration = Duration::from_secs(1);

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("cannot bind {addr}: {source}")]
    Bind { addr: String, source: std::io::Error },
    #[error("startup failed: {0}")]
    Startup(String),
    #[error("server error: {0}")]
    Serve(#[from] std::io::Error),
}

/// A role's router plus handles tests and the CLI need.
pub struct App {
    pub router: Router,
    pub metrics: Arc<MetricsRegistry>,
    /// Present for roles that hold a graph cache.
    pub graph_cache: Option<Arc<GraphCache>>,
}

fn http_client(cfg: &ServiceConfig) -> reqwest::Client {
    reqwest::Client::builder()
        .timeout(Duration::from_secs(cfg.upstream_timeout_s))
        .build()
        .expect("http client builds")
}

async fn load_store(cfg: &ServiceConfig) -> Result<Option<Arc<InfraStore>>, ServiceError> {
    let Some(dir) = cfg.store_path.clone() else {
        return Ok(None);
    };
    let store = tokio::task::spawn_blocking(move || InfraStore::load(&dir))
        .await
        .expect("store load panicked")
        .map_err(|e| ServiceError::Startup(format!("store: {e}")))?;
    log::info!("store loaded: {} towers", store.tower_count());
    Ok(Some(Arc::new(store)))
}

fn loader_for(source: GraphSource, cfg: &ServiceConfig) -> GraphLoader {
    match source {
        GraphSource::File(path) => GraphLoader::File(path),
        GraphSource::Url(url) => GraphLoader::Url {
            url,
            http: http_client(cfg),
        },
    }
}

/// Builds the role's endpoints. Local graph files and monolith graphs are
/// loaded here, so a bad file fails startup rather than the first request.
pub async fn build_app(cfg: &ServiceConfig) -> Result<App, ServiceError> {
    cfg.validate()?;
    let metrics = Arc::new(MetricsRegistry::new(cfg.role.as_str()));
    let mut graph_cache = None;
    let routes = match cfg.role {
        Role::Ingest => {
            let store = load_store(cfg).await?.expect("validated");
            ingest_routes(store).merge(ingest_health())
        }
        Role::Graph => {
            let origin = match &cfg.store_path {
                Some(p) => StoreOrigin::Path(p.clone()),
                None => StoreOrigin::Ingest(cfg.upstreams.ingest[0].clone()),
            };
            let svc = Arc::new(GraphService::new(
                origin.clone(),
                cfg.graph_config(),
                Duration::from_secs(cfg.upstream_timeout_s),
            ));
            match origin {
                StoreOrigin::Path(_) => {
                    svc.rebuild().await.map_err(ServiceError::Startup)?;
                }
                StoreOrigin::Ingest(_) => {
                    tokio::spawn(svc.clone().initial_build(INITIAL_BUILD_RETRY));
                }
            }
            if let Some(secs) = cfg.refresh_interval_s {
                let svc = svc.clone();
                tokio::spawn(async move {
                    let mut tick = tokio::time::interval(Duration::from_secs(secs));
                    tick.tick().await;
                    loop {
                        tick.tick().await;
                        svc.start_rebuild();
                    }
                });
            }
            graph_routes(svc)
        }
        Role::Pathfinder => {
            let source = cfg.effective_graph_source().expect("validated");
            let eager = matches!(source, GraphSource::File(_));
            let cache = Arc::new(GraphCache::new(loader_for(source, cfg)));
            if eager {
                cache.get().await.map_err(|e| ServiceError::Startup(e.to_string()))?;
            }
            graph_cache = Some(cache.clone());
            path_routes(Arc::new(PathService {
                cache,
                snap_radius_m: cfg.snap_radius_m,
            }))
        }
        Role::Solver => {
            let client = HttpPathClient::new(
                cfg.upstreams.pathfinder.clone(),
                Duration::from_secs(cfg.upstream_timeout_s),
            );
            plan_routes(Arc::new(PlanService {
                planner: Planner::Remote(client),
                options: cfg.solver_options(),
            }))
            .route("/healthz", get(|| async { axum::Json(serde_json::json!({"status": "ok"})) }))
        }
        Role::Monolith => {
            let store = load_store(cfg).await?;
            let loader = match (&cfg.graph_source, &store) {
                (Some(source), _) => loader_for(source.clone(), cfg),
                (None, Some(store)) => GraphLoader::Store {
                    store: store.clone(),
                    config: cfg.graph_config(),
                },
                (None, None) => unreachable!("validated"),
            };
            let cache = Arc::new(GraphCache::new(loader));
            cache.get().await.map_err(|e| ServiceError::Startup(e.to_string()))?;
            graph_cache = Some(cache.clone());
            let local = Arc::new(PathService {
                cache,
                snap_radius_m: cfg.snap_radius_m,
            });
            let mut r = local_graph_routes(local.clone()).merge(plan_routes(Arc::new(PlanService {
                planner: Planner::Sequential(local),
                options: cfg.solver_options(),
            })));
            if let Some(store) = store {
                r = r.merge(ingest_routes(store));
            }
            r
        }
    };
    let router = routes
        .route("/metrics", get(metrics_handler).with_state(metrics.clone()))
        .fallback(|| async { ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such route") })
        .layer(middleware::from_fn_with_state(metrics.clone(), track))
        .layer(CorsLayer::permissive());
    Ok(App {
        router,
        metrics,
        graph_cache,
    })
}

/// A service serving on a bound socket.
pub struct RunningService {
    pub addr: SocketAddr,
    pub role: Role,
    pub metrics: Arc<MetricsRegistry>,
    pub graph_cache: Option<Arc<GraphCache>>,
    shutdown: Option<oneshot::Sender<()>>,
    task: Option<JoinHandle<std::io::Result<()>>>,
}

impl RunningService {
    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    /// Waits for the server to stop on its own.
    pub async fn wait(mut self) -> Result<(), ServiceError> {
        if let Some(task) = self.task.take() {
            task.await.expect("server task panicked")?;
        }
        Ok(())
    }

    pub async fn shutdown(mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(task) = self.task.take() {
            let _ = task.await;
        }
    }
}

impl Drop for RunningService {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

/// Binds the configured address and starts serving in the background.
pub async fn start_service(cfg: ServiceConfig) -> Result<RunningService, ServiceError> {
    let addr = format!("{}:{}", cfg.listen_host, cfg.listen_port);
    let listener = TcpListener::bind(&addr)
        .await
        .map_err(|source| ServiceError::Bind { addr: addr.clone(), source })?;
    let app = build_app(&cfg).await?;
    let bound = listener.local_addr()?;
    let (tx, rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        axum::serve(listener, app.router)
            .with_graceful_shutdown(async {
                let _ = rx.await;
            })
            .await
    });
    log::info!("{} listening on {bound}", cfg.role);
    Ok(RunningService {
        addr: bound,
        role: cfg.role,
        metrics: app.metrics,
        graph_cache: app.graph_cache,
        shutdown: Some(tx),
        task: Some(task),
    })
}

/// Serves until interrupted. `on_ready` receives the bound address.
pub async fn run_service(cfg: ServiceConfig, on_ready: impl FnOnce(SocketAddr)) -> Result<(), ServiceError> {
    let mut svc = start_service(cfg).await?;
    on_ready(svc.addr);
    let mut task = svc.task.take().expect("fresh service has a task");
    tokio::select! {
        r = tokio::signal::ctrl_c() => {
            r?;
            if let Some(tx) = svc.shutdown.take() {
                let _ = tx.send(());
            }
            task.await.expect("server task panicked")?;
        }
        r = &mut task => r.expect("server task panicked")?,
    }
    Ok(())
}
