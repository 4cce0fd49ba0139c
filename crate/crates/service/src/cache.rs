//! Process-wide graph cache, loaded once on first use.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, RwLock};
use std::time::Duration;

use gridplan_core::graph::{build_graph, deserialize_graph, serialize_graph, GraphConfig, GraphError};
use gridplan_core::osm::InfraStore;
use gridplan_core::pathfinder::SearchGraph;
use thiserror::Error;

const RETRY_DELAY: Duration = Duration::from_millis(200);

#[derive(Debug, Error, Clone, PartialEq)]
#[error("graph unavailable: {0}")]
pub struct GraphUnavailable(pub String);

#[derive(Debug, Clone)]
pub enum GraphLoader {
    File(PathBuf),
    Url { url: String, http: reqwest::Client },
    /// Build in process, then pass through the serialized form so the result
    /// is identical to a graph fetched from the graph service.
    Store { store: Arc<InfraStore>, config: GraphConfig },
}

#[derive(Debug)]
pub struct GraphCache {
    loader: GraphLoader,
    current: RwLock<Option<Arc<SearchGraph>>>,
    latch: tokio::sync::Mutex<()>,
    loads: AtomicUsize,
}

fn decode(bytes: &[u8]) -> Result<SearchGraph, GraphError> {
    deserialize_graph(bytes).map(SearchGraph::new)
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> T {
    tokio::task::spawn_blocking(f).await.expect("blocking task panicked")
}

impl GraphCache {
    pub fn new(loader: GraphLoader) -> Self {
        GraphCache {
            loader,
            current: RwLock::new(None),
            latch: tokio::sync::Mutex::new(()),
            loads: AtomicUsize::new(0),
        }
    }

    /// Upstream load attempts so far, retries included.
    pub fn load_attempts(&self) -> usize {
        self.loads.load(Ordering::SeqCst)
    }

    pub fn cached(&self) -> Option<Arc<SearchGraph>> {
        self.current.read().expect("cache lock").clone()
    }

    pub fn invalidate(&self) {
        *self.current.write().expect("cache lock") = None;
    }

    /// The cached graph, loading it if needed. Concurrent callers wait on a
    /// single load; a failed load is retried once before giving up.
    pub async fn get(&self) -> Result<Arc<SearchGraph>, GraphUnavailable> {
        if let Some(g) = self.cached() {
            return Ok(g);
        }
        let _guard = self.latch.lock().await;
        if let Some(g) = self.cached() {
            return Ok(g);
        }
        let graph = match self.load_once().await {
            Ok(g) => g,
            Err(first) => {
                log::warn!("graph load failed ({first}), retrying once");
                tokio::time::sleep(RETRY_DELAY).await;
                self.load_once().await.map_err(|e| GraphUnavailable(e.to_string()))?
            }
        };
        let graph = Arc::new(graph);
        *self.current.write().expect("cache lock") = Some(graph.clone());
        log::info!("graph loaded: {} nodes", graph.node_count());
        Ok(graph)
    }

    async fn load_once(&self) -> Result<SearchGraph, String> {
        self.loads.fetch_add(1, Ordering::SeqCst);
        match &self.loader {
            GraphLoader::File(path) => {
                let bytes = tokio::fs::read(path).await.map_err(|e| format!("{}: {e}", path.display()))?;
                blocking(move || decode(&bytes)).await.map_err(|e| e.to_string())
            }
            GraphLoader::Url { url, http } => {
                let resp = http.get(url).send().await.map_err(|e| e.to_string())?;
                if !resp.status().is_success() {
                    return Err(format!("{url} answered {}", resp.status()));
                }
                let bytes = resp.bytes().await.map_err(|e| e.to_string())?;
                blocking(move || decode(&bytes)).await.map_err(|e| e.to_string())
            }
            GraphLoader::Store { store, config } => {
                let (store, config) = (store.clone(), config.clone());
                blocking(move || {
                    let g = build_graph(&store, &config)?;
                    decode(&serialize_graph(&g))
                })
                .await
                .map_err(|e| e.to_string())
            }
        }
    }
}
