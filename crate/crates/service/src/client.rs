//! Path queries over HTTP against pathfinder replicas.

use std::time::Duration;

use gridplan_core::pathfinder::{PathError, PathRequest, PathResult};
use gridplan_core::solver::{CallError, PathClient};
use reqwest::StatusCode;

use crate::balance::{Attempt, BalanceError, RoundRobin};

/// `PathClient` that spreads calls over replicas round robin.
#[derive(Debug)]
pub struct HttpPathClient {
    replicas: RoundRobin,
    http: reqwest::Client,
}

impl HttpPathClient {
    pub fn new(urls: Vec<String>, timeout: Duration) -> Self {
        let http = reqwest::Client::builder()
            .timeout(timeout)
            .pool_max_idle_per_host(64)
            .build()
            .expect("http client builds");
        HttpPathClient {
            replicas: RoundRobin::new(urls),
            http,
        }
    }

    pub fn replicas(&self) -> &[String] {
        self.replicas.urls()
    }
}

async fn attempt(http: &reqwest::Client, base: String, req: &PathRequest) -> Attempt<PathResult, PathError> {
    let resp = match http.post(format!("{base}/path")).json(req).send().await {
        Ok(r) => r,
        Err(e) => return Attempt::Failed(e.to_string()),
    };
    let status = resp.status();
    let body = match resp.bytes().await {
        Ok(b) => b,
        Err(e) => return Attempt::Failed(e.to_string()),
    };
    match status {
        StatusCode::OK => match serde_json::from_slice(&body) {
            Ok(path) => Attempt::Done(path),
            Err(e) => Attempt::Failed(format!("malformed path response: {e}")),
        },
        StatusCode::NOT_FOUND | StatusCode::UNPROCESSABLE_ENTITY => match serde_json::from_slice(&body) {
            Ok(err) => Attempt::Rejected(err),
            Err(e) => Attempt::Failed(format!("malformed {status} response: {e}")),
        },
        _ => Attempt::Failed(format!("status {status}: {}", String::from_utf8_lossy(&body))),
    }
}

impl PathClient for HttpPathClient {
    fn shortest_path(&self, req: PathRequest) -> impl std::future::Future<Output = Result<PathResult, CallError>> + Send {
        async move {
            self.replicas
                .call(|base| attempt(&self.http, base, &req))
                .await
                .map_err(|e| match e {
                    BalanceError::Rejected(err) => CallError::Path(err),
                    BalanceError::AllReplicasFailed(f) => CallError::Transport(format!("all replicas failed: {}", f.join("; "))),
                })
        }
    }
}
