//! Post-deployment check: replay golden mission requests and compare the
//! returned plans field by field.

use std::fmt;
use std::path::Path;
use std::time::{Duration, Instant};

use gridplan_core::geo::haversine_distance;
use gridplan_core::solver::{MissionPlan, MissionRequest};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on distances and waypoint positions, in meters.
pub const DISTANCE_TOLERANCE_M: f64 = 1.0;

const POLL_INTERVAL: Duration = Duration::from_millis(200);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldenCase {
    pub name: String,
    pub request: MissionRequest,
    pub expected: MissionPlan,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GoldenFile {
    pub cases: Vec<GoldenCase>,
}

impl GoldenFile {
    pub fn load(path: &Path) -> Result<Self, ConformanceError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConformanceError::Golden(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ConformanceError::Golden(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<(), ConformanceError> {
        let text = serde_json::to_string_pretty(self).expect("golden serializes");
        std::fs::write(path, text).map_err(|e| ConformanceError::Golden(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Error)]
pub enum ConformanceError {
    #[error("{url} not ready within {timeout:?}")]
    ReadinessTimeout { url: String, timeout: Duration },
    #[error("golden file: {0}")]
    Golden(String),
    #[error("request to {url} failed: {reason}")]
    Request { url: String, reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseResult {
    pub name: String,
    pub diffs: Vec<String>,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.diffs.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConformanceReport {
    pub cases: Vec<CaseResult>,
}

impl ConformanceReport {
    pub fn passed(&self) -> bool {
        self.cases.iter().all(CaseResult::passed)
    }

    pub fn failures(&self) -> usize {
        self.cases.iter().filter(|c| !c.passed()).count()
    }
}

impl fmt::Display for ConformanceReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for case in &self.cases {
            if case.passed() {
                writeln!(f, "PASS {}", case.name)?;
            } else {
                writeln!(f, "FAIL {}", case.name)?;
                for d in &case.diffs {
                    writeln!(f, "  {d}")?;
                }
            }
        }
        write!(f, "{} of {} cases passed", self.cases.len() - self.failures(), self.cases.len())
    }
}

fn within(a: i64, b: i64) -> bool {
    (a - b).abs() as f64 <= DISTANCE_TOLERANCE_M
}

/// Field-level differences: orders and ids exact, distances and waypoint
/// positions within [`DISTANCE_TOLERANCE_M`].
pub fn diff_plans(expected: &MissionPlan, actual: &MissionPlan) -> Vec<String> {
    let mut diffs = Vec::new();
    if expected.routes.len() != actual.routes.len() {
        diffs.push(format!(
            "routes: expected {} routes, got {}",
            expected.routes.len(),
            actual.routes.len()
        ));
    }
    for (i, (e, a)) in expected.routes.iter().zip(&actual.routes).enumerate() {
        if e.uav_index != a.uav_index {
            diffs.push(format!("routes[{i}].uav_index: expected {}, got {}", e.uav_index, a.uav_index));
        }
        if e.start_node != a.start_node {
            diffs.push(format!("routes[{i}].start_node: expected {}, got {}", e.start_node, a.start_node));
        }
        if e.visit_order != a.visit_order {
            diffs.push(format!(
                "routes[{i}].visit_order: expected {:?}, got {:?}",
                e.visit_order.iter().map(|n| n.0).collect::<Vec<_>>(),
                a.visit_order.iter().map(|n| n.0).collect::<Vec<_>>()
            ));
        }
        if !within(e.distance_m, a.distance_m) {
            diffs.push(format!(
                "routes[{i}].distance_m: expected {}, got {} (off by {} m)",
                e.distance_m,
                a.distance_m,
                (e.distance_m - a.distance_m).abs()
            ));
        }
        if e.waypoints.len() != a.waypoints.len() {
            diffs.push(format!(
                "routes[{i}].waypoints: expected {} points, got {}",
                e.waypoints.len(),
                a.waypoints.len()
            ));
        } else if let Some((k, d)) = e
            .waypoints
            .iter()
            .zip(&a.waypoints)
            .map(|(p, q)| haversine_distance(*p, *q))
            .enumerate()
            .find(|(_, d)| *d > DISTANCE_TOLERANCE_M)
        {
            diffs.push(format!("routes[{i}].waypoints[{k}]: off by {d:.2} m"));
        }
    }
    if !within(expected.total_distance_m, actual.total_distance_m) {
        diffs.push(format!(
            "total_distance_m: expected {}, got {} (off by {} m)",
            expected.total_distance_m,
            actual.total_distance_m,
            (expected.total_distance_m - actual.total_distance_m).abs()
        ));
    }
    diffs
}

/// Polls `<url>/healthz` until it answers 200.
pub async fn wait_ready(http: &reqwest::Client, url: &str, timeout: Duration) -> Result<(), ConformanceError> {
    let deadline = Instant::now() + timeout;
    let health = format!("{}/healthz", url.trim_end_matches('/'));
    loop {
        if let Ok(resp) = http.get(&health).send().await {
            if resp.status().is_success() {
                return Ok(());
            }
        }
        if Instant::now() >= deadline {
            return Err(ConformanceError::ReadinessTimeout {
                url: url.to_owned(),
                timeout,
            });
        }
        tokio::time::sleep(POLL_INTERVAL).await;
    }
}

/// Raw `/plan` response: status and body.
pub async fn post_plan(http: &reqwest::Client, url: &str, req: &MissionRequest) -> Result<(u16, Vec<u8>), ConformanceError> {
    let endpoint = format!("{}/plan", url.trim_end_matches('/'));
    let fail = |e: reqwest::Error| ConformanceError::Request {
        url: endpoint.clone(),
        reason: e.to_string(),
    };
    let resp = http.post(&endpoint).json(req).send().await.map_err(fail)?;
    let status = resp.status().as_u16();
    let body = resp.bytes().await.map_err(fail)?;
    Ok((status, body.to_vec()))
}

fn client(timeout: Duration) -> reqwest::Client {
    reqwest::Client::builder().timeout(timeout).build().expect("http client builds")
}

/// Plans every request against `url` and records the answers as golden cases.
pub async fn generate_golden(url: &str, requests: &[MissionRequest]) -> Result<GoldenFile, ConformanceError> {
    let http = client(Duration::from_secs(600));
    let mut cases = Vec::with_capacity(requests.len());
    for (i, req) in requests.iter().enumerate() {
        let (status, body) = post_plan(&http, url, req).await?;
        if status != 200 {
            return Err(ConformanceError::Golden(format!(
                "case {i}: status {status}: {}",
                String::from_utf8_lossy(&body)
            )));
        }
        let expected = serde_json::from_slice(&body).map_err(|e| ConformanceError::Golden(format!("case {i}: {e}")))?;
        cases.push(GoldenCase {
            name: format!("case-{i:03}"),
            request: req.clone(),
            expected,
        });
    }
    Ok(GoldenFile { cases })
}

/// Waits for readiness, then replays every golden case.
pub async fn conformance_test(
    url: &str,
    golden: &GoldenFile,
    ready_timeout: Duration,
) -> Result<ConformanceReport, ConformanceError> {
    let http = client(Duration::from_secs(600));
    wait_ready(&http, url, ready_timeout).await?;
    let mut report = ConformanceReport::default();
    for case in &golden.cases {
        let diffs = match post_plan(&http, url, &case.request).await {
            Err(e) => vec![e.to_string()],
            Ok((200, body)) => match serde_json::from_slice::<MissionPlan>(&body) {
                Ok(actual) => diff_plans(&case.expected, &actual),
                Err(e) => vec![format!("malformed plan: {e}")],
            },
            Ok((status, body)) => vec![format!("status {status}: {}", String::from_utf8_lossy(&body))],
        };
        report.cases.push(CaseResult {
            name: case.name.clone(),
            diffs,
        });
    }
    Ok(report)
}
