use std::io::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::workload::{WorkItem, Workload};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Outcome {
    Success,
    /// The solver reported targets it cannot reach; not a failure.
    Unreachable,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub mode: String,
    pub replicas: usize,
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchSample {
    pub mode: String,
    pub replicas: usize,
    pub sources: usize,
    pub targets: usize,
    pub rep: usize,
    pub latency_ms: f64,
    pub outcome: Outcome,
}

pub const CSV_HEADER: &str = "mode,replicas,sources,targets,rep,latency_ms,outcome";

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub ready_timeout: Duration,
    pub request_timeout: Duration,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            ready_timeout: Duration::from_secs(60),
            request_timeout: Duration::from_secs(900),
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("{url} not ready within {timeout:?}")]
    NotReady { url: String, timeout: Duration },
    /// The deployment stopped answering; `samples` holds what was measured.
    #[error("endpoint down after {} samples: {reason}", samples.len())]
    EndpointDown { samples: Vec<BenchSample>, reason: String },
    #[error("sample sink: {0}")]
    Sink(#[from] std::io::Error),
}

fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}

pub fn wait_ready(endpoint: &str, timeout: Duration) -> Result<(), RunError> {
    let a = agent(Duration::from_secs(5));
    let url = format!("{}/healthz", endpoint.trim_end_matches('/'));
    let deadline = Instant::now() + timeout;
    loop {
        if let Ok(resp) = a.get(&url).call() {
            if resp.status().as_u16() == 200 {
                return Ok(());
            }
        }
        if Instant::now() >= deadline {
            return Err(RunError::NotReady {
                url: endpoint.to_owned(),
                timeout,
            });
        }
        std::thread::sleep(Duration::from_millis(200));
    }
}

fn classify(status: u16, body: &[u8]) -> Outcome {
    match status {
        200 => Outcome::Success,
        422 => {
            let kind = serde_json::from_slice::<Value>(body)
                .ok()
                .and_then(|v| v.get("error").and_then(Value::as_str).map(str::to_owned));
            match kind.as_deref() {
                Some("UnreachableTargets") | Some("Infeasible") => Outcome::Unreachable,
                _ => Outcome::Error,
            }
        }
        _ => Outcome::Error,
    }
}

/// One timed `/plan` call: from sending the request to reading the last byte.
fn timed_call(a: &ureq::Agent, url: &str, body: &[u8]) -> Result<(f64, Outcome), String> {
    let start = Instant::now();
    let mut resp = a
        .post(url)
        .header("content-type", "application/json")
        .send(body)
        .map_err(|e| e.to_string())?;
    let status = resp.status().as_u16();
    let bytes = resp
        .body_mut()
        .with_config()
        .limit(1 << 30)
        .read_to_vec()
        .map_err(|e| e.to_string())?;
    let latency_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok((latency_ms, classify(status, &bytes)))
}

/// Closed loop: one request in flight at a time, in workload order. Every
/// sample is handed to `sink` as soon as it is taken, so an aborted run
/// leaves everything measured so far behind.
pub fn run_benchmark(
    endpoint: &str,
    workload: &Workload,
    deployment: &Deployment,
    opts: &RunOptions,
    mut sink: impl FnMut(&BenchSample) -> std::io::Result<()>,
) -> Result<Vec<BenchSample>, RunError> {
    wait_ready(endpoint, opts.ready_timeout)?;
    let a = agent(opts.request_timeout);
    let url = format!("{}/plan", endpoint.trim_end_matches('/'));
    let bodies: Vec<Vec<u8>> = workload
        .items
        .iter()
        .map(|it| serde_json::to_vec(&it.request).expect("request serializes"))
        .collect();

    if workload.spec.warmup {
        let first: Vec<usize> = workload
            .items
            .iter()
            .enumerate()
            .take_while(|(_, it)| (it.sources, it.targets) == (workload.items[0].sources, workload.items[0].targets))
            .map(|(i, _)| i)
            .collect();
        for i in first {
            if let Err(reason) = timed_call(&a, &url, &bodies[i]) {
                return Err(RunError::EndpointDown {
                    samples: vec![],
                    reason,
                });
            }
        }
    }

    let mut samples = Vec::with_capacity(workload.items.len());
    for (item, body) in workload.items.iter().zip(&bodies) {
        match timed_call(&a, &url, body) {
            Ok((latency_ms, outcome)) => {
                let s = sample(deployment, item, latency_ms, outcome);
                sink(&s)?;
                samples.push(s);
            }
            Err(reason) => return Err(RunError::EndpointDown { samples, reason }),
        }
    }
    Ok(samples)
}

fn sample(d: &Deployment, item: &WorkItem, latency_ms: f64, outcome: Outcome) -> BenchSample {
    BenchSample {
        mode: d.mode.clone(),
        replicas: d.replicas,
        sources: item.sources,
        targets: item.targets,
        rep: item.rep,
        latency_ms,
        outcome,
    }
}

/// CSV writer that flushes after every row.
pub struct CsvSink {
    writer: csv::Writer<std::fs::File>,
}

impl CsvSink {
    pub fn create(path: &Path) -> std::io::Result<Self> {
        let writer = csv::Writer::from_path(path).map_err(std::io::Error::other)?;
        Ok(CsvSink { writer })
    }

    pub fn write(&mut self, s: &BenchSample) -> std::io::Result<()> {
        self.writer.serialize(s).map_err(std::io::Error::other)?;
        self.writer.flush()
    }

    /// Writes the header of an empty file.
    pub fn finish_empty(path: &Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        writeln!(f, "{CSV_HEADER}")
    }
}

pub fn read_samples(path: &Path) -> Result<Vec<BenchSample>, csv::Error> {
    csv::Reader::from_path(path)?.deserialize().collect()
}
