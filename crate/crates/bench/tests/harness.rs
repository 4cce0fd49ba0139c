//! Runs, reports and comparisons against a scripted HTTP endpoint.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::{TcpListener, TcpStream};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use gridplan_bench::host::HostInfo;
use gridplan_bench::run::{read_samples, CsvSink};
use gridplan_bench::{
    build_report, compare_reports, generate_workload, run_benchmark, CompareError, Deployment, Outcome, RunError,
    RunOptions, WorkloadSpec,
};
use gridplan_core::geo::GeoPoint;
use gridplan_core::graph::{InfrastructureGraph, NodeId};

/// Answers `/healthz` and `/plan`. `/plan` replies cycle through
/// `replies`; after `die_after` plan calls the server stops listening.
struct Stub {
    url: String,
    plans: Arc<AtomicUsize>,
}

fn stub(replies: Vec<(u16, &'static str)>, die_after: Option<usize>) -> Stub {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}", listener.local_addr().unwrap());
    let plans = Arc::new(AtomicUsize::new(0));
    let counter = plans.clone();
    std::thread::spawn(move || {
        for conn in listener.incoming() {
            let Ok(conn) = conn else { continue };
            let path = serve_one(conn, &counter, &replies);
            if path == "/plan" && die_after.is_some_and(|n| counter.load(Ordering::SeqCst) >= n) {
                return;
            }
        }
    });
    Stub { url, plans }
}

fn serve_one(mut conn: TcpStream, counter: &AtomicUsize, replies: &[(u16, &str)]) -> String {
    let mut reader = BufReader::new(conn.try_clone().unwrap());
    let mut request_line = String::new();
    reader.read_line(&mut request_line).unwrap();
    let path = request_line.split_whitespace().nth(1).unwrap_or("").to_owned();
    let mut length = 0;
    loop {
        let mut h = String::new();
        reader.read_line(&mut h).unwrap();
        if h.trim().is_empty() {
            break;
        }
        if let Some(v) = h.to_ascii_lowercase().strip_prefix("content-length:") {
            length = v.trim().parse().unwrap();
        }
    }
    let mut body = vec![0; length];
    reader.read_exact(&mut body).unwrap();
    let (status, text) = if path == "/plan" {
        let k = counter.fetch_add(1, Ordering::SeqCst);
        replies[k % replies.len()]
    } else {
        (200, "{\"status\":\"ok\"}")
    };
    let _ = write!(
        conn,
        "HTTP/1.1 {status} X\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{text}",
        text.len()
    );
    path
}

fn graph(n: u64) -> InfrastructureGraph {
    let nodes = (0..n)
        .map(|i| (NodeId(i + 1), GeoPoint::new(55.0 + i as f64 * 0.001, 10.0).unwrap()))
        .collect();
    InfrastructureGraph::new(nodes, vec![]).unwrap()
}

fn small_spec(reps: usize, warmup: bool) -> WorkloadSpec {
    WorkloadSpec {
        source_counts: vec![1, 2],
        target_counts: vec![1, 3],
        reps_per_cell: reps,
        warmup,
        ..Default::default()
    }
}

fn deployment() -> Deployment {
    Deployment {
        mode: "monolith".into(),
        replicas: 1,
    }
}

fn opts() -> RunOptions {
    RunOptions {
        ready_timeout: Duration::from_secs(5),
        request_timeout: Duration::from_secs(5),
    }
}

#[test]
fn one_sample_per_request_and_warmup_discarded() {
    let s = stub(vec![(200, "{}")], None);
    let w = generate_workload(&small_spec(3, true), &graph(10)).unwrap();
    let samples = run_benchmark(&s.url, &w, &deployment(), &opts(), |_| Ok(())).unwrap();
    assert_eq!(samples.len(), 12);
    // the first cell's 3 requests were replayed once beforehand
    assert_eq!(s.plans.load(Ordering::SeqCst), 15);
    assert!(samples.iter().all(|x| x.latency_ms > 0.0 && x.outcome == Outcome::Success));

    let cold = stub(vec![(200, "{}")], None);
    let w = generate_workload(&small_spec(3, false), &graph(10)).unwrap();
    run_benchmark(&cold.url, &w, &deployment(), &opts(), |_| Ok(())).unwrap();
    assert_eq!(cold.plans.load(Ordering::SeqCst), 12);
}

#[test]
fn outcomes_follow_responses() {
    let s = stub(
        vec![
            (200, "{}"),
            (422, r#"{"error":"UnreachableTargets","targets":[3]}"#),
            (500, "{}"),
        ],
        None,
    );
    let w = generate_workload(&small_spec(3, false), &graph(10)).unwrap();
    let samples = run_benchmark(&s.url, &w, &deployment(), &opts(), |_| Ok(())).unwrap();
    let outcomes: Vec<Outcome> = samples.iter().take(3).map(|x| x.outcome).collect();
    assert_eq!(outcomes, vec![Outcome::Success, Outcome::Unreachable, Outcome::Error]);
    let r = build_report(&samples, deployment(), &w.spec, &w.hash, HostInfo::detect());
    for c in &r.cells {
        assert_eq!((c.samples, c.successes, c.unreachable, c.errors), (3, 1, 1, 1));
    }
}

#[test]
fn endpoint_down_keeps_partial_samples() {
    let s = stub(vec![(200, "{}")], Some(5));
    let w = generate_workload(&small_spec(3, false), &graph(10)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("samples.csv");
    let mut sink = CsvSink::create(&csv).unwrap();
    let err = run_benchmark(&s.url, &w, &deployment(), &opts(), |x| sink.write(x)).unwrap_err();
    match err {
        RunError::EndpointDown { samples, .. } => {
            assert_eq!(samples.len(), 5);
            assert_eq!(read_samples(&csv).unwrap(), samples);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn unready_endpoint() {
    let w = generate_workload(&small_spec(1, false), &graph(10)).unwrap();
    let o = RunOptions {
        ready_timeout: Duration::from_millis(300),
        ..opts()
    };
    let err = run_benchmark("http://127.0.0.1:9", &w, &deployment(), &o, |_| Ok(())).unwrap_err();
    assert!(matches!(err, RunError::NotReady { .. }));
}

#[test]
fn comparisons() {
    let s = stub(vec![(200, "{}")], None);
    let spec = small_spec(2, false);
    let w = generate_workload(&spec, &graph(10)).unwrap();
    let samples = run_benchmark(&s.url, &w, &deployment(), &opts(), |_| Ok(())).unwrap();
    let a = build_report(&samples, deployment(), &spec, &w.hash, HostInfo::detect());

    let same = compare_reports(&a, &a).unwrap();
    assert!(same.cells.iter().all(|c| c.speedup == Some(1.0)));

    let mut b = a.clone();
    b.workload_hash = "other".into();
    assert!(matches!(compare_reports(&a, &b), Err(CompareError::WorkloadMismatch { .. })));

    let mut faster = a.clone();
    for c in &mut faster.cells {
        c.mean_ms = c.mean_ms.map(|m| m / 4.0);
    }
    let cmp = compare_reports(&a, &faster).unwrap();
    for c in &cmp.cells {
        assert!((c.speedup.unwrap() - 4.0).abs() < 1e-9);
    }

    let out = tempfile::tempdir().unwrap();
    cmp.write(out.path()).unwrap();
    let csv = std::fs::read_to_string(out.path().join("comparison.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    assert!(csv.starts_with("sources,targets,a_mean_ms,b_mean_ms,speedup\n"));
    let mut plots: Vec<String> = std::fs::read_dir(out.path().join("plots"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    plots.sort();
    assert_eq!(plots, ["sources_01.svg", "sources_02.svg", "targets_01.svg", "targets_03.svg"]);

    a.write_plots(&out.path().join("own")).unwrap();
    assert!(out.path().join("own/by_targets.svg").exists());
    assert!(out.path().join("own/by_sources.svg").exists());
}
