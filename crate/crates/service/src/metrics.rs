//! Request counters and latency histograms in the plain-text exposition
//! format, plus a strict parser for that format.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::{Arc, Mutex};
use std::time::Instant;

use axum::extract::{MatchedPath, Request, State};
use axum::middleware::Next;
use axum::response::{IntoResponse, Response};
use thiserror::Error;

pub const CONTENT_TYPE: &str = "text/plain; version=0.0.4";

pub const DURATION_BUCKETS: [f64; 10] = [0.005, 0.025, 0.1, 0.5, 1.0, 2.5, 5.0, 10.0, 30.0, 60.0];

pub const REQUESTS_TOTAL: &str = "http_requests_total";
pub const REQUEST_DURATION: &str = "request_duration_seconds";

#[derive(Debug, Default, Clone)]
struct Histogram {
    /// Non-cumulative per-bucket counts; the last slot is `+Inf`.
    buckets: [u64; DURATION_BUCKETS.len() + 1],
    sum: f64,
    count: u64,
}

impl Histogram {
    fn observe(&mut self, secs: f64) {
        let slot = DURATION_BUCKETS
            .iter()
            .position(|&le| secs <= le)
            .unwrap_or(DURATION_BUCKETS.len());
        self.buckets[slot] += 1;
        self.sum += secs;
        self.count += 1;
    }
}

#[derive(Debug, Default)]
struct Series {
    requests: BTreeMap<(String, u16), u64>,
    durations: BTreeMap<String, Histogram>,
}

/// Per-process registry; every series carries the service label.
#[derive(Debug)]
pub struct MetricsRegistry {
    service: String,
    series: Mutex<Series>,
}

fn escape_label(v: &str) -> String {
    v.replace('\\', r"\\").replace('"', "\\\"").replace('\n', r"\n")
}

fn format_value(v: f64) -> String {
    if v == f64::INFINITY {
        "+Inf".to_owned()
    } else {
        format!("{v}")
    }
}

impl MetricsRegistry {
    pub fn new(service: impl Into<String>) -> Self {
        MetricsRegistry {
            service: service.into(),
            series: Mutex::new(Series::default()),
        }
    }

    pub fn service(&self) -> &str {
        &self.service
    }

    pub fn observe(&self, route: &str, status: u16, secs: f64) {
        let mut s = self.series.lock().expect("metrics lock");
        *s.requests.entry((route.to_owned(), status)).or_default() += 1;
        s.durations.entry(route.to_owned()).or_default().observe(secs);
    }

    pub fn request_count(&self, route: &str, status: u16) -> u64 {
        let s = self.series.lock().expect("metrics lock");
        s.requests.get(&(route.to_owned(), status)).copied().unwrap_or(0)
    }

    pub fn render(&self) -> String {
        let s = self.series.lock().expect("metrics lock");
        let service = escape_label(&self.service);
        let mut out = String::new();
        out.push_str("# HELP http_requests_total Handled HTTP requests.\n");
        out.push_str("# TYPE http_requests_total counter\n");
        for ((route, status), n) in &s.requests {
            let _ = writeln!(
                out,
                "{REQUESTS_TOTAL}{{service=\"{service}\",route=\"{}\",status=\"{status}\"}} {n}",
                escape_label(route)
            );
        }
        out.push_str("# HELP request_duration_seconds Request handling time in seconds.\n");
        out.push_str("# TYPE request_duration_seconds histogram\n");
        for (route, h) in &s.durations {
            let route = escape_label(route);
            let mut cumulative = 0;
            for (i, count) in h.buckets.iter().enumerate() {
                cumulative += count;
                let le = DURATION_BUCKETS.get(i).copied().unwrap_or(f64::INFINITY);
                let _ = writeln!(
                    out,
                    "{REQUEST_DURATION}_bucket{{service=\"{service}\",route=\"{route}\",le=\"{}\"}} {cumulative}",
                    format_value(le)
                );
            }
            let _ = writeln!(
                out,
                "{REQUEST_DURATION}_sum{{service=\"{service}\",route=\"{route}\"}} {}",
                h.sum
            );
            let _ = writeln!(
                out,
                "{REQUEST_DURATION}_count{{service=\"{service}\",route=\"{route}\"}} {}",
                h.count
            );
        }
        out
    }
}

/// Axum middleware counting every response under its matched route.
pub async fn track(State(metrics): State<Arc<MetricsRegistry>>, req: Request, next: Next) -> Response {
    let route = req
        .extensions()
        .get::<MatchedPath>()
        .map(|p| p.as_str().to_owned())
        .unwrap_or_else(|| "unmatched".to_owned());
    let start = Instant::now();
    let resp = next.run(req).await;
    metrics.observe(&route, resp.status().as_u16(), start.elapsed().as_secs_f64());
    resp
}

pub async fn metrics_handler(State(metrics): State<Arc<MetricsRegistry>>) -> Response {
    ([(axum::http::header::CONTENT_TYPE, CONTENT_TYPE)], metrics.render()).into_response()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub name: String,
    pub labels: BTreeMap<String, String>,
    pub value: f64,
    pub timestamp_ms: Option<i64>,
}

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {reason}")]
pub struct ExpositionError {
    pub line: usize,
    pub reason: String,
}

fn is_name_start(c: char, colon: bool) -> bool {
    c.is_ascii_alphabetic() || c == '_' || (colon && c == ':')
}

fn is_name_char(c: char, colon: bool) -> bool {
    is_name_start(c, colon) || c.is_ascii_digit()
}

fn valid_name(s: &str, colon: bool) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(|c| is_name_start(c, colon)) && chars.all(|c| is_name_char(c, colon))
}

fn parse_float(s: &str) -> Option<f64> {
    match s {
        "+Inf" | "Inf" => Some(f64::INFINITY),
        "-Inf" => Some(f64::NEG_INFINITY),
        "NaN" => Some(f64::NAN),
        _ if s.chars().all(|c| c.is_ascii_digit() || "+-.eE".contains(c)) => s.parse().ok(),
        _ => None,
    }
}

/// Family a sample belongs to, accounting for histogram/summary suffixes.
fn family_of<'a>(name: &'a str, types: &BTreeMap<String, String>) -> &'a str {
    for suffix in ["_bucket", "_sum", "_count"] {
        if let Some(base) = name.strip_suffix(suffix) {
            if types.get(base).is_some_and(|t| t == "histogram" || t == "summary") {
                return base;
            }
        }
    }
    name
}

fn parse_sample(line: &str) -> Result<Sample, String> {
    let name_end = line
        .find(|c: char| !is_name_char(c, true))
        .unwrap_or(line.len());
    let name = &line[..name_end];
    if !valid_name(name, true) {
        return Err(format!("invalid metric name {name:?}"));
    }
    let mut rest = &line[name_end..];
    let mut labels = BTreeMap::new();
    if let Some(body) = rest.strip_prefix('{') {
        let mut chars = body.char_indices().peekable();
        loop {
            while chars.next_if(|(_, c)| *c == ' ').is_some() {}
            match chars.peek() {
                Some((i, '}')) => {
                    rest = &body[i + 1..];
                    break;
                }
                None => return Err("unterminated label set".to_owned()),
                _ => {}
            }
            let mut lname = String::new();
            while let Some((_, c)) = chars.next_if(|(_, c)| is_name_char(*c, false)) {
                lname.push(c);
            }
            if !valid_name(&lname, false) {
                return Err(format!("invalid label name {lname:?}"));
            }
            if chars.next().map(|(_, c)| c) != Some('=') || chars.next().map(|(_, c)| c) != Some('"') {
                return Err(format!("label {lname} lacks =\"value\""));
            }
            let mut value = String::new();
            loop {
                match chars.next() {
                    Some((_, '"')) => break,
                    Some((_, '\\')) => match chars.next() {
                        Some((_, '\\')) => value.push('\\'),
                        Some((_, '"')) => value.push('"'),
                        Some((_, 'n')) => value.push('\n'),
                        _ => return Err("invalid escape in label value".to_owned()),
                    },
                    Some((_, '\n')) | None => return Err("unterminated label value".to_owned()),
                    Some((_, c)) => value.push(c),
                }
            }
            if labels.insert(lname.clone(), value).is_some() {
                return Err(format!("duplicate label {lname}"));
            }
            while chars.next_if(|(_, c)| *c == ' ').is_some() {}
            match chars.peek() {
                Some((_, ',')) => {
                    chars.next();
                }
                Some((_, '}')) => {}
                _ => return Err("expected , or } in label set".to_owned()),
            }
        }
    }
    if !rest.starts_with([' ', '\t']) {
        return Err("missing value".to_owned());
    }
    let mut fields = rest.split_ascii_whitespace();
    let value = fields
        .next()
        .and_then(parse_float)
        .ok_or_else(|| format!("invalid sample value in {line:?}"))?;
    let timestamp_ms = match fields.next() {
        Some(ts) => Some(ts.parse::<i64>().map_err(|_| format!("invalid timestamp {ts:?}"))?),
        None => None,
    };
    if fields.next().is_some() {
        return Err("trailing tokens".to_owned());
    }
    Ok(Sample {
        name: name.to_owned(),
        labels,
        value,
        timestamp_ms,
    })
}

/// Parses exposition text, rejecting anything outside the format: bad names,
/// malformed label sets, unknown types, duplicate TYPE lines, TYPE after the
/// family's samples, interleaved families, or histogram buckets that are not
/// cumulative and closed by `+Inf`.
pub fn parse_exposition(text: &str) -> Result<Vec<Sample>, ExpositionError> {
    let mut types: BTreeMap<String, String> = BTreeMap::new();
    let mut seen_samples: BTreeSet<String> = BTreeSet::new();
    let mut finished: BTreeSet<String> = BTreeSet::new();
    let mut current: Option<String> = None;
    let mut samples = Vec::new();
    let err = |line: usize, reason: String| ExpositionError { line, reason };

    for (i, raw) in text.split('\n').enumerate() {
        let n = i + 1;
        let line = raw.trim_start_matches([' ', '\t']);
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            let mut parts = comment.trim_start().splitn(3, ' ');
            match parts.next() {
                Some("TYPE") => {
                    let name = parts.next().ok_or_else(|| err(n, "TYPE without name".into()))?;
                    let kind = parts.next().unwrap_or("").trim();
                    if !valid_name(name, true) {
                        return Err(err(n, format!("invalid metric name {name:?}")));
                    }
                    if !["counter", "gauge", "histogram", "summary", "untyped"].contains(&kind) {
                        return Err(err(n, format!("unknown metric type {kind:?}")));
                    }
                    if types.insert(name.to_owned(), kind.to_owned()).is_some() {
                        return Err(err(n, format!("duplicate TYPE for {name}")));
                    }
                    if seen_samples.contains(name) {
                        return Err(err(n, format!("TYPE for {name} after its samples")));
                    }
                }
                Some("HELP") => {
                    let name = parts.next().ok_or_else(|| err(n, "HELP without name".into()))?;
                    if !valid_name(name, true) {
                        return Err(err(n, format!("invalid metric name {name:?}")));
                    }
                }
                _ => {}
            }
            continue;
        }
        let sample = parse_sample(line).map_err(|r| err(n, r))?;
        let family = family_of(&sample.name, &types).to_owned();
        if current.as_deref() != Some(family.as_str()) {
            if let Some(prev) = current.take() {
                finished.insert(prev);
            }
            if finished.contains(&family) {
                return Err(err(n, format!("samples of {family} are not contiguous")));
            }
            current = Some(family.clone());
        }
        if types.get(&family).is_some_and(|t| t == "counter") && !(sample.value >= 0.0) {
            return Err(err(n, format!("negative counter {}", sample.name)));
        }
        seen_samples.insert(family);
        samples.push(sample);
    }
    check_histograms(&samples, &types).map_err(|r| err(0, r))?;
    Ok(samples)
}

fn check_histograms(samples: &[Sample], types: &BTreeMap<String, String>) -> Result<(), String> {
    let mut groups: BTreeMap<(String, Vec<(String, String)>), Vec<(f64, f64)>> = BTreeMap::new();
    let mut counts: BTreeMap<(String, Vec<(String, String)>), f64> = BTreeMap::new();
    for s in samples {
        let family = family_of(&s.name, types);
        if types.get(family).map(String::as_str) != Some("histogram") {
            continue;
        }
        let mut key_labels: Vec<(String, String)> = s
            .labels
            .iter()
            .filter(|(k, _)| k.as_str() != "le")
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        key_labels.sort();
        let key = (family.to_owned(), key_labels);
        if s.name.ends_with("_bucket") {
            let le = s
                .labels
                .get("le")
                .and_then(|v| parse_float(v))
                .ok_or_else(|| format!("bucket of {} without valid le", s.name))?;
            groups.entry(key).or_default().push((le, s.value));
        } else if s.name.ends_with("_count") {
            counts.insert(key, s.value);
        }
    }
    for (key, buckets) in &groups {
        if buckets.last().map(|b| b.0) != Some(f64::INFINITY) {
            return Err(format!("histogram {} lacks a +Inf bucket", key.0));
        }
        if buckets.windows(2).any(|w| w[1].0 <= w[0].0 || w[1].1 < w[0].1) {
            return Err(format!("histogram {} buckets not increasing", key.0));
        }
        if let Some(&count) = counts.get(key) {
            if count != buckets.last().expect("non-empty").1 {
                return Err(format!("histogram {} count differs from +Inf bucket", key.0));
            }
        }
    }
    Ok(())
}
