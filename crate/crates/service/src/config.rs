//! Service configuration: a JSON file with environment overrides.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gridplan_core::graph::GraphConfig;
use gridplan_core::pathfinder::DEFAULT_SNAP_RADIUS_M;
use gridplan_core::solver::{SolverOptions, DEFAULT_MAX_IN_FLIGHT, DEFAULT_MAX_MOVES};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Ingest,
    Graph,
    Pathfinder,
    Solver,
    Monolith,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Ingest => "ingest",
            Role::Graph => "graph",
            Role::Pathfinder => "pathfinder",
            Role::Solver => "solver",
            Role::Monolith => "monolith",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "ingest" => Ok(Role::Ingest),
            "graph" => Ok(Role::Graph),
            "pathfinder" => Ok(Role::Pathfinder),
            "solver" => Ok(Role::Solver),
            "monolith" => Ok(Role::Monolith),
            other => Err(ConfigError::UnknownRole(other.to_owned())),
        }
    }
}

/// Where a pathfinder (or monolith) obtains its graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GraphSource {
    /// Serialized graph file on local disk.
    File(PathBuf),
    /// Full URL of a serialized graph document, usually `<graph service>/graph`.
    Url(String),
}

/// Base URLs of the services a role talks to.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Upstreams {
    pub ingest: Vec<String>,
    pub graph: Vec<String>,
    pub pathfinder: Vec<String>,
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("unknown role {0:?}")]
    UnknownRole(String),
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid value {value:?} for {var}")]
    InvalidEnv { var: String, value: String },
    #[error("role {role} requires {what}")]
    Missing { role: Role, what: &'static str },
    #[error("GRAPH_URL and GRAPH_FILE are mutually exclusive")]
    ConflictingGraphSource,
    #[error("{field} out of range: {value}")]
    OutOfRange { field: &'static str, value: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    pub role: Role,
    pub listen_host: String,
    /// 0 asks the OS for a free port.
    pub listen_port: u16,
    pub upstreams: Upstreams,
    pub store_path: Option<PathBuf>,
    pub graph_source: Option<GraphSource>,
    pub penalty_factor: f64,
    pub indirect_radius_m: f64,
    pub merge_bridges: bool,
    pub snap_radius_m: f64,
    pub max_in_flight: usize,
    pub seed: u64,
    pub return_to_start: bool,
    pub max_moves: usize,
    /// Periodic graph rebuild on the graph role; off when unset.
    pub refresh_interval_s: Option<u64>,
    /// Timeout for each upstream HTTP call.
    pub upstream_timeout_s: u64,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        let graph = GraphConfig::default();
        ServiceConfig {
            role: Role::Monolith,
            listen_host: "127.0.0.1".to_owned(),
            listen_port: 8080,
            upstreams: Upstreams::default(),
            store_path: None,
            graph_source: None,
            penalty_factor: graph.penalty_factor,
            indirect_radius_m: graph.indirect_radius_m,
            merge_bridges: graph.merge_bridges,
            snap_radius_m: DEFAULT_SNAP_RADIUS_M,
            max_in_flight: DEFAULT_MAX_IN_FLIGHT,
            seed: 0,
            return_to_start: false,
            max_moves: DEFAULT_MAX_MOVES,
            refresh_interval_s: None,
            upstream_timeout_s: 120,
        }
    }
}

fn parse_env<T: FromStr>(var: &str, value: &str) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| ConfigError::InvalidEnv {
        var: var.to_owned(),
        value: value.to_owned(),
    })
}

fn parse_bool(var: &str, value: &str) -> Result<bool, ConfigError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(ConfigError::InvalidEnv {
            var: var.to_owned(),
            value: value.to_owned(),
        }),
    }
}

fn url_list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(|s| s.trim().trim_end_matches('/').to_owned())
        .filter(|s| !s.is_empty())
        .collect()
}

impl ServiceConfig {
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_owned(),
            source,
        })
    }

    /// Overrides fields from variables visible through `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        if let Some(v) = lookup("ROLE") {
            self.role = v.parse()?;
        }
        if let Some(v) = lookup("LISTEN_HOST") {
            self.listen_host = v.trim().to_owned();
        }
        if let Some(v) = lookup("LISTEN_PORT") {
            self.listen_port = parse_env("LISTEN_PORT", &v)?;
        }
        if let Some(v) = lookup("STORE_PATH") {
            self.store_path = Some(PathBuf::from(v));
        }
        match (lookup("GRAPH_URL"), lookup("GRAPH_FILE")) {
            (Some(_), Some(_)) => return Err(ConfigError::ConflictingGraphSource),
            (Some(url), None) => self.graph_source = Some(GraphSource::Url(url.trim().to_owned())),
            (None, Some(file)) => self.graph_source = Some(GraphSource::File(PathBuf::from(file))),
            (None, None) => {}
        }
        if let Some(v) = lookup("INGEST_URL") {
            self.upstreams.ingest = url_list(&v);
        }
        if let Some(v) = lookup("GRAPH_SERVICE_URL") {
            self.upstreams.graph = url_list(&v);
        }
        if let Some(v) = lookup("PATHFINDER_URLS") {
            self.upstreams.pathfinder = url_list(&v);
        }
        if let Some(v) = lookup("PENALTY_FACTOR") {
            self.penalty_factor = parse_env("PENALTY_FACTOR", &v)?;
        }
        if let Some(v) = lookup("INDIRECT_RADIUS_M") {
            self.indirect_radius_m = parse_env("INDIRECT_RADIUS_M", &v)?;
        }
        if let Some(v) = lookup("MERGE_BRIDGES") {
            self.merge_bridges = parse_bool("MERGE_BRIDGES", &v)?;
        }
        if let Some(v) = lookup("SNAP_RADIUS_M") {
            self.snap_radius_m = parse_env("SNAP_RADIUS_M", &v)?;
        }
        if let Some(v) = lookup("MAX_IN_FLIGHT") {
            self.max_in_flight = parse_env("MAX_IN_FLIGHT", &v)?;
        }
        if let Some(v) = lookup("SEED") {
            self.seed = parse_env("SEED", &v)?;
        }
        if let Some(v) = lookup("RETURN_TO_START") {
            self.return_to_start = parse_bool("RETURN_TO_START", &v)?;
        }
        if let Some(v) = lookup("MAX_MOVES") {
            self.max_moves = parse_env("MAX_MOVES", &v)?;
        }
        if let Some(v) = lookup("REFRESH_INTERVAL_S") {
            let secs: u64 = parse_env("REFRESH_INTERVAL_S", &v)?;
            self.refresh_interval_s = (secs > 0).then_some(secs);
        }
        if let Some(v) = lookup("UPSTREAM_TIMEOUT_S") {
            self.upstream_timeout_s = parse_env("UPSTREAM_TIMEOUT_S", &v)?;
        }
        Ok(())
    }

    /// File (when given), then process environment, then validation.
    pub fn load(path: Option<&Path>, role: Option<Role>) -> Result<Self, ConfigError> {
        let mut cfg = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        if let Some(role) = role {
            cfg.role = role;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Graph source, falling back to the first graph upstream.
    pub fn effective_graph_source(&self) -> Option<GraphSource> {
        self.graph_source.clone().or_else(|| {
            self.upstreams
                .graph
                .first()
                .map(|base| GraphSource::Url(format!("{}/graph", base.trim_end_matches('/'))))
        })
    }

    pub fn graph_config(&self) -> GraphConfig {
        GraphConfig {
            penalty_factor: self.penalty_factor,
            indirect_radius_m: self.indirect_radius_m,
            merge_bridges: self.merge_bridges,
        }
    }

    pub fn solver_options(&self) -> SolverOptions {
        SolverOptions {
            max_in_flight: self.max_in_flight,
            seed: self.seed,
            return_to_start: self.return_to_start,
            max_moves: self.max_moves,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.penalty_factor >= 1.0 && self.penalty_factor.is_finite()) {
            return Err(ConfigError::OutOfRange {
                field: "penalty_factor",
                value: self.penalty_factor.to_string(),
            });
        }
        if !(self.indirect_radius_m > 0.0 && self.indirect_radius_m.is_finite()) {
            return Err(ConfigError::OutOfRange {
                field: "indirect_radius_m",
                value: self.indirect_radius_m.to_string(),
            });
        }
        if !(self.snap_radius_m >= 0.0 && self.snap_radius_m.is_finite()) {
            return Err(ConfigError::OutOfRange {
                field: "snap_radius_m",
                value: self.snap_radius_m.to_string(),
            });
        }
        if self.max_in_flight == 0 {
            return Err(ConfigError::OutOfRange {
                field: "max_in_flight",
                value: "0".to_owned(),
            });
        }
        let missing = |what| ConfigError::Missing { role: self.role, what };
        match self.role {
            Role::Ingest if self.store_path.is_none() => Err(missing("store_path")),
            Role::Graph if self.store_path.is_none() && self.upstreams.ingest.is_empty() => {
                Err(missing("store_path or an ingest upstream"))
            }
            Role::Pathfinder if self.effective_graph_source().is_none() => {
                Err(missing("GRAPH_URL, GRAPH_FILE or a graph upstream"))
            }
            Role::Solver if self.upstreams.pathfinder.is_empty() => Err(missing("pathfinder upstreams")),
            Role::Monolith if self.store_path.is_none() && self.graph_source.is_none() => {
                Err(missing("store_path or a graph source"))
            }
            _ => Ok(()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    fn env(pairs: &[(&str, &str)]) -> impl Fn(&str) -> Option<String> {
        let map: HashMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
        move |k| map.get(k).cloned()
    }

    #[test]
    fn solver_needs_pathfinders() {
        let cfg = ServiceConfig {
            role: Role::Solver,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(ConfigError::Missing { role: Role::Solver, .. })));

        let mut cfg = cfg;
        cfg.apply_env(env(&[("PATHFINDER_URLS", "http://a:1/, http://b:2")])).unwrap();
        assert_eq!(cfg.upstreams.pathfinder, vec!["http://a:1", "http://b:2"]);
        cfg.validate().unwrap();
    }

    #[test]
    fn env_overrides_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"role": "pathfinder", "listen_port": 9000, "graph_source": {"file": "/tmp/g.json"}, "seed": 3}"#).unwrap();
        let mut cfg = ServiceConfig::from_file(&path).unwrap();
        assert_eq!(cfg.graph_source, Some(GraphSource::File("/tmp/g.json".into())));
        cfg.apply_env(env(&[("LISTEN_PORT", "9100"), ("SEED", "7"), ("GRAPH_URL", "http://g/graph")]))
            .unwrap();
        assert_eq!(cfg.listen_port, 9100);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.graph_source, Some(GraphSource::Url("http://g/graph".into())));
        cfg.validate().unwrap();
    }

    #[test]
    fn bad_values_rejected() {
        let mut cfg = ServiceConfig::default();
        assert!(matches!(
            cfg.apply_env(env(&[("MAX_IN_FLIGHT", "many")])),
            Err(ConfigError::InvalidEnv { .. })
        ));
        assert!(matches!(
            cfg.apply_env(env(&[("GRAPH_URL", "x"), ("GRAPH_FILE", "y")])),
            Err(ConfigError::ConflictingGraphSource)
        ));
        assert!(matches!(cfg.apply_env(env(&[("ROLE", "gateway")])), Err(ConfigError::UnknownRole(_))));
        let cfg = ServiceConfig {
            penalty_factor: 0.5,
            store_path: Some("s".into()),
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(ConfigError::OutOfRange { .. })));
    }

    #[test]
    fn unknown_fields_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        std::fs::write(&path, r#"{"role": "ingest", "colour": "blue"}"#).unwrap();
        assert!(matches!(ServiceConfig::from_file(&path), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn graph_upstream_fallback() {
        let cfg = ServiceConfig {
            role: Role::Pathfinder,
            upstreams: Upstreams {
                graph: vec!["http://graph:8080".into()],
                ..Default::default()
            },
            ..Default::default()
        };
        assert_eq!(
            cfg.effective_graph_source(),
            Some(GraphSource::Url("http://graph:8080/graph".into()))
        );
        cfg.validate().unwrap();
    }
}
