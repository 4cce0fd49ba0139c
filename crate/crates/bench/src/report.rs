use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::host::HostInfo;
use crate::plot::{line_chart, Series};
use crate::run::{BenchSample, Deployment, Outcome};
use crate::workload::WorkloadSpec;

/// Aggregates over the successful samples of one grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub sources: usize,
    pub targets: usize,
    pub samples: usize,
    pub successes: usize,
    pub unreachable: usize,
    pub errors: usize,
    pub success_rate: f64,
    pub mean_ms: Option<f64>,
    pub median_ms: Option<f64>,
    pub p95_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub deployment: Deployment,
    pub host: HostInfo,
    pub workload_hash: String,
    pub spec: WorkloadSpec,
    pub total_samples: usize,
    pub cells: Vec<CellStats>,
}

impl BenchReport {
    pub fn cell(&self, sources: usize, targets: usize) -> Option<&CellStats> {
        self.cells.iter().find(|c| (c.sources, c.targets) == (sources, targets))
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, serde_json::to_vec_pretty(self).expect("report serializes"))
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        serde_json::from_slice(&std::fs::read(path)?).map_err(std::io::Error::other)
    }

    /// Mean latency charts for this deployment alone: targets on the x axis
    /// with a series per source count, and sources on the x axis with a
    /// series per target count.
    pub fn plots(&self) -> Vec<(String, String)> {
        let family = |fixed: fn(&CellStats) -> usize, x: fn(&CellStats) -> usize, unit: &str| -> Vec<Series> {
            let mut keys: Vec<usize> = self.cells.iter().map(fixed).collect();
            keys.sort_unstable();
            keys.dedup();
            keys.into_iter()
                .map(|k| Series {
                    label: format!("{k} {unit}"),
                    points: self
                        .cells
                        .iter()
                        .filter(|c| fixed(c) == k)
                        .filter_map(|c| c.mean_ms.map(|m| (x(c) as f64, m)))
                        .collect(),
                })
                .collect()
        };
        let title = format!("{} x{}", self.deployment.mode, self.deployment.replicas);
        vec![
            (
                "by_targets.svg".to_owned(),
                line_chart(&title, "targets", &family(|c| c.sources, |c| c.targets, "sources")),
            ),
            (
                "by_sources.svg".to_owned(),
                line_chart(&title, "sources", &family(|c| c.targets, |c| c.sources, "targets")),
            ),
        ]
    }

    pub fn write_plots(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, svg) in self.plots() {
            std::fs::write(dir.join(name), svg)?;
        }
        Ok(())
    }
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Mean of the two middle values for even counts.
pub fn median(xs: &[f64]) -> Option<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    match n {
        0 => None,
        _ if n % 2 == 1 => Some(v[n / 2]),
        _ => Some((v[n / 2 - 1] + v[n / 2]) / 2.0),
    }
}

/// Nearest-rank percentile: the smallest value with at least `q` of the
/// samples at or below it.
pub fn percentile(xs: &[f64], q: f64) -> Option<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    if v.is_empty() {
        return None;
    }
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    Some(v[rank - 1])
}

/// Cells in spec order; samples outside the grid are ignored.
pub fn build_report(
    samples: &[BenchSample],
    deployment: Deployment,
    spec: &WorkloadSpec,
    workload_hash: &str,
    host: HostInfo,
) -> BenchReport {
    let cells = spec
        .cells()
        .into_iter()
        .map(|(s, t)| {
            let in_cell: Vec<&BenchSample> = samples.iter().filter(|x| (x.sources, x.targets) == (s, t)).collect();
            let ok: Vec<f64> = in_cell
                .iter()
                .filter(|x| x.outcome == Outcome::Success)
                .map(|x| x.latency_ms)
                .collect();
            let count = |o: Outcome| in_cell.iter().filter(|x| x.outcome == o).count();
            CellStats {
                sources: s,
                targets: t,
                samples: in_cell.len(),
                successes: ok.len(),
                unreachable: count(Outcome::Unreachable),
                errors: count(Outcome::Error),
                success_rate: if in_cell.is_empty() {
                    0.0
                } else {
                    ok.len() as f64 / in_cell.len() as f64
                },
                mean_ms: mean(&ok),
                median_ms: median(&ok),
                p95_ms: percentile(&ok, 0.95),
            }
        })
        .collect();
    BenchReport {
        deployment,
        host,
        workload_hash: workload_hash.to_owned(),
        spec: spec.clone(),
        total_samples: samples.len(),
        cells,
    }
}

/// Path queries one request issues: every source with every target, plus
/// every unordered target pair.
pub fn pair_count(sources: usize, targets: usize) -> usize {
    sources * targets + targets * targets.saturating_sub(1) / 2
}

/// Least-squares line through the points: (slope, intercept, r^2).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64, f64)> {
    let n = xs.len();
    if n < 2 || n != ys.len() {
        return None;
    }
    let mx = mean(xs)?;
    let my = mean(ys)?;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((slope, intercept, r2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_statistics() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[]), None);
        let xs: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(percentile(&xs, 0.95), Some(19.0));
        assert_eq!(percentile(&xs[..10], 0.95), Some(10.0));
        assert_eq!(percentile(&[7.0], 0.95), Some(7.0));
    }

    #[test]
    fn perfect_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys = [3.0, 5.0, 7.0, 9.0];
        let (m, b, r2) = linear_fit(&xs, &ys).unwrap();
        assert!((m - 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
        assert!(linear_fit(&[1.0, 1.0], &[2.0, 3.0]).is_none());
    }

    #[test]
    fn pairs() {
        assert_eq!(pair_count(2, 3), 9);
        assert_eq!(pair_count(16, 64), 16 * 64 + 2016);
        assert_eq!(pair_count(1, 1), 1);
    }

    #[test]
    fn cell_outcomes() {
        let spec = WorkloadSpec {
            source_counts: vec![1],
            target_counts: vec![2],
            reps_per_cell: 3,
            ..Default::default()
        };
        let mk = |rep, latency_ms, outcome| BenchSample {
            mode: "m".into(),
            replicas: 1,
            sources: 1,
            targets: 2,
            rep,
            latency_ms,
            outcome,
        };
        let samples = vec![
            mk(0, 10.0, Outcome::Success),
            mk(1, 50.0, Outcome::Unreachable),
            mk(2, 20.0, Outcome::Success),
        ];
        let host = HostInfo::detect();
        let r = build_report(
            &samples,
            Deployment {
                mode: "m".into(),
                replicas: 1,
            },
            &spec,
            "h",
            host,
        );
        let c = &r.cells[0];
        assert_eq!((c.samples, c.successes, c.unreachable, c.errors), (3, 2, 1, 0));
        assert_eq!(c.mean_ms, Some(15.0));
        assert!((c.success_rate - 2.0 / 3.0).abs() < 1e-12);
    }
}
