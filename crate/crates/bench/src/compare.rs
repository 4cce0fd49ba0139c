use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plot::{line_chart, Series};
use crate::report::BenchReport;

#[derive(Debug, Error)]
pub enum CompareError {
    #[error("reports come from different workloads ({a} vs {b})")]
    WorkloadMismatch { a: String, b: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellComparison {
    pub sources: usize,
    pub targets: usize,
    pub a_mean_ms: Option<f64>,
    pub b_mean_ms: Option<f64>,
    /// `a_mean / b_mean`: above 1 means `b` is faster.
    pub speedup: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub a_label: String,
    pub b_label: String,
    pub cells: Vec<CellComparison>,
}

fn label(r: &BenchReport) -> String {
    format!("{} x{}", r.deployment.mode, r.deployment.replicas)
}

pub fn compare_reports(a: &BenchReport, b: &BenchReport) -> Result<Comparison, CompareError> {
    if a.workload_hash != b.workload_hash {
        return Err(CompareError::WorkloadMismatch {
            a: a.workload_hash.clone(),
            b: b.workload_hash.clone(),
        });
    }
    let cells = a
        .cells
        .iter()
        .map(|ca| {
            let b_mean = b.cell(ca.sources, ca.targets).and_then(|c| c.mean_ms);
            CellComparison {
                sources: ca.sources,
                targets: ca.targets,
                a_mean_ms: ca.mean_ms,
                b_mean_ms: b_mean,
                speedup: match (ca.mean_ms, b_mean) {
                    (Some(x), Some(y)) if y > 0.0 => Some(x / y),
                    _ => None,
                },
            }
        })
        .collect();
    Ok(Comparison {
        a_label: label(a),
        b_label: label(b),
        cells,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.3}")).unwrap_or_default()
}

impl Comparison {
    pub fn speedup(&self, sources: usize, targets: usize) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| (c.sources, c.targets) == (sources, targets))
            .and_then(|c| c.speedup)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("sources,targets,a_mean_ms,b_mean_ms,speedup\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                c.sources,
                c.targets,
                opt(c.a_mean_ms),
                opt(c.b_mean_ms),
                opt(c.speedup)
            );
        }
        out
    }

    fn axis_values(&self, pick: impl Fn(&CellComparison) -> usize) -> Vec<usize> {
        let mut v: Vec<usize> = self.cells.iter().map(pick).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Two plot families: one chart per source count with targets on the x
    /// axis, and one per target count with sources on the x axis.
    pub fn plots(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        for s in self.axis_values(|c| c.sources) {
            let row: Vec<&CellComparison> = self.cells.iter().filter(|c| c.sources == s).collect();
            out.push((
                format!("sources_{s:02}.svg"),
                line_chart(
                    &format!("{s} sources"),
                    "targets",
                    &self.series(&row, |c| c.targets),
                ),
            ));
        }
        for t in self.axis_values(|c| c.targets) {
            let col: Vec<&CellComparison> = self.cells.iter().filter(|c| c.targets == t).collect();
            out.push((
                format!("targets_{t:02}.svg"),
                line_chart(
                    &format!("{t} targets"),
                    "sources",
                    &self.series(&col, |c| c.sources),
                ),
            ));
        }
        out
    }

    fn series(&self, cells: &[&CellComparison], x: impl Fn(&CellComparison) -> usize) -> Vec<Series> {
        let pts = |f: &dyn Fn(&CellComparison) -> Option<f64>| -> Vec<(f64, f64)> {
            cells.iter().filter_map(|c| f(c).map(|y| (x(c) as f64, y))).collect()
        };
        vec![
            Series {
                label: self.a_label.clone(),
                points: pts(&|c| c.a_mean_ms),
            },
            Series {
                label: self.b_label.clone(),
                points: pts(&|c| c.b_mean_ms),
            },
        ]
    }

    /// Writes comparison.csv, comparison.json and plots/*.svg under `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), CompareError> {
        let plots = dir.join("plots");
        std::fs::create_dir_all(&plots)?;
        std::fs::write(dir.join("comparison.csv"), self.to_csv())?;
        std::fs::write(
            dir.join("comparison.json"),
            serde_json::to_vec_pretty(self).expect("comparison serializes"),
        )?;
        for (name, svg) in self.plots() {
            std::fs::write(plots.join(name), svg)?;
        }
        Ok(())
    }
}
