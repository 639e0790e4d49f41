//! Metric tables and cactus data computed from raw run results.

use std::path::Path;

use anyhow::Result;
use serde::Serialize;

use solsearch_core::bench_harness::cactus_points;
use solsearch_core::{MetricSet, RunResult};

/// The results of one solver at one timeout.
#[derive(Debug, Clone)]
pub struct Column {
    pub solver: String,
    pub timeout_s: f64,
    pub results: Vec<RunResult>,
}

impl Column {
    pub fn metrics(&self) -> Result<MetricSet> {
        Ok(MetricSet::from_results(&self.results, self.timeout_s)?)
    }
}

/// Splits results by solver id, in order of first appearance.
pub fn columns(results: Vec<RunResult>, timeout_s: Option<f64>) -> Vec<Column> {
    let mut cols: Vec<Column> = Vec::new();
    for r in results {
        match cols.iter_mut().find(|c| c.solver == r.solver_id) {
            Some(c) => c.results.push(r),
            None => cols.push(Column {
                solver: r.solver_id.clone(),
                timeout_s: timeout_s.unwrap_or(r.timeout_s),
                results: vec![r],
            }),
        }
    }
    cols
}

pub fn ratio_label(t: f64) -> String {
    format!("Solved Ratio in t ≤ {t}s")
}

/// Percentage of instances solved within `t`, as printed in tables.
pub fn solved_percent(m: &MetricSet, t: f64) -> f64 {
    let hits = m.solved_times.iter().filter(|&&s| s <= t).count();
    100.0 * hits as f64 / m.total.max(1) as f64
}

/// Header plus one row per threshold and a final PAR-2 row.
pub fn table_rows(cols: &[Column], thresholds: &[f64]) -> Result<Vec<Vec<String>>> {
    let metrics = cols.iter().map(Column::metrics).collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(thresholds.len() + 2);
    let mut header = vec!["Metric".to_string()];
    header.extend(cols.iter().map(|c| c.solver.clone()));
    rows.push(header);
    for &t in thresholds {
        let mut row = vec![ratio_label(t)];
        row.extend(metrics.iter().map(|m| format!("{:.1}%", solved_percent(m, t))));
        rows.push(row);
    }
    let mut par2 = vec!["PAR-2".to_string()];
    par2.extend(metrics.iter().map(|m| format!("{:.2}", m.par2)));
    rows.push(par2);
    Ok(rows)
}

fn to_csv<I: IntoIterator<Item = Vec<String>>>(rows: I) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(String::from_utf8(w.into_inner()?)?)
}

pub fn table_csv(cols: &[Column], thresholds: &[f64]) -> Result<String> {
    to_csv(table_rows(cols, thresholds)?)
}

/// Rows `solver,solved,time_s`: the n-th fastest solve of each solver.
pub fn cactus_csv(cols: &[Column]) -> Result<String> {
    let mut rows = vec![vec!["solver".to_string(), "solved".to_string(), "time_s".to_string()]];
    for c in cols {
        for (i, t) in cactus_points(&c.results).iter().enumerate() {
            rows.push(vec![c.solver.clone(), (i + 1).to_string(), format!("{t}")]);
        }
    }
    to_csv(rows)
}

/// Aligned plain-text version of [`table_rows`].
pub fn render(rows: &[Vec<String>]) -> String {
    let ncols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..ncols)
        .map(|i| {
            rows.iter()
                .filter_map(|r| r.get(i))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for r in rows {
        let cells: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let pad = widths[i] - s.chars().count();
                if i == 0 {
                    format!("{s}{}", " ".repeat(pad))
                } else {
                    format!("{}{s}", " ".repeat(pad))
                }
            })
            .collect();
        out.push_str(cells.join("  ").trim_end());
        out.push('\n');
    }
    out
}

#[derive(Debug, Serialize)]
struct RatioAt {
    t: f64,
    ratio: f64,
}

#[derive(Debug, Serialize)]
struct SolverMetrics {
    solver: String,
    metrics: MetricSet,
    solved_ratio_at: Vec<RatioAt>,
}

/// Writes metrics.json, table.csv and cactus.csv into `dir` and returns the
/// table rows.
pub fn write_tables(dir: &Path, cols: &[Column], thresholds: &[f64]) -> Result<Vec<Vec<String>>> {
    std::fs::create_dir_all(dir)?;
    let mut all = Vec::new();
    for c in cols {
        let metrics = c.metrics()?;
        let solved_ratio_at = thresholds
            .iter()
            .map(|&t| RatioAt {
                t,
                ratio: metrics.solved_ratio_at(t),
            })
            .collect();
        all.push(SolverMetrics {
            solver: c.solver.clone(),
            metrics,
            solved_ratio_at,
        });
    }
    std::fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&all)? + "\n")?;
    let rows = table_rows(cols, thresholds)?;
    std::fs::write(dir.join("table.csv"), to_csv(rows.clone())?)?;
    std::fs::write(dir.join("cactus.csv"), cactus_csv(cols)?)?;
    Ok(rows)
}
