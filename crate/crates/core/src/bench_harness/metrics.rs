use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::RunResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no results")]
    Empty,
    #[error("negative time threshold")]
    NegativeTime,
}

/// Penalized average runtime: solved runs count their scored time, every
/// other run counts `2 * timeout_s`; the mean is over all runs.
pub fn par2(results: &[RunResult], timeout_s: f64) -> Result<f64, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::Empty);
    }
    let sum: f64 = results
        .iter()
        .map(|r| {
            if r.is_solved() {
                r.scored_time_s
            } else {
                2.0 * timeout_s
            }
        })
        .sum();
    Ok(sum / results.len() as f64)
}

/// Fraction of runs solved within `t` seconds.
pub fn solved_ratio_at(results: &[RunResult], t: f64) -> Result<f64, MetricsError> {
    if results.is_empty() {
        return Err(MetricsError::Empty);
    }
    if t < 0.0 {
        return Err(MetricsError::NegativeTime);
    }
    let hits = results.iter().filter(|r| r.is_solved() && r.scored_time_s <= t).count();
    Ok(hits as f64 / results.len() as f64)
}

/// Ascending solve times; entry `k` is the time by which `k + 1` runs were
/// solved.
pub fn cactus_points(results: &[RunResult]) -> Vec<f64> {
    let mut times: Vec<f64> = results
        .iter()
        .filter(|r| r.is_solved())
        .map(|r| r.scored_time_s)
        .collect();
    times.sort_by(f64::total_cmp);
    times
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub total: usize,
    pub solved: usize,
    pub solved_ratio: f64,
    pub par2: f64,
    pub solved_times: Vec<f64>,
    pub timeout_s: f64,
    pub wrong_answers: usize,
    /// Largest peak resident set size over the runs, in KiB.
    pub peak_mem_kb: Option<u64>,
}

impl MetricSet {
    pub fn from_results(results: &[RunResult], timeout_s: f64) -> Result<Self, MetricsError> {
        let solved_times = cactus_points(results);
        let total = results.len();
        Ok(Self {
            total,
            solved: solved_times.len(),
            solved_ratio: solved_times.len() as f64 / total.max(1) as f64,
            par2: par2(results, timeout_s)?,
            solved_times,
            timeout_s,
            wrong_answers: results.iter().filter(|r| r.wrong_answer).count(),
            peak_mem_kb: results.iter().filter_map(|r| r.peak_mem_kb).max(),
        })
    }

    /// Fraction solved within `t`, from the stored solve times.
    pub fn solved_ratio_at(&self, t: f64) -> f64 {
        let hits = self.solved_times.iter().filter(|&&s| s <= t).count();
        hits as f64 / self.total.max(1) as f64
    }

    /// Lexicographic quality key: more solved first, then lower PAR-2.
    pub fn better_than(&self, other: &MetricSet) -> bool {
        self.solved > other.solved || (self.solved == other.solved && self.par2 < other.par2)
    }
}
