//! Train/test instance sets ordered by difficulty, and the timeout schedule
//! across optimization rounds.

use std::cmp::Ordering;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bench_harness::{MetricSet, RunResult};
use crate::instance_model::rng::XorShift64Star;
use crate::instance_model::{Instance, InstanceLoadError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DifficultyProxy {
    BaselineConflicts,
    BaselineWallTime,
    FormulaSize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurriculumConfig {
    pub initial_timeout_s: f64,
    pub escalation_factor: f64,
    pub max_timeout_s: f64,
    pub improvement_threshold: f64,
    pub test_fraction: f64,
    pub difficulty_proxy: DifficultyProxy,
    /// Timeout of the baseline probe runs behind the runtime proxies.
    pub probe_timeout_s: f64,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            initial_timeout_s: 100.0,
            escalation_factor: 2.0,
            max_timeout_s: 1000.0,
            improvement_threshold: 0.01,
            test_fraction: 0.25,
            difficulty_proxy: DifficultyProxy::BaselineConflicts,
            probe_timeout_s: 5.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CurriculumError {
    #[error("pool has {0} instances; at least 4 are needed")]
    PoolTooSmall(usize),
    #[error("invalid curriculum config: {0}")]
    Config(String),
    #[error("probe returned {got} results for {expected} instances")]
    ProbeMismatch { expected: usize, got: usize },
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<(), CurriculumError> {
        let bad = |m: &str| Err(CurriculumError::Config(m.to_string()));
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return bad("test_fraction must be in (0, 1)");
        }
        if !(self.initial_timeout_s > 0.0) {
            return bad("initial_timeout_s must be positive");
        }
        if !(self.initial_timeout_s <= self.max_timeout_s) {
            return bad("initial_timeout_s exceeds max_timeout_s");
        }
        if !(self.escalation_factor > 1.0) {
            return bad("escalation_factor must exceed 1");
        }
        if !(self.probe_timeout_s > 0.0) {
            return bad("probe_timeout_s must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Curriculum {
    pub round_index: usize,
    pub train: Vec<Instance>,
    pub test: Vec<Instance>,
    pub timeout_s: f64,
}

/// Orders instances from easiest to hardest. Unsolved probes rank after
/// solved ones; ties fall back to name, then pool position.
fn difficulty_order(pool: &[Instance], probes: Option<&[RunResult]>, proxy: DifficultyProxy) -> Vec<usize> {
    let key = |i: usize| -> (bool, f64) {
        match (proxy, probes) {
            (DifficultyProxy::FormulaSize, _) | (_, None) => (false, pool[i].formula.num_clauses() as f64),
            (DifficultyProxy::BaselineConflicts, Some(p)) => (
                !p[i].is_solved(),
                p[i].conflicts.map_or(p[i].scored_time_s, |c| c as f64),
            ),
            (DifficultyProxy::BaselineWallTime, Some(p)) => (!p[i].is_solved(), p[i].scored_time_s),
        }
    };
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| {
        let (ua, ka) = key(a);
        let (ub, kb) = key(b);
        ua.cmp(&ub)
            .then(ka.partial_cmp(&kb).unwrap_or(Ordering::Equal))
            .then_with(|| pool[a].name.cmp(&pool[b].name))
            .then(a.cmp(&b))
    });
    order
}

/// Builds the round-0 curriculum. `probe` runs the baseline on the given
/// instances at the given timeout and is only called for runtime proxies.
/// The test set is a seeded stratified sample across difficulty quartiles.
pub fn propose_initial(
    pool: &[Instance],
    probe: &dyn Fn(&[Instance], f64) -> Vec<RunResult>,
    config: &CurriculumConfig,
    seed: u64,
) -> Result<Curriculum, CurriculumError> {
    config.validate()?;
    let n = pool.len();
    if n < 4 {
        return Err(CurriculumError::PoolTooSmall(n));
    }
    let probes = match config.difficulty_proxy {
        DifficultyProxy::FormulaSize => None,
        _ => {
            let results = probe(pool, config.probe_timeout_s);
            if results.len() != n {
                return Err(CurriculumError::ProbeMismatch {
                    expected: n,
                    got: results.len(),
                });
            }
            Some(results)
        }
    };
    let order = difficulty_order(pool, probes.as_deref(), config.difficulty_proxy);
    let mut quartiles: Vec<Vec<usize>> = vec![Vec::new(); 4];
    for (rank, &idx) in order.iter().enumerate() {
        quartiles[rank * 4 / n].push(idx);
    }
    let n_test = ((config.test_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let mut rng = XorShift64Star::new(seed);
    let mut visit = [0usize, 1, 2, 3];
    rng.shuffle(&mut visit);
    let mut picked = vec![false; n];
    let mut cursor = 0;
    for _ in 0..n_test {
        while quartiles[visit[cursor % 4]].is_empty() {
            cursor += 1;
        }
        let q = &mut quartiles[visit[cursor % 4]];
        let idx = q.remove(rng.below(q.len() as u64) as usize);
        picked[idx] = true;
        cursor += 1;
    }
    let split = |want: bool| -> Vec<Instance> {
        order
            .iter()
            .filter(|&&i| picked[i] == want)
            .map(|&i| pool[i].clone())
            .collect()
    };
    Ok(Curriculum {
        round_index: 0,
        train: split(false),
        test: split(true),
        timeout_s: config.initial_timeout_s,
    })
}

/// Next round: escalate the timeout when the incumbent's test solved ratio
/// improved by at least the threshold, otherwise keep it.
pub fn advance(
    curr: &Curriculum,
    incumbent_test: &MetricSet,
    previous_test: &MetricSet,
    config: &CurriculumConfig,
) -> Curriculum {
    let improvement = incumbent_test.solved_ratio - previous_test.solved_ratio;
    let timeout_s = if improvement >= config.improvement_threshold - 1e-12 {
        (curr.timeout_s * config.escalation_factor).min(config.max_timeout_s)
    } else {
        curr.timeout_s
    };
    Curriculum {
        round_index: curr.round_index + 1,
        train: curr.train.clone(),
        test: curr.test.clone(),
        timeout_s,
    }
}

/// Serializable form of a curriculum; instances are stored by path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurriculumSnapshot {
    pub round_index: usize,
    pub timeout_s: f64,
    pub train: Vec<PathBuf>,
    pub test: Vec<PathBuf>,
}

impl Curriculum {
    pub fn snapshot(&self) -> CurriculumSnapshot {
        CurriculumSnapshot {
            round_index: self.round_index,
            timeout_s: self.timeout_s,
            train: self.train.iter().map(|i| i.path.clone()).collect(),
            test: self.test.iter().map(|i| i.path.clone()).collect(),
        }
    }

    /// Restores a snapshot, taking instances from `pool` when the paths
    /// match and loading them from disk otherwise.
    pub fn restore(snap: &CurriculumSnapshot, pool: &[Instance]) -> Result<Self, InstanceLoadError> {
        let get = |p: &Path| -> Result<Instance, InstanceLoadError> {
            match pool.iter().find(|i| i.path == p) {
                Some(i) => Ok(i.clone()),
                None => Instance::load(p),
            }
        };
        Ok(Self {
            round_index: snap.round_index,
            timeout_s: snap.timeout_s,
            train: snap.train.iter().map(|p| get(p)).collect::<Result<_, _>>()?,
            test: snap.test.iter().map(|p| get(p)).collect::<Result<_, _>>()?,
        })
    }

    pub fn summary(&self) -> String {
        format!(
            "round {}: {} training and {} test instances, timeout {} s",
            self.round_index,
            self.train.len(),
            self.test.len(),
            self.timeout_s
        )
    }
}
