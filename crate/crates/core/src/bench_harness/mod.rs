//! Runs solvers on instances under time and memory limits, verifies their
//! answers, and aggregates metrics.

mod ledger;
mod manifest;
mod metrics;
pub mod process;
pub mod protocol;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ledger::{read_jsonl, read_results, JsonlWriter, LedgerError, ResultRecord, RESULTS_SCHEMA_VERSION};
pub use manifest::{ManifestError, PackageManifest, PatchPointDecl, SolverPackage, MANIFEST_FILE};
pub use metrics::{cactus_points, par2, solved_ratio_at, MetricSet, MetricsError};
pub use protocol::Claim;

use crate::instance_model::{evaluate, Assignment, Instance, SolveOutcome, UnknownReason};
use process::Termination;

/// How run time is measured and scored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Clock {
    /// Wall-clock seconds; the child is killed at the timeout.
    Wall,
    /// Deterministic clock: one second per `per_second` conflicts. The
    /// solver gets `{max_conflicts}` = timeout × rate and is killed only if
    /// it outlives `wall_limit_s` real seconds.
    Conflicts { per_second: f64, wall_limit_s: f64 },
}

impl Clock {
    pub fn max_conflicts(&self, timeout_s: f64) -> Option<u64> {
        match self {
            Clock::Wall => None,
            Clock::Conflicts { per_second, .. } => Some((timeout_s * per_second).floor().max(1.0) as u64),
        }
    }

    fn kill_after(&self, timeout_s: f64) -> f64 {
        match self {
            Clock::Wall => timeout_s,
            Clock::Conflicts { wall_limit_s, .. } => *wall_limit_s,
        }
    }

    fn score(&self, wall_time_s: f64, conflicts: Option<u64>) -> f64 {
        match (self, conflicts) {
            (Clock::Conflicts { per_second, .. }, Some(c)) => c as f64 / per_second,
            _ => wall_time_s,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunSpec {
    pub solver: Arc<SolverPackage>,
    pub instance: Instance,
    pub timeout_s: f64,
    pub mem_limit_mb: Option<u64>,
    pub seed: u64,
    pub clock: Clock,
}

#[derive(Debug, Error, PartialEq)]
#[error("timeout must be positive, got {0}")]
pub struct BadTimeout(pub f64);

impl RunSpec {
    pub fn new(solver: Arc<SolverPackage>, instance: Instance, timeout_s: f64, seed: u64) -> Result<Self, BadTimeout> {
        if !(timeout_s > 0.0) {
            return Err(BadTimeout(timeout_s));
        }
        Ok(Self {
            solver,
            instance,
            timeout_s,
            mem_limit_mb: None,
            seed,
            clock: Clock::Wall,
        })
    }

    pub fn with_mem_limit(mut self, mb: Option<u64>) -> Self {
        self.mem_limit_mb = mb;
        self
    }

    pub fn with_clock(mut self, clock: Clock) -> Self {
        self.clock = clock;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verification {
    ModelChecked,
    UnverifiedUnsat,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExitKind {
    Normal,
    KilledTimeout,
    KilledMemory,
    Crashed,
}

/// How the memory limit was applied to a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MemMechanism {
    /// Address-space rlimit set in the child before exec.
    RlimitAs,
    /// Peak RSS compared against the limit after the fact.
    Monitor,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub solver_id: String,
    pub instance: String,
    pub instance_path: PathBuf,
    pub timeout_s: f64,
    pub seed: u64,
    pub outcome: SolveOutcome,
    /// Real seconds around the child's lifetime.
    pub wall_time_s: f64,
    /// The time metrics use: wall time, or conflicts / rate under the
    /// conflict clock.
    pub scored_time_s: f64,
    pub verified: Verification,
    pub exit_kind: ExitKind,
    pub wrong_answer: bool,
    pub mem_mechanism: MemMechanism,
    pub peak_mem_kb: Option<u64>,
    pub conflicts: Option<u64>,
    pub exit_code: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl RunResult {
    /// Sat or Unsat without a wrong-answer flag.
    pub fn is_solved(&self) -> bool {
        !self.wrong_answer && matches!(self.outcome, SolveOutcome::Sat { .. } | SolveOutcome::Unsat)
    }

    /// A result for a run that never got to execute.
    pub fn crashed(solver_id: &str, spec_instance: &Instance, timeout_s: f64, seed: u64, detail: String) -> Self {
        Self {
            solver_id: solver_id.to_string(),
            instance: spec_instance.name.clone(),
            instance_path: spec_instance.path.clone(),
            timeout_s,
            seed,
            outcome: SolveOutcome::Unknown {
                reason: UnknownReason::Crash,
            },
            wall_time_s: 0.0,
            scored_time_s: 0.0,
            verified: Verification::NotApplicable,
            exit_kind: ExitKind::Crashed,
            wrong_answer: false,
            mem_mechanism: MemMechanism::None,
            peak_mem_kb: None,
            conflicts: None,
            exit_code: None,
            detail: Some(detail),
        }
    }
}

/// Checks a claimed answer against the formula. A SAT claim whose model is
/// missing, partial, or falsifying becomes `Unknown(malformed_output)` and
/// sets the wrong-answer flag.
pub fn verify_claim(instance: &Instance, claim: Claim) -> (SolveOutcome, Verification, bool) {
    let formula = &instance.formula;
    match claim {
        Claim::Sat(lits) => match Assignment::from_literals(formula.num_vars(), &lits) {
            Some(model) if evaluate(formula, &model) == Ok(true) => {
                (SolveOutcome::Sat { model }, Verification::ModelChecked, false)
            }
            _ => (malformed(), Verification::NotApplicable, true),
        },
        Claim::Unsat => (SolveOutcome::Unsat, Verification::UnverifiedUnsat, false),
        Claim::Unknown => (
            SolveOutcome::Unknown {
                reason: UnknownReason::ResourceLimit,
            },
            Verification::NotApplicable,
            false,
        ),
    }
}

fn malformed() -> SolveOutcome {
    SolveOutcome::Unknown {
        reason: UnknownReason::MalformedOutput,
    }
}

fn unknown(reason: UnknownReason) -> SolveOutcome {
    SolveOutcome::Unknown { reason }
}

/// Expands the run template into an argument vector.
pub fn expand_run_command(spec: &RunSpec, binary: &Path, instance: &Path) -> Option<Vec<String>> {
    let words = shlex::split(&spec.solver.run_cmd_template)?;
    let max_conflicts = spec.clock.max_conflicts(spec.timeout_s).unwrap_or(0);
    let timeout = spec.timeout_s.ceil() as u64;
    let mem = spec.mem_limit_mb.unwrap_or(0);
    Some(
        words
            .into_iter()
            .map(|w| {
                w.replace("{binary}", &binary.to_string_lossy())
                    .replace("{instance}", &instance.to_string_lossy())
                    .replace("{seed}", &spec.seed.to_string())
                    .replace("{timeout}", &timeout.to_string())
                    .replace("{max_conflicts}", &max_conflicts.to_string())
                    .replace("{mem_limit_mb}", &mem.to_string())
            })
            .collect(),
    )
}

const OOM_MARKERS: [&str; 4] = [
    "memory allocation of",
    "out of memory",
    "bad_alloc",
    "Cannot allocate memory",
];

/// Runs one solver on one instance in a fresh scratch directory.
pub fn execute_run(spec: &RunSpec) -> RunResult {
    let solver_id = spec.solver.id.as_str();
    let fail = |detail: String| RunResult::crashed(solver_id, &spec.instance, spec.timeout_s, spec.seed, detail);
    let Some(binary) = spec.solver.binary_path.as_deref() else {
        return fail("solver is not built".into());
    };
    let instance_path = std::path::absolute(&spec.instance.path).unwrap_or_else(|_| spec.instance.path.clone());
    let Some(argv) = expand_run_command(spec, binary, &instance_path) else {
        return fail("run command template does not split into words".into());
    };
    let scratch = match tempfile::Builder::new().prefix("solsearch-run-").tempdir() {
        Ok(d) => d,
        Err(e) => return fail(format!("creating scratch dir: {e}")),
    };
    let kill_after = spec.clock.kill_after(spec.timeout_s);
    let run = match process::run_child(&argv, scratch.path(), kill_after, spec.mem_limit_mb) {
        Ok(run) => run,
        Err(e) => return fail(format!("spawning {}: {e}", argv[0])),
    };
    let mem_mechanism = if spec.mem_limit_mb.is_some() {
        MemMechanism::RlimitAs
    } else {
        MemMechanism::None
    };
    let conflicts = protocol::comment_stat(&run.stdout, "conflicts");
    let out_of_memory = spec.mem_limit_mb.is_some()
        && !matches!(
            run.termination,
            Termination::Exited(0 | 10 | 20) | Termination::TimedOut
        )
        && OOM_MARKERS.iter().any(|m| run.stderr.contains(m));
    let mut detail = None;
    let mut wrong_answer = false;
    let mut verified = Verification::NotApplicable;
    let (outcome, exit_kind, exit_code) = match run.termination {
        Termination::TimedOut => (unknown(UnknownReason::Timeout), ExitKind::KilledTimeout, None),
        _ if out_of_memory => (unknown(UnknownReason::ResourceLimit), ExitKind::KilledMemory, None),
        Termination::Signaled(sig) => {
            detail = Some(format!("killed by signal {sig}"));
            (unknown(UnknownReason::Crash), ExitKind::Crashed, None)
        }
        Termination::Exited(code) => match protocol::parse_output(&run.stdout) {
            Ok(claim) if claim.exit_code() == code => {
                let (outcome, v, wrong) = verify_claim(&spec.instance, claim);
                verified = v;
                wrong_answer = wrong;
                if wrong {
                    detail = Some("model does not satisfy the formula".into());
                }
                (outcome, ExitKind::Normal, Some(code))
            }
            Ok(claim) => {
                detail = Some(format!("exit code {code} contradicts status {claim:?}"));
                (malformed(), ExitKind::Normal, Some(code))
            }
            Err(e) if matches!(code, 0 | 10 | 20) => {
                detail = Some(e.to_string());
                (malformed(), ExitKind::Normal, Some(code))
            }
            Err(e) => {
                detail = Some(format!("exit code {code}: {e}"));
                (unknown(UnknownReason::Crash), ExitKind::Crashed, Some(code))
            }
        },
    };
    let scored_time_s = spec.clock.score(run.wall_time_s, conflicts);
    RunResult {
        solver_id: solver_id.to_string(),
        instance: spec.instance.name.clone(),
        instance_path: spec.instance.path.clone(),
        timeout_s: spec.timeout_s,
        seed: spec.seed,
        outcome,
        wall_time_s: run.wall_time_s,
        scored_time_s,
        verified,
        exit_kind,
        wrong_answer,
        mem_mechanism,
        peak_mem_kb: run.peak_rss_kb,
        conflicts,
        exit_code,
        detail,
    }
}

/// Number of worker threads when none is configured: all cores but one.
pub fn default_workers() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get().saturating_sub(1))
        .unwrap_or(1)
        .max(1)
}

/// Maps `f` over `items` on `workers` threads, keeping input order.
pub fn parallel_map<T, R, F>(items: &[T], workers: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync + Send,
{
    use rayon::prelude::*;
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| items.par_iter().map(&f).collect()),
        Err(_) => items.iter().map(f).collect(),
    }
}

pub fn run_batch(specs: &[RunSpec], workers: usize) -> Vec<RunResult> {
    parallel_map(specs, workers, execute_run)
}
