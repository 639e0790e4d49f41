#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::{Arc, OnceLock};

use solsearch_core::bench_harness::{ExitKind, MemMechanism, RunResult, Verification};
use solsearch_core::instance_model::{SolveOutcome, UnknownReason};
use solsearch_core::patcher::Patcher;
use solsearch_core::ref_solver::package::export_package;
use solsearch_core::search_loop::{PackageTarget, RunOptions};

/// The bundled reference package, exported and built once per test binary.
pub fn ref_package() -> &'static (tempfile::TempDir, Arc<Patcher>, PathBuf) {
    static PKG: OnceLock<(tempfile::TempDir, Arc<Patcher>, PathBuf)> = OnceLock::new();
    PKG.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let src = dir.path().join("ref-cdcl");
        export_package(&src).unwrap();
        let patcher = Arc::new(Patcher::new(&dir.path().join("cache")).unwrap());
        (dir, patcher, src)
    })
}

pub fn ref_target(options: RunOptions) -> PackageTarget {
    let (_, patcher, src) = ref_package();
    PackageTarget::build_base(src, patcher.clone(), options).unwrap()
}

/// A synthetic result: solved (UNSAT) at `time`, or unsolved.
pub fn result(time: Option<f64>, timeout_s: f64) -> RunResult {
    RunResult {
        solver_id: "synthetic".into(),
        instance: "i".into(),
        instance_path: "i.cnf".into(),
        timeout_s,
        seed: 0,
        outcome: match time {
            Some(_) => SolveOutcome::Unsat,
            None => SolveOutcome::Unknown {
                reason: UnknownReason::Timeout,
            },
        },
        wall_time_s: time.unwrap_or(timeout_s),
        scored_time_s: time.unwrap_or(timeout_s),
        verified: Verification::UnverifiedUnsat,
        exit_kind: if time.is_some() {
            ExitKind::Normal
        } else {
            ExitKind::KilledTimeout
        },
        wrong_answer: false,
        mem_mechanism: MemMechanism::None,
        peak_mem_kb: None,
        conflicts: None,
        exit_code: None,
        detail: None,
    }
}

/// `total` results, `times.len()` of them solved at the given times.
pub fn result_set(times: &[f64], total: usize, timeout_s: f64) -> Vec<RunResult> {
    let mut v: Vec<RunResult> = times.iter().map(|&t| result(Some(t), timeout_s)).collect();
    v.extend((times.len()..total).map(|_| result(None, timeout_s)));
    v
}
