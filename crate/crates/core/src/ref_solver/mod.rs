//! Reference CDCL solver with patchable heuristic hot-spots.
//!
//! The solver runs in two modes:
//!
//! * in process, configured by a [`HeuristicConfig`] (optionally with an
//!   interpreted scoring expression), which needs no build toolchain;
//! * as an external solver package exported by [`package::export_package`],
//!   whose sources carry `SOLSEARCH:BEGIN/END` markers around the hot-spots
//!   `inc_activity`, `decay_activity`, `restart_due` and `pick_phase`.
//!
//! `config.rs`, `expr.rs`, `vsids.rs` and `engine.rs` are shipped verbatim
//! in the package and therefore only use `std`.

mod config;
mod engine;
mod expr;
pub mod package;
pub mod script;
mod vsids;

use std::time::Instant;

use serde::{Deserialize, Serialize};

pub use config::{luby, ConfigError, HeuristicConfig, RestartPolicy};
pub use engine::{best_by_score, Budget, SearchResult, SearchStats, Solver};
pub use expr::{BinOp, ExprError, Feature, HeuristicExpr, VarFeatures};
pub use vsids::VarOrder;

use crate::instance_model::{Assignment, CnfFormula, SolveOutcome, UnknownReason};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub conflicts: u64,
    pub decisions: u64,
    pub propagations: u64,
    pub restarts: u64,
    pub learned_clauses: u64,
    pub wall_time_s: f64,
}

impl SolverStats {
    fn from_search(s: SearchStats, wall_time_s: f64) -> Self {
        Self {
            conflicts: s.conflicts,
            decisions: s.decisions,
            propagations: s.propagations,
            restarts: s.restarts,
            learned_clauses: s.learned_clauses,
            wall_time_s,
        }
    }
}

/// Solves `formula` in process. With only a conflict budget the result and
/// every count except `wall_time_s` are reproducible.
pub fn solve(formula: &CnfFormula, config: &HeuristicConfig, budget: Budget, seed: u64) -> (SolveOutcome, SolverStats) {
    let start = Instant::now();
    let mut solver = Solver::new(formula.num_vars(), formula.clauses(), config.clone(), seed);
    let result = solver.solve(budget);
    let stats = SolverStats::from_search(solver.stats(), start.elapsed().as_secs_f64());
    let outcome = match result {
        SearchResult::Sat(model) => SolveOutcome::Sat {
            model: Assignment::new(model),
        },
        SearchResult::Unsat => SolveOutcome::Unsat,
        SearchResult::Unknown => SolveOutcome::Unknown {
            reason: UnknownReason::Timeout,
        },
    };
    (outcome, stats)
}

pub fn parse_heuristic_expr(text: &str) -> Result<HeuristicExpr, ExprError> {
    HeuristicExpr::parse(text)
}

/// Decision-relevant view of one variable.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct VarState {
    pub assigned: bool,
    pub activity: f64,
    pub saved_phase: bool,
    pub conflicts_since_last_bump: u64,
}

/// The unassigned variable (1-based) with the highest score: activity by
/// default, `config.score_expr` when set. Ties go to the lowest index.
pub fn decide_next(vars: &[VarState], config: &HeuristicConfig) -> Option<usize> {
    let features = |v: usize| VarFeatures {
        activity: vars[v].activity,
        saved_phase: vars[v].saved_phase,
        conflicts_since_last_bump: vars[v].conflicts_since_last_bump,
        var_index: v + 1,
    };
    best_by_score(
        vars.len(),
        |v| !vars[v].assigned,
        |v| match &config.score_expr {
            Some(e) => e.eval(&features(v)),
            None => vars[v].activity,
        },
    )
    .map(|v| v + 1)
}

#[cfg(test)]
mod tests;
