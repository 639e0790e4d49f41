//! Curriculum-driven search over patchable SAT solver heuristics.
//!
//! A language model proposes replacements for marked heuristic regions of a
//! solver; each candidate is built, checked against tiny oracle-solved
//! instances, benchmarked on a training set under an escalating timeout,
//! and promoted only when it beats the incumbent.

// NaN must fail these checks, so they are written as negations.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench_harness;
pub mod curriculum;
pub mod instance_model;
pub mod llm_client;
pub mod patcher;
pub mod ref_solver;
pub mod search_loop;

pub use bench_harness::{MetricSet, RunResult, RunSpec, SolverPackage};
pub use curriculum::{Curriculum, CurriculumConfig};
pub use instance_model::{Assignment, CnfFormula, Instance, SolveOutcome, UnknownReason};
pub use llm_client::{LlmClient, LlmConfig};
pub use patcher::PatchPoint;
pub use search_loop::{
    run_search, Candidate, CandidateStatus, HermeticTarget, PackageTarget, Report, SearchConfig, SearchSetup,
    SelectionPolicy, SolverTarget, StopReason,
};
