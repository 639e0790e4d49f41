//! The solver-searching stage: pick a patch point, ask the model for
//! replacements, build and check them, benchmark the survivors, and promote
//! the best one if it beats the incumbent.

mod events;
mod report;
mod run;
mod smoke;
mod target;

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use events::{
    candidate_sequence, effective_events, promotion_sequence, read_ledger, Event, EventLedger, LedgerLine, RunSet,
    LEDGER_FILE, LEDGER_SCHEMA_VERSION,
};
pub use report::{
    audit_ledger, compare_ledgers, trajectory_csv, write_report, AdoptedPatch, LedgerAudit, ReplayVerdict, Report,
    TrajectoryRow,
};
pub use run::{run_search, SearchSetup, SearchState, Searcher};
pub use smoke::{smoke_failure, smoke_suite, SmokeInstance, SMOKE_SIZE};
pub use target::{HermeticTarget, PackageTarget, RunOptions, SolverTarget, TargetError, HERMETIC_FILE};

use crate::instance_model::rng::XorShift64Star;
use crate::llm_client::{extract_code, FinishReason, LlmClient, LlmError};
use crate::patcher::{normalize_code, sha256_hex};
pub use crate::patcher::{PatchPoint, PointHistory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionPolicy {
    RoundRobin,
    EpsilonGreedy { epsilon: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    /// Completions requested per step.
    pub k: usize,
    pub temperatures: Vec<f64>,
    pub policy: SelectionPolicy,
    /// Restricts the search to these points; empty means all.
    pub patch_points: Vec<String>,
    pub steps_per_round: usize,
    pub max_rounds: usize,
    pub max_llm_calls: u64,
    pub max_wall_time_s: Option<f64>,
    /// Stop after this many consecutive rounds without a promotion.
    pub patience: usize,
    /// Refuse promotions that lower the test-set solved count.
    pub promotion_guard: bool,
    pub seed: u64,
    /// Seed passed to every solver run.
    pub run_seed: u64,
    /// Parallel runs; 0 means all cores but one.
    pub workers: usize,
    pub smoke_timeout_s: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            k: 4,
            temperatures: vec![0.2, 0.7, 1.0, 1.2],
            policy: SelectionPolicy::RoundRobin,
            patch_points: Vec::new(),
            steps_per_round: 1,
            max_rounds: 10,
            max_llm_calls: 200,
            max_wall_time_s: None,
            patience: 3,
            promotion_guard: true,
            seed: 0,
            run_seed: 0,
            workers: 0,
            smoke_timeout_s: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateStatus {
    Proposed,
    CompileFailed,
    WrongAnswer,
    Evaluated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmMeta {
    pub model_name: String,
    pub temperature: f64,
    pub prompt_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: String,
    pub patch_point: String,
    pub code: String,
    pub parent_solver: String,
    pub llm: LlmMeta,
    pub status: CandidateStatus,
    pub metrics: Option<crate::bench_harness::MetricSet>,
}

pub fn candidate_id(parent: &str, point: &str, code: &str) -> String {
    sha256_hex(&[parent.as_bytes(), point.as_bytes(), code.as_bytes()])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxRounds,
    MaxLlmCalls,
    WallBudget,
    Patience,
}

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("the solver has no patch points to search")]
    NoPatchPoints,
    #[error(transparent)]
    Curriculum(#[from] crate::curriculum::CurriculumError),
    #[error(transparent)]
    Ledger(#[from] crate::bench_harness::LedgerError),
    #[error(transparent)]
    Llm(#[from] crate::llm_client::LlmError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error("cannot resume: {0}")]
    Resume(String),
    #[error("{0}")]
    Target(String),
}

/// Everything needed to resume a search after its last completed round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub rounds_done: usize,
    pub step: u64,
    pub llm_calls: u64,
    pub curriculum: crate::curriculum::CurriculumSnapshot,
    pub adopted: Vec<AdoptedPatch>,
    pub history: BTreeMap<String, PointHistory>,
    pub feedback: BTreeMap<String, String>,
    pub rr_turn: u64,
    pub streak: usize,
    pub incumbent_id: String,
    pub incumbent_train: crate::bench_harness::MetricSet,
    pub incumbent_test: crate::bench_harness::MetricSet,
    pub baseline_train: crate::bench_harness::MetricSet,
    pub baseline_test: crate::bench_harness::MetricSet,
    pub trajectory: Vec<TrajectoryRow>,
    pub elapsed_s: f64,
}

/// Picks the next point. Round-robin cycles in declaration order; epsilon
/// greedy exploits the best mean improvement (first on ties) with
/// probability 1 - epsilon and picks uniformly otherwise.
pub fn select_patch_point<'a>(
    points: &'a [PatchPoint],
    history: &BTreeMap<String, PointHistory>,
    policy: &SelectionPolicy,
    turn: u64,
    rng: &mut XorShift64Star,
) -> Result<&'a PatchPoint, SearchError> {
    if points.is_empty() {
        return Err(SearchError::NoPatchPoints);
    }
    let idx = match policy {
        SelectionPolicy::RoundRobin => (turn % points.len() as u64) as usize,
        SelectionPolicy::EpsilonGreedy { epsilon } => {
            if rng.next_f64() < *epsilon {
                rng.below(points.len() as u64) as usize
            } else {
                let mean = |p: &PatchPoint| history.get(&p.name).map_or(0.0, PointHistory::mean_improvement);
                let mut best = 0;
                for (i, p) in points.iter().enumerate() {
                    if mean(p) > mean(&points[best]) {
                        best = i;
                    }
                }
                best
            }
        }
    };
    Ok(&points[idx])
}

/// The request sent for one patch point.
pub fn build_prompt(point: &PatchPoint, curriculum_summary: &str, feedback: Option<&str>) -> String {
    let mut p = String::new();
    let _ = writeln!(
        p,
        "Objective: optimize the `{}` function of a CDCL SAT solver.",
        point.name
    );
    p.push('\n');
    p.push_str("Requirements:\n");
    let _ = writeln!(p, "- Function Name: {}", point.name);
    let _ = writeln!(p, "- Language: {}", point.language_name);
    p.push_str("- Dependencies: No undefined functions, variables, or external libraries.\n");
    p.push('\n');
    p.push_str("Reference Function:\n```\n");
    p.push_str(&point.reference_code);
    if !point.reference_code.ends_with('\n') {
        p.push('\n');
    }
    p.push_str("```\n\n");
    let _ = writeln!(p, "Behavior: {}", point.behavior_desc);
    p.push('\n');
    let _ = writeln!(
        p,
        "Task: write an improved `{}` that keeps this behavior contract and lets the solver \
         finish more instances in less time. Return the complete replacement for the reference \
         function.",
        point.name
    );
    let _ = writeln!(p, "Training setting: {curriculum_summary}");
    if let Some(notes) = feedback.filter(|f| !f.trim().is_empty()) {
        p.push_str("\nFeedback on earlier attempts:\n");
        p.push_str(notes.trim_end());
        p.push('\n');
    }
    p
}

/// One model call as logged.
#[derive(Debug, Clone, PartialEq)]
pub struct CallRecord {
    pub prompt_hash: String,
    pub temperature: f64,
    pub model_name: String,
    pub finish_reason: Option<FinishReason>,
    pub response: Option<String>,
    pub error: Option<String>,
    pub from_ledger: bool,
}

/// Requests `k` completions, cycling through `temperatures`. Truncated
/// responses and responses without code yield no candidate; duplicate code
/// is collapsed. Failed calls are recorded, except a replay miss, which
/// aborts: a replay cannot continue without the recorded response.
pub fn propose_candidates(
    client: &LlmClient,
    prompt: &str,
    k: usize,
    temperatures: &[f64],
    parent: &str,
    point: &str,
) -> Result<(Vec<Candidate>, Vec<CallRecord>), LlmError> {
    let default_temp = [client.config().temperature];
    let temps = if temperatures.is_empty() {
        &default_temp[..]
    } else {
        temperatures
    };
    let mut cands: Vec<Candidate> = Vec::new();
    let mut calls = Vec::new();
    for i in 0..k {
        let temperature = temps[i % temps.len()];
        let mut record = CallRecord {
            prompt_hash: crate::llm_client::request_hash(prompt, temperature, &client.config().model_name),
            temperature,
            model_name: client.config().model_name.clone(),
            finish_reason: None,
            response: None,
            error: None,
            from_ledger: false,
        };
        match client.complete_traced(prompt, temperature) {
            Err(e @ LlmError::ReplayMiss(_)) => return Err(e),
            Err(e) => record.error = Some(e.to_string()),
            Ok((resp, from_backend)) => {
                record.from_ledger = !from_backend;
                record.finish_reason = Some(resp.finish_reason);
                record.model_name = resp.model_name.clone();
                let code = match resp.finish_reason {
                    FinishReason::Stop => extract_code(&resp.text).map_err(|e| e.to_string()),
                    FinishReason::Length => Err("response truncated at max_tokens".to_string()),
                    FinishReason::Error if resp.text.trim().is_empty() => Err("model reported an error".to_string()),
                    // A replayed failure carries the original error message.
                    FinishReason::Error => Err(resp.text.clone()),
                };
                record.response = Some(resp.text);
                match code {
                    Err(e) => record.error = Some(e),
                    Ok(code) => {
                        let code = normalize_code(&code);
                        let id = candidate_id(parent, point, &code);
                        if !cands.iter().any(|c| c.id == id) {
                            cands.push(Candidate {
                                id,
                                patch_point: point.to_string(),
                                code,
                                parent_solver: parent.to_string(),
                                llm: LlmMeta {
                                    model_name: resp.model_name,
                                    temperature,
                                    prompt_hash: resp.prompt_hash,
                                },
                                status: CandidateStatus::Proposed,
                                metrics: None,
                            });
                        }
                    }
                }
            }
        }
        calls.push(record);
    }
    Ok((cands, calls))
}

/// Solved count descending, then PAR-2 ascending, then candidate id.
pub fn rank_order(a: &Candidate, b: &Candidate) -> std::cmp::Ordering {
    let (ma, mb) = (a.metrics.as_ref(), b.metrics.as_ref());
    let solved = |m: Option<&crate::bench_harness::MetricSet>| m.map_or(0, |m| m.solved);
    let par2 = |m: Option<&crate::bench_harness::MetricSet>| m.map_or(f64::INFINITY, |m| m.par2);
    solved(mb)
        .cmp(&solved(ma))
        .then(par2(ma).total_cmp(&par2(mb)))
        .then_with(|| a.id.cmp(&b.id))
}
