//! Files written at the end of a search, and ledger comparison for replays.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use similar::TextDiff;

use super::events::{candidate_sequence, effective_events, promotion_sequence, Event, LedgerLine};
use super::run::SearchState;
use super::{candidate_id, CandidateStatus, StopReason};
use crate::bench_harness::MetricSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdoptedPatch {
    pub round: usize,
    pub step: u64,
    pub candidate_id: String,
    pub point: String,
    pub file: String,
    pub from: String,
    pub to: String,
    pub old_code: String,
    pub new_code: String,
}

impl AdoptedPatch {
    pub fn unified_diff(&self) -> String {
        TextDiff::from_lines(&self.old_code, &self.new_code)
            .unified_diff()
            .context_radius(3)
            .header(&format!("a/{}", self.file), &format!("b/{}", self.file))
            .to_string()
    }
}

/// Incumbent quality after each round; round 0 is the baseline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRow {
    pub round: usize,
    pub timeout_s: f64,
    pub incumbent_id: String,
    pub train_solved: usize,
    pub train_total: usize,
    pub train_par2: f64,
    pub test_solved: usize,
    pub test_total: usize,
    pub test_par2: f64,
    pub promoted: bool,
    pub llm_calls: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub stop_reason: StopReason,
    pub rounds: usize,
    pub llm_calls: u64,
    pub model_name: String,
    pub base_id: String,
    pub final_id: String,
    pub final_timeout_s: f64,
    pub baseline_train: MetricSet,
    pub baseline_test: MetricSet,
    pub final_train: MetricSet,
    pub final_test: MetricSet,
    pub promotions: Vec<AdoptedPatch>,
    pub trajectory: Vec<TrajectoryRow>,
    /// Final candidate statuses and how often each occurred.
    pub candidates: BTreeMap<String, usize>,
}

pub(crate) fn build_report(st: &SearchState, reason: StopReason, model_name: &str, lines: &[LedgerLine]) -> Report {
    let mut candidates = BTreeMap::new();
    for (_, status) in candidate_sequence(lines) {
        let key = serde_json::to_value(status)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        *candidates.entry(key).or_insert(0) += 1;
    }
    Report {
        stop_reason: reason,
        rounds: st.rounds_done,
        llm_calls: st.llm_calls,
        model_name: model_name.to_string(),
        base_id: st.base_id.clone(),
        final_id: st.incumbent.id().to_string(),
        final_timeout_s: st.curriculum.timeout_s,
        baseline_train: st.baseline_train.clone(),
        baseline_test: st.baseline_test.clone(),
        final_train: st.incumbent_train.clone(),
        final_test: st.incumbent_test.clone(),
        promotions: st.adopted.clone(),
        trajectory: st.trajectory.clone(),
        candidates,
    }
}

pub fn trajectory_csv(rows: &[TrajectoryRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv")).expect("utf-8")
}

/// Writes report.json, trajectory.csv and adopted_patches.diff into `dir`.
pub fn write_report(dir: &Path, report: &Report) -> std::io::Result<()> {
    let json = serde_json::to_string_pretty(report).map_err(std::io::Error::other)?;
    std::fs::write(dir.join("report.json"), json + "\n")?;
    std::fs::write(dir.join("trajectory.csv"), trajectory_csv(&report.trajectory))?;
    let mut diff = String::new();
    for p in &report.promotions {
        let _ = writeln!(
            diff,
            "# round {} step {}: {} ({} -> {})",
            p.round, p.step, p.point, p.from, p.to
        );
        diff.push_str(&p.unified_diff());
    }
    std::fs::write(dir.join("adopted_patches.diff"), diff)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplayVerdict {
    pub promotions_match: bool,
    pub candidates_match: bool,
    /// Every logged candidate id recomputes from its parent, point and code.
    pub integrity_ok: bool,
    pub details: Vec<String>,
}

impl ReplayVerdict {
    pub fn ok(&self) -> bool {
        self.promotions_match && self.candidates_match && self.integrity_ok
    }
}

fn integrity_errors(lines: &[LedgerLine], label: &str) -> Vec<String> {
    effective_events(lines)
        .into_iter()
        .filter_map(|l| match &l.event {
            Event::Candidate { candidate: c, .. }
                if candidate_id(&c.parent_solver, &c.patch_point, &c.code) != c.id =>
            {
                Some(format!(
                    "{label} ledger line {}: candidate id {} does not match its content",
                    l.seq, c.id
                ))
            }
            _ => None,
        })
        .collect()
}

/// Compares a replayed search against the original.
pub fn compare_ledgers(original: &[LedgerLine], replayed: &[LedgerLine]) -> ReplayVerdict {
    let mut v = ReplayVerdict::default();
    let (pa, pb) = (promotion_sequence(original), promotion_sequence(replayed));
    v.promotions_match = pa == pb;
    if !v.promotions_match {
        v.details.push(format!(
            "promotions differ: {} originally, {} on replay",
            pa.len(),
            pb.len()
        ));
        if let Some(i) = pa.iter().zip(&pb).position(|(a, b)| a != b) {
            v.details.push(format!(
                "first differing promotion at index {i}: {:?} vs {:?}",
                pa[i], pb[i]
            ));
        }
    }
    let (ca, cb): (Vec<(String, CandidateStatus)>, _) = (candidate_sequence(original), candidate_sequence(replayed));
    v.candidates_match = ca == cb;
    if !v.candidates_match {
        v.details.push(format!(
            "candidates differ: {} originally, {} on replay",
            ca.len(),
            cb.len()
        ));
        if let Some(i) = ca.iter().zip(&cb).position(|(a, b)| a != b) {
            v.details.push(format!(
                "first differing candidate at index {i}: {:?} vs {:?}",
                ca[i], cb[i]
            ));
        }
    }
    let mut bad = integrity_errors(original, "original");
    bad.extend(integrity_errors(replayed, "replayed"));
    v.integrity_ok = bad.is_empty();
    v.details.extend(bad);
    v
}

/// Numbers of a search recomputed from its ledger alone.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerAudit {
    pub rounds: usize,
    pub llm_calls: u64,
    pub promotions: usize,
    pub base_id: Option<String>,
    pub final_id: Option<String>,
    pub baseline_train: Option<MetricSet>,
    pub baseline_test: Option<MetricSet>,
    /// Logged metrics that the logged runs do not reproduce.
    pub mismatches: Vec<String>,
}

fn metrics_of(runs: &[crate::bench_harness::RunResult]) -> Option<MetricSet> {
    let timeout = runs.first()?.timeout_s;
    MetricSet::from_results(runs, timeout).ok()
}

/// Recomputes round and call counts, the baseline, and every promotion's
/// metrics from the run events, and reports any logged metric they
/// contradict.
pub fn audit_ledger(lines: &[LedgerLine]) -> LedgerAudit {
    use super::events::RunSet;
    type Key = (usize, u64, RunSet, Option<String>);
    let mut runs: BTreeMap<String, Vec<crate::bench_harness::RunResult>> = BTreeMap::new();
    let key = |k: &Key| format!("{}/{}/{:?}/{}", k.0, k.1, k.2, k.3.as_deref().unwrap_or("-"));
    let mut audit = LedgerAudit {
        rounds: 0,
        llm_calls: 0,
        promotions: 0,
        base_id: None,
        final_id: None,
        baseline_train: None,
        baseline_test: None,
        mismatches: Vec::new(),
    };
    let mut baseline_seen = false;
    for l in effective_events(lines) {
        match &l.event {
            Event::SearchStarted { base_id, .. } => {
                audit.base_id = Some(base_id.clone());
                audit.final_id = Some(base_id.clone());
            }
            Event::Run {
                round,
                step,
                set,
                candidate_id,
                result,
            } => {
                let k = if baseline_seen || candidate_id.is_some() {
                    key(&(*round, *step, *set, candidate_id.clone()))
                } else {
                    format!("baseline/{set:?}")
                };
                runs.entry(k).or_default().push(result.clone());
            }
            Event::Baseline { train, test, .. } => {
                baseline_seen = true;
                audit.baseline_train = metrics_of(runs.get("baseline/Train").map_or(&[][..], Vec::as_slice));
                audit.baseline_test = metrics_of(runs.get("baseline/Test").map_or(&[][..], Vec::as_slice));
                if audit.baseline_train.as_ref() != Some(train) || audit.baseline_test.as_ref() != Some(test) {
                    audit
                        .mismatches
                        .push("baseline metrics do not match the baseline runs".into());
                }
            }
            Event::LlmCall { .. } => audit.llm_calls += 1,
            Event::RoundEnd { .. } | Event::RoundFailed { .. } => audit.rounds += 1,
            Event::Promotion {
                round,
                step,
                candidate_id,
                to,
                train,
                test,
                ..
            } => {
                audit.promotions += 1;
                audit.final_id = Some(to.clone());
                let get = |set| {
                    runs.get(&key(&(*round, *step, set, Some(candidate_id.clone()))))
                        .and_then(|r| metrics_of(r))
                };
                if get(RunSet::Train).as_ref() != Some(train) || get(RunSet::Test).as_ref() != Some(test) {
                    audit
                        .mismatches
                        .push(format!("promotion of {candidate_id}: metrics do not match its runs"));
                }
            }
            _ => {}
        }
    }
    audit
}
