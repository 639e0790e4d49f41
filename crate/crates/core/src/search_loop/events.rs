//! The search ledger: one JSON event per line.

use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::{Candidate, Checkpoint, SearchConfig, StopReason};
use crate::bench_harness::{read_jsonl, JsonlWriter, LedgerError, MetricSet, RunResult};
use crate::curriculum::CurriculumSnapshot;
use crate::llm_client::FinishReason;

pub const LEDGER_FILE: &str = "ledger.jsonl";
pub const LEDGER_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunSet {
    Probe,
    Smoke,
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    SearchStarted {
        schema: u32,
        config: SearchConfig,
        model_name: String,
        base_id: String,
    },
    Curriculum {
        snapshot: CurriculumSnapshot,
    },
    Baseline {
        solver_id: String,
        train: MetricSet,
        test: MetricSet,
    },
    PointSelected {
        round: usize,
        step: u64,
        point: String,
    },
    LlmCall {
        round: usize,
        step: u64,
        prompt_hash: String,
        temperature: f64,
        model_name: String,
        finish_reason: Option<FinishReason>,
        response: Option<String>,
        error: Option<String>,
        /// Served from an earlier, abandoned round's ledger entry.
        #[serde(default)]
        from_ledger: bool,
    },
    Candidate {
        round: usize,
        step: u64,
        candidate: Candidate,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        note: Option<String>,
    },
    Run {
        round: usize,
        step: u64,
        set: RunSet,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        candidate_id: Option<String>,
        result: RunResult,
    },
    Promotion {
        round: usize,
        step: u64,
        candidate_id: String,
        point: String,
        from: String,
        to: String,
        train: MetricSet,
        test: MetricSet,
    },
    Rejected {
        round: usize,
        step: u64,
        candidate_id: String,
        reason: String,
    },
    RoundEnd {
        round: usize,
        timeout_s: f64,
        next_timeout_s: f64,
        incumbent_id: String,
        train: MetricSet,
        test: MetricSet,
        promoted: bool,
    },
    RoundFailed {
        round: usize,
        error: String,
    },
    Checkpoint {
        checkpoint: Box<Checkpoint>,
    },
    Resumed {
        after_seq: u64,
    },
    SearchFinished {
        reason: StopReason,
        rounds: usize,
        llm_calls: u64,
        final_id: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerLine {
    pub seq: u64,
    /// Seconds since the Unix epoch.
    pub ts: f64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug)]
pub struct EventLedger {
    writer: JsonlWriter,
    next_seq: AtomicU64,
}

impl EventLedger {
    /// Opens `path` for appending, continuing its sequence numbers.
    pub fn open(path: &Path) -> Result<Self, LedgerError> {
        let next = if path.exists() {
            read_ledger(path)?.last().map_or(0, |l| l.seq + 1)
        } else {
            0
        };
        Ok(Self {
            writer: JsonlWriter::append_to(path)?,
            next_seq: AtomicU64::new(next),
        })
    }

    pub fn path(&self) -> &Path {
        self.writer.path()
    }

    pub fn append(&self, event: Event) -> Result<u64, LedgerError> {
        let seq = self.next_seq.fetch_add(1, Ordering::SeqCst);
        let ts = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map_or(0.0, |d| d.as_secs_f64());
        self.writer.append(&LedgerLine { seq, ts, event })?;
        Ok(seq)
    }
}

pub fn read_ledger(path: &Path) -> Result<Vec<LedgerLine>, LedgerError> {
    read_jsonl(path)
}

/// Drops the events of rounds abandoned by an interruption: a `resumed`
/// event discards everything logged after the checkpoint it resumed from.
pub fn effective_events(lines: &[LedgerLine]) -> Vec<&LedgerLine> {
    let mut out: Vec<&LedgerLine> = Vec::new();
    for line in lines {
        if let Event::Resumed { after_seq } = line.event {
            out.retain(|l| l.seq <= after_seq);
        }
        out.push(line);
    }
    out
}

/// (candidate id, from, to) for every promotion, in order.
pub fn promotion_sequence(lines: &[LedgerLine]) -> Vec<(String, String, String)> {
    effective_events(lines)
        .into_iter()
        .filter_map(|l| match &l.event {
            Event::Promotion {
                candidate_id, from, to, ..
            } => Some((candidate_id.clone(), from.clone(), to.clone())),
            _ => None,
        })
        .collect()
}

/// (candidate id, final status) for every candidate, in order.
pub fn candidate_sequence(lines: &[LedgerLine]) -> Vec<(String, super::CandidateStatus)> {
    effective_events(lines)
        .into_iter()
        .filter_map(|l| match &l.event {
            Event::Candidate { candidate, .. } if candidate.status != super::CandidateStatus::Proposed => {
                Some((candidate.id.clone(), candidate.status))
            }
            _ => None,
        })
        .collect()
}
