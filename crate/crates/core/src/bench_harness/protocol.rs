//! SAT-competition output convention: `s` status line, `v` model lines
//! terminated by literal 0, `c` comments; exit codes 10 (SAT), 20 (UNSAT),
//! 0 (UNKNOWN).

use std::fmt::Write as _;

use thiserror::Error;

use crate::instance_model::SolveOutcome;

pub const EXIT_SAT: i32 = 10;
pub const EXIT_UNSAT: i32 = 20;
pub const EXIT_UNKNOWN: i32 = 0;

/// What a solver claims, before verification.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Claim {
    /// Literals from the `v` lines, without the terminating 0.
    Sat(Vec<i32>),
    Unsat,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProtocolError {
    #[error("no `s` line")]
    NoStatus,
    #[error("more than one `s` line")]
    DuplicateStatus,
    #[error("unknown status `{0}`")]
    BadStatus(String),
    #[error("bad literal `{0}` on a `v` line")]
    BadLiteral(String),
    #[error("`v` lines without a SATISFIABLE status")]
    StrayModel,
    #[error("model continues after its terminating 0")]
    TrailingModel,
}

impl Claim {
    pub fn exit_code(&self) -> i32 {
        match self {
            Claim::Sat(_) => EXIT_SAT,
            Claim::Unsat => EXIT_UNSAT,
            Claim::Unknown => EXIT_UNKNOWN,
        }
    }
}

pub fn parse_output(stdout: &str) -> Result<Claim, ProtocolError> {
    let mut status = None;
    let mut lits = Vec::new();
    let mut saw_model = false;
    let mut terminated = false;
    for line in stdout.lines() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix("s ") {
            if status.is_some() {
                return Err(ProtocolError::DuplicateStatus);
            }
            status = Some(match rest.trim() {
                "SATISFIABLE" => Claim::Sat(Vec::new()),
                "UNSATISFIABLE" => Claim::Unsat,
                "UNKNOWN" => Claim::Unknown,
                other => return Err(ProtocolError::BadStatus(other.to_string())),
            });
        } else if let Some(rest) = line.strip_prefix('v') {
            if !(rest.is_empty() || rest.starts_with(char::is_whitespace)) {
                continue;
            }
            saw_model = true;
            for tok in rest.split_whitespace() {
                if terminated {
                    return Err(ProtocolError::TrailingModel);
                }
                let lit: i32 = tok.parse().map_err(|_| ProtocolError::BadLiteral(tok.to_string()))?;
                if lit == 0 {
                    terminated = true;
                } else {
                    lits.push(lit);
                }
            }
        }
    }
    match status {
        None => Err(ProtocolError::NoStatus),
        Some(Claim::Sat(_)) => Ok(Claim::Sat(lits)),
        Some(_) if saw_model => Err(ProtocolError::StrayModel),
        Some(claim) => Ok(claim),
    }
}

/// Renders `outcome` in competition format, ten literals per `v` line.
pub fn format_output(outcome: &SolveOutcome) -> String {
    let mut out = String::new();
    match outcome {
        SolveOutcome::Sat { model } => {
            out.push_str("s SATISFIABLE\n");
            let lits = model.to_literals();
            for chunk in lits.chunks(10) {
                out.push('v');
                for lit in chunk {
                    let _ = write!(out, " {lit}");
                }
                out.push('\n');
            }
            out.push_str("v 0\n");
        }
        SolveOutcome::Unsat => out.push_str("s UNSATISFIABLE\n"),
        SolveOutcome::Unknown { .. } => out.push_str("s UNKNOWN\n"),
    }
    out
}

pub fn exit_code(outcome: &SolveOutcome) -> i32 {
    match outcome {
        SolveOutcome::Sat { .. } => EXIT_SAT,
        SolveOutcome::Unsat => EXIT_UNSAT,
        SolveOutcome::Unknown { .. } => EXIT_UNKNOWN,
    }
}

/// Value of a `c <key> <number>` comment line, if present.
pub fn comment_stat(stdout: &str, key: &str) -> Option<u64> {
    stdout.lines().find_map(|line| {
        let mut words = line.split_whitespace();
        match (words.next(), words.next(), words.next()) {
            (Some("c"), Some(k), Some(v)) if k == key => v.parse().ok(),
            _ => None,
        }
    })
}
