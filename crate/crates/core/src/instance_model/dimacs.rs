//! DIMACS CNF reading and writing.
//!
//! Accepted input: `c` comment lines, one `p cnf <vars> <clauses>` header,
//! then whitespace-separated literals with `0` closing each clause (clauses
//! may span lines). A line starting with `%` ends the input. The header's
//! clause count is advisory: a mismatch is reported as a warning and the
//! clauses actually present are kept. The final clause may omit its `0` only
//! when nothing but whitespace follows its last literal.

use std::fmt::Write as _;

use thiserror::Error;

use super::cnf::{CnfFormula, FormulaError};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DimacsError {
    #[error("line {line}: clause data before `p cnf` header")]
    MissingHeader { line: usize },
    #[error("no `p cnf` header found")]
    NoHeader,
    #[error("line {line}: malformed header `{text}`")]
    BadHeader { line: usize, text: String },
    #[error("line {line}: duplicate `p` header")]
    DuplicateHeader { line: usize },
    #[error("line {line}: `{token}` is not an integer")]
    BadToken { line: usize, token: String },
    #[error("line {line}: literal {literal} exceeds declared variable count {num_vars}")]
    LiteralOutOfRange { line: usize, literal: i64, num_vars: usize },
    #[error("line {line}: clause not terminated by 0")]
    UnterminatedClause { line: usize },
    #[error(transparent)]
    Formula(#[from] FormulaError),
}

/// Non-fatal findings while parsing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DimacsWarning {
    ClauseCountMismatch { declared: usize, actual: usize },
    MissingFinalTerminator,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParsedDimacs {
    pub formula: CnfFormula,
    pub warnings: Vec<DimacsWarning>,
}

/// Parses DIMACS text, logging any warnings.
pub fn parse_dimacs(text: &str) -> Result<CnfFormula, DimacsError> {
    let parsed = parse_dimacs_with_warnings(text)?;
    for w in &parsed.warnings {
        log::warn!("dimacs: {w:?}");
    }
    Ok(parsed.formula)
}

pub fn parse_dimacs_with_warnings(text: &str) -> Result<ParsedDimacs, DimacsError> {
    let mut header: Option<(usize, usize)> = None;
    let mut clauses: Vec<Vec<i32>> = Vec::new();
    let mut current: Vec<i32> = Vec::new();
    // Line of the first literal of `current`, if any.
    let mut open_since: Option<usize> = None;

    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('c') || line.starts_with('%') {
            if let Some(start) = open_since {
                return Err(DimacsError::UnterminatedClause { line: start });
            }
            if line.starts_with('%') {
                break;
            }
            continue;
        }
        if line.starts_with('p') {
            if header.is_some() {
                return Err(DimacsError::DuplicateHeader { line: line_no });
            }
            header = Some(parse_header(line, line_no)?);
            continue;
        }
        let Some((num_vars, _)) = header else {
            return Err(DimacsError::MissingHeader { line: line_no });
        };
        for token in line.split_whitespace() {
            let lit: i64 = token.parse().map_err(|_| DimacsError::BadToken {
                line: line_no,
                token: token.to_string(),
            })?;
            if lit == 0 {
                clauses.push(std::mem::take(&mut current));
                open_since = None;
                continue;
            }
            if lit.unsigned_abs() > num_vars as u64 {
                return Err(DimacsError::LiteralOutOfRange {
                    line: line_no,
                    literal: lit,
                    num_vars,
                });
            }
            current.push(lit as i32);
            open_since.get_or_insert(line_no);
        }
    }

    let (num_vars, declared) = header.ok_or(DimacsError::NoHeader)?;
    let mut warnings = Vec::new();
    if !current.is_empty() {
        clauses.push(current);
        warnings.push(DimacsWarning::MissingFinalTerminator);
    }
    if declared != clauses.len() {
        warnings.push(DimacsWarning::ClauseCountMismatch {
            declared,
            actual: clauses.len(),
        });
    }
    Ok(ParsedDimacs {
        formula: CnfFormula::new(num_vars, clauses)?,
        warnings,
    })
}

fn parse_header(line: &str, line_no: usize) -> Result<(usize, usize), DimacsError> {
    let bad = || DimacsError::BadHeader {
        line: line_no,
        text: line.to_string(),
    };
    let parts: Vec<&str> = line.split_whitespace().collect();
    if parts.len() != 4 || parts[0] != "p" || parts[1] != "cnf" {
        return Err(bad());
    }
    let vars = parts[2].parse::<usize>().map_err(|_| bad())?;
    let clauses = parts[3].parse::<usize>().map_err(|_| bad())?;
    if vars > i32::MAX as usize {
        return Err(bad());
    }
    Ok((vars, clauses))
}

/// Writes the formula as DIMACS: header, then one `0`-terminated clause per
/// line, `\n` line endings.
pub fn serialize_dimacs(formula: &CnfFormula) -> String {
    let mut out = String::with_capacity(16 + formula.num_literals() * 4);
    let _ = writeln!(out, "p cnf {} {}", formula.num_vars(), formula.num_clauses());
    for clause in formula.clauses() {
        for lit in clause {
            let _ = write!(out, "{lit} ");
        }
        out.push_str("0\n");
    }
    out
}
