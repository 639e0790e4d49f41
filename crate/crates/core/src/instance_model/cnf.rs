use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Structural problems with a formula or assignment.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FormulaError {
    #[error("literal 0 in clause {clause}")]
    ZeroLiteral { clause: usize },
    #[error("literal {literal} in clause {clause} exceeds variable count {num_vars}")]
    LiteralOutOfRange {
        literal: i64,
        clause: usize,
        num_vars: usize,
    },
    #[error("assignment covers {got} variables but formula has {expected}")]
    DomainMismatch { expected: usize, got: usize },
}

/// A CNF formula over variables `1..=num_vars`.
///
/// Clause order and literal order are kept exactly as given. Empty clauses
/// are allowed and make the formula unsatisfiable.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "RawFormula", into = "RawFormula")]
pub struct CnfFormula {
    num_vars: usize,
    clauses: Vec<Vec<i32>>,
}

#[derive(Serialize, Deserialize)]
struct RawFormula {
    num_vars: usize,
    clauses: Vec<Vec<i32>>,
}

impl TryFrom<RawFormula> for CnfFormula {
    type Error = FormulaError;
    fn try_from(raw: RawFormula) -> Result<Self, Self::Error> {
        CnfFormula::new(raw.num_vars, raw.clauses)
    }
}

impl From<CnfFormula> for RawFormula {
    fn from(f: CnfFormula) -> Self {
        RawFormula {
            num_vars: f.num_vars,
            clauses: f.clauses,
        }
    }
}

impl CnfFormula {
    pub fn new(num_vars: usize, clauses: Vec<Vec<i32>>) -> Result<Self, FormulaError> {
        for (ci, clause) in clauses.iter().enumerate() {
            for &lit in clause {
                if lit == 0 {
                    return Err(FormulaError::ZeroLiteral { clause: ci });
                }
                if lit.unsigned_abs() as usize > num_vars {
                    return Err(FormulaError::LiteralOutOfRange {
                        literal: lit as i64,
                        clause: ci,
                        num_vars,
                    });
                }
            }
        }
        Ok(Self { num_vars, clauses })
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn clauses(&self) -> &[Vec<i32>] {
        &self.clauses
    }

    pub fn num_clauses(&self) -> usize {
        self.clauses.len()
    }

    pub fn num_literals(&self) -> usize {
        self.clauses.iter().map(Vec::len).sum()
    }

    /// Returns this formula with one extra clause appended.
    pub fn with_clause(&self, clause: Vec<i32>) -> Result<Self, FormulaError> {
        let mut clauses = self.clauses.clone();
        clauses.push(clause);
        Self::new(self.num_vars, clauses)
    }
}

/// A total truth assignment over `1..=len`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Assignment {
    values: Vec<bool>,
}

impl Assignment {
    /// `values[i]` is the value of variable `i + 1`.
    pub fn new(values: Vec<bool>) -> Self {
        Self { values }
    }

    /// Builds an assignment from a model given as signed literals.
    ///
    /// Every variable in `1..=num_vars` must appear exactly once.
    pub fn from_literals(num_vars: usize, literals: &[i32]) -> Option<Self> {
        let mut values = vec![None; num_vars];
        for &lit in literals {
            let var = lit.unsigned_abs() as usize;
            if lit == 0 || var > num_vars {
                return None;
            }
            match values[var - 1] {
                None => values[var - 1] = Some(lit > 0),
                Some(_) => return None,
            }
        }
        values.into_iter().collect::<Option<Vec<_>>>().map(Self::new)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Value of the 1-based variable `var`.
    pub fn value(&self, var: usize) -> bool {
        self.values[var - 1]
    }

    pub fn satisfies(&self, lit: i32) -> bool {
        self.value(lit.unsigned_abs() as usize) == (lit > 0)
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    /// The model as signed literals `±1 .. ±len`.
    pub fn to_literals(&self) -> Vec<i32> {
        self.values
            .iter()
            .enumerate()
            .map(|(i, &v)| if v { i as i32 + 1 } else { -(i as i32 + 1) })
            .collect()
    }
}

/// Why a run produced no answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnknownReason {
    Timeout,
    ResourceLimit,
    Crash,
    MalformedOutput,
}

/// Result of solving a formula.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolveOutcome {
    Sat { model: Assignment },
    Unsat,
    Unknown { reason: UnknownReason },
}

impl SolveOutcome {
    pub fn is_sat(&self) -> bool {
        matches!(self, SolveOutcome::Sat { .. })
    }

    pub fn is_unsat(&self) -> bool {
        matches!(self, SolveOutcome::Unsat)
    }

    /// `Some(true)` for SAT, `Some(false)` for UNSAT, `None` otherwise.
    pub fn answer(&self) -> Option<bool> {
        match self {
            SolveOutcome::Sat { .. } => Some(true),
            SolveOutcome::Unsat => Some(false),
            SolveOutcome::Unknown { .. } => None,
        }
    }
}

/// True iff every clause has a literal satisfied by `assignment`.
pub fn evaluate(formula: &CnfFormula, assignment: &Assignment) -> Result<bool, FormulaError> {
    if assignment.len() != formula.num_vars() {
        return Err(FormulaError::DomainMismatch {
            expected: formula.num_vars(),
            got: assignment.len(),
        });
    }
    Ok(formula
        .clauses()
        .iter()
        .all(|clause| clause.iter().any(|&lit| assignment.satisfies(lit))))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f0() -> CnfFormula {
        CnfFormula::new(3, vec![vec![1, 3], vec![-2, 3]]).unwrap()
    }

    #[test]
    fn all_true_satisfies_f0() {
        let a1 = Assignment::new(vec![true, true, true]);
        assert!(evaluate(&f0(), &a1).unwrap());
    }

    #[test]
    fn empty_formula_is_vacuously_true() {
        let f = CnfFormula::new(0, vec![]).unwrap();
        assert!(evaluate(&f, &Assignment::new(vec![])).unwrap());
    }

    #[test]
    fn empty_clause_is_false_under_every_assignment() {
        let f = CnfFormula::new(2, vec![vec![1, 2], vec![]]).unwrap();
        for bits in 0..4u32 {
            let a = Assignment::new(vec![bits & 1 == 1, bits & 2 == 2]);
            assert!(!evaluate(&f, &a).unwrap());
        }
    }

    #[test]
    fn domain_mismatch_is_rejected() {
        let err = evaluate(&f0(), &Assignment::new(vec![true])).unwrap_err();
        assert_eq!(err, FormulaError::DomainMismatch { expected: 3, got: 1 });
    }

    #[test]
    fn out_of_range_and_zero_literals_are_rejected() {
        assert!(matches!(
            CnfFormula::new(2, vec![vec![3]]),
            Err(FormulaError::LiteralOutOfRange { literal: 3, .. })
        ));
        assert!(matches!(
            CnfFormula::new(2, vec![vec![1, 0]]),
            Err(FormulaError::ZeroLiteral { clause: 0 })
        ));
    }

    #[test]
    fn model_literals_must_cover_every_variable_once() {
        assert!(Assignment::from_literals(3, &[1, -2, 3]).is_some());
        assert!(Assignment::from_literals(3, &[1, -2]).is_none());
        assert!(Assignment::from_literals(3, &[1, -1, 2, 3]).is_none());
        assert!(Assignment::from_literals(3, &[1, 2, 4]).is_none());
    }

    #[test]
    fn formula_serde_validates() {
        let bad = r#"{"num_vars":1,"clauses":[[2]]}"#;
        assert!(serde_json::from_str::<CnfFormula>(bad).is_err());
        let good = serde_json::to_string(&f0()).unwrap();
        assert_eq!(serde_json::from_str::<CnfFormula>(&good).unwrap(), f0());
    }
}
