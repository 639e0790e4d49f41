//! Exhaustive satisfiability check for small formulas.

use thiserror::Error;

use super::cnf::{Assignment, CnfFormula, SolveOutcome};

/// Largest variable count the exhaustive check accepts.
pub const BRUTE_FORCE_MAX_VARS: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("brute force is capped at {BRUTE_FORCE_MAX_VARS} variables, formula has {0}")]
pub struct TooManyVars(pub usize);

/// Enumerates assignments in ascending binary order, variable 1 being the
/// least significant bit, and returns the first model found.
///
/// Never returns `Unknown`.
pub fn brute_force_sat(formula: &CnfFormula) -> Result<SolveOutcome, TooManyVars> {
    let n = formula.num_vars();
    if n > BRUTE_FORCE_MAX_VARS {
        return Err(TooManyVars(n));
    }
    // Each clause becomes (positive mask, negative mask); it is satisfied by
    // `bits` iff some positive variable is set or some negative one is clear.
    let masks: Vec<(u32, u32)> = formula
        .clauses()
        .iter()
        .map(|clause| {
            clause.iter().fold((0u32, 0u32), |(pos, neg), &lit| {
                let bit = 1u32 << (lit.unsigned_abs() - 1);
                if lit > 0 {
                    (pos | bit, neg)
                } else {
                    (pos, neg | bit)
                }
            })
        })
        .collect();
    let total: u64 = 1u64 << n;
    for bits in 0..total {
        let bits = bits as u32;
        if masks.iter().all(|&(pos, neg)| bits & pos != 0 || !bits & neg != 0) {
            let values = (0..n).map(|i| bits >> i & 1 == 1).collect();
            return Ok(SolveOutcome::Sat {
                model: Assignment::new(values),
            });
        }
    }
    Ok(SolveOutcome::Unsat)
}
