//! Deterministic instance families.

use thiserror::Error;

use super::cnf::CnfFormula;
use super::rng::XorShift64Star;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GeneratorError {
    #[error("clause width {k} exceeds variable count {n}")]
    WidthExceedsVars { k: usize, n: usize },
    #[error("pigeonhole needs at least one pigeon and one hole (got {pigeons}, {holes})")]
    EmptyPigeonhole { pigeons: usize, holes: usize },
    #[error("variable count {0} does not fit a DIMACS literal")]
    TooManyVars(usize),
}

/// Uniform random k-SAT: `m` clauses, each over `k` distinct variables drawn
/// without replacement, each sign a fair coin. Fully determined by
/// `(n, m, k, seed)` through [`XorShift64Star`].
pub fn gen_random_ksat(n: usize, m: usize, k: usize, seed: u64) -> Result<CnfFormula, GeneratorError> {
    if k > n {
        return Err(GeneratorError::WidthExceedsVars { k, n });
    }
    if n > i32::MAX as usize {
        return Err(GeneratorError::TooManyVars(n));
    }
    let mut rng = XorShift64Star::new(seed);
    let mut pool: Vec<i32> = (1..=n as i32).collect();
    let mut clauses = Vec::with_capacity(m);
    for _ in 0..m {
        // Partial Fisher-Yates over the variable pool.
        for i in 0..k {
            let j = i + rng.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        let clause = pool[..k]
            .iter()
            .map(|&v| if rng.next_bool() { v } else { -v })
            .collect();
        clauses.push(clause);
    }
    Ok(CnfFormula::new(n, clauses).expect("generated literals are in range"))
}

/// Variable for "pigeon `pigeon` sits in hole `hole`", both 1-based.
pub fn pigeonhole_var(pigeon: usize, hole: usize, holes: usize) -> i32 {
    ((pigeon - 1) * holes + hole) as i32
}

/// Pigeonhole principle PHP(p, h): every pigeon in some hole, no hole shared.
///
/// `p * h` variables; `p` clauses of width `h` followed by `h * C(p, 2)`
/// binary exclusion clauses (hole-major).
pub fn gen_pigeonhole(pigeons: usize, holes: usize) -> Result<CnfFormula, GeneratorError> {
    if pigeons == 0 || holes == 0 {
        return Err(GeneratorError::EmptyPigeonhole { pigeons, holes });
    }
    let num_vars = pigeons
        .checked_mul(holes)
        .filter(|&n| n <= i32::MAX as usize)
        .ok_or(GeneratorError::TooManyVars(usize::MAX))?;
    let mut clauses = Vec::new();
    for p in 1..=pigeons {
        clauses.push((1..=holes).map(|h| pigeonhole_var(p, h, holes)).collect());
    }
    for h in 1..=holes {
        for p1 in 1..=pigeons {
            for p2 in p1 + 1..=pigeons {
                clauses.push(vec![-pigeonhole_var(p1, h, holes), -pigeonhole_var(p2, h, holes)]);
            }
        }
    }
    Ok(CnfFormula::new(num_vars, clauses).expect("generated literals are in range"))
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::instance_model::brute_force_sat;

    #[test]
    fn ksat_is_deterministic() {
        assert_eq!(
            gen_random_ksat(5, 3, 3, 42).unwrap(),
            gen_random_ksat(5, 3, 3, 42).unwrap()
        );
        assert_ne!(
            gen_random_ksat(20, 50, 3, 1).unwrap(),
            gen_random_ksat(20, 50, 3, 2).unwrap()
        );
    }

    #[test]
    fn ksat_clauses_have_distinct_variables() {
        for seed in 0..50 {
            let f = gen_random_ksat(6, 40, 3, seed).unwrap();
            assert_eq!(f.num_clauses(), 40);
            for clause in f.clauses() {
                let vars: HashSet<_> = clause.iter().map(|l| l.unsigned_abs()).collect();
                assert_eq!(vars.len(), 3);
            }
        }
    }

    #[test]
    fn ksat_width_may_equal_var_count() {
        let f = gen_random_ksat(3, 4, 3, 9).unwrap();
        assert!(f.clauses().iter().all(|c| c.len() == 3));
        assert_eq!(
            gen_random_ksat(2, 1, 3, 0),
            Err(GeneratorError::WidthExceedsVars { k: 3, n: 2 })
        );
    }

    #[test]
    fn threshold_ksat_batch_is_mixed() {
        let sat = (0..200)
            .filter(|&seed| {
                let f = gen_random_ksat(20, 85, 3, seed).unwrap();
                brute_force_sat(&f).unwrap().is_sat()
            })
            .count();
        assert!(sat > 0 && sat < 200, "sat count {sat}");
    }

    #[test]
    fn pigeonhole_shapes() {
        let f = gen_pigeonhole(2, 1).unwrap();
        assert_eq!(f.num_vars(), 2);
        assert_eq!(f.clauses(), &[vec![1], vec![2], vec![-1, -2]]);

        let f = gen_pigeonhole(3, 2).unwrap();
        assert_eq!(f.num_vars(), 6);
        assert_eq!(f.num_clauses(), 3 + 2 * 3);
        assert!(f.clauses()[..3].iter().all(|c| c.len() == 2));
    }

    #[test]
    fn pigeonhole_with_one_fewer_hole_is_unsat() {
        for h in 1..=3 {
            let f = gen_pigeonhole(h + 1, h).unwrap();
            assert!(brute_force_sat(&f).unwrap().is_unsat(), "h = {h}");
        }
        assert!(brute_force_sat(&gen_pigeonhole(3, 3).unwrap()).unwrap().is_sat());
    }

    #[test]
    fn pigeonhole_rejects_empty_sides() {
        assert!(gen_pigeonhole(0, 2).is_err());
        assert!(gen_pigeonhole(2, 0).is_err());
    }
}
