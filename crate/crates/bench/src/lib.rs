//! Shared inputs for the benchmarks.

use solsearch_core::instance_model::{gen_pigeonhole, gen_random_ksat};
use solsearch_core::CnfFormula;

/// Random 3-SAT at the threshold ratio, seeded by `seed`.
pub fn threshold_3sat(n: usize, seed: u64) -> CnfFormula {
    let m = (4.26 * n as f64).round() as usize;
    gen_random_ksat(n, m, 3, seed).expect("valid parameters")
}

pub fn pigeonhole(holes: usize) -> CnfFormula {
    gen_pigeonhole(holes + 1, holes).expect("valid parameters")
}
