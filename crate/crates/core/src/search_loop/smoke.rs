//! Tiny instances with known answers that every candidate must get right
//! before it is benchmarked.

use std::path::Path;

use crate::bench_harness::RunResult;
use crate::instance_model::{brute_force_sat, gen_pigeonhole, gen_random_ksat, Instance, SolveOutcome};

pub const SMOKE_SIZE: usize = 20;

#[derive(Debug, Clone)]
pub struct SmokeInstance {
    pub instance: Instance,
    pub expected_sat: bool,
}

/// Pigeonhole (2,1), (3,2), (4,3) and seventeen seeded random 3-SAT
/// formulas with 5 to 12 variables at the 4.26 ratio, written to `dir`.
/// Answers come from the exhaustive oracle.
pub fn smoke_suite(dir: &Path) -> std::io::Result<Vec<SmokeInstance>> {
    std::fs::create_dir_all(dir)?;
    let mut formulas = Vec::with_capacity(SMOKE_SIZE);
    for h in 1..=3 {
        formulas.push((
            format!("smoke-php-{}-{h}", h + 1),
            gen_pigeonhole(h + 1, h).expect("valid"),
        ));
    }
    for i in 0..(SMOKE_SIZE - 3) as u64 {
        let n = 5 + (i % 8) as usize;
        let m = (4.26 * n as f64).round() as usize;
        formulas.push((
            format!("smoke-r3-{i:02}"),
            gen_random_ksat(n, m, 3, 0x5eed + i).expect("valid"),
        ));
    }
    formulas
        .into_iter()
        .map(|(name, f)| {
            let expected_sat = brute_force_sat(&f).expect("small").is_sat();
            Ok(SmokeInstance {
                instance: Instance::write_new(dir, &name, f)?,
                expected_sat,
            })
        })
        .collect()
}

/// Why a smoke run disqualifies a candidate, if it does. Unknown answers
/// pass; crashes and wrong or unverifiable answers do not.
pub fn smoke_failure(case: &SmokeInstance, result: &RunResult) -> Option<String> {
    if result.wrong_answer {
        return Some(format!("{}: invalid model for a SAT claim", case.instance.name));
    }
    match (&result.outcome, case.expected_sat) {
        (SolveOutcome::Sat { .. }, false) => Some(format!("{}: answered SAT on an UNSAT instance", case.instance.name)),
        (SolveOutcome::Unsat, true) => Some(format!("{}: answered UNSAT on a SAT instance", case.instance.name)),
        (SolveOutcome::Unknown { reason }, _) if result.exit_kind == crate::bench_harness::ExitKind::Crashed => {
            Some(format!("{}: crashed ({reason:?})", case.instance.name))
        }
        _ => None,
    }
}
