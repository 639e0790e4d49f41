//! Tunables for the decision heuristic, restarts and phase selection.
//!
//! This file is also compiled standalone inside the exported solver package,
//! so it depends on nothing but `std` and its sibling modules.

use std::fmt;

use super::expr::HeuristicExpr;

#[derive(Debug, Clone, PartialEq)]
pub enum RestartPolicy {
    /// Restart after `base * luby(i)` conflicts.
    Luby { base: u64 },
    /// Restart after `base * factor^i` conflicts.
    Geometric { base: f64, factor: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeuristicConfig {
    /// Initial activity increment.
    pub bump_amount: f64,
    /// The increment is divided by this after every conflict.
    pub decay_factor: f64,
    /// Activities are rescaled once one exceeds this value.
    pub rescale_threshold: f64,
    pub restart_policy: RestartPolicy,
    pub phase_saving: bool,
    /// Replaces plain activity ordering when set.
    pub score_expr: Option<HeuristicExpr>,
}

impl Default for HeuristicConfig {
    fn default() -> Self {
        Self {
            bump_amount: 1.0,
            decay_factor: 0.95,
            rescale_threshold: 1e100,
            restart_policy: RestartPolicy::Luby { base: 64 },
            phase_saving: true,
            score_expr: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid heuristic config: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

impl HeuristicConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let err = |m: &str| Err(ConfigError(m.to_string()));
        if !(self.bump_amount > 0.0 && self.bump_amount.is_finite()) {
            return err("bump_amount must be a positive finite number");
        }
        if !(self.decay_factor > 0.0 && self.decay_factor < 1.0) {
            return err("decay_factor must lie in (0, 1)");
        }
        if !(self.rescale_threshold > self.bump_amount && self.rescale_threshold.is_finite()) {
            return err("rescale_threshold must be finite and exceed bump_amount");
        }
        match self.restart_policy {
            RestartPolicy::Luby { base: 0 } => err("luby base must be positive"),
            RestartPolicy::Geometric { base, factor } if !(base >= 1.0 && factor >= 1.0) => {
                err("geometric restarts need base >= 1 and factor >= 1")
            }
            _ => Ok(()),
        }
    }
}

/// The `i`-th element (0-based) of the Luby sequence 1 1 2 1 1 2 4 ...
pub fn luby(i: u64) -> u64 {
    let mut size = 1u64;
    let mut seq = 0u32;
    while size < i + 1 {
        seq += 1;
        size = 2 * size + 1;
    }
    let mut x = i;
    while size - 1 != x {
        size = (size - 1) >> 1;
        seq -= 1;
        x %= size;
    }
    1u64 << seq
}
