//! Text form of a heuristic configuration, one `key = value` per line.
//!
//! ```text
//! # comments start with '#'
//! bump_amount = 1.0
//! decay_factor = 0.95
//! rescale_threshold = 1e100
//! restart = luby(64)            # or geometric(100, 1.5)
//! phase_saving = true
//! score = activity + 0.5 * saved_phase
//! ```
//!
//! In-process candidates for a patch point are scripts restricted to the
//! keys that point owns (see [`keys_for_point`]).

use std::fmt::Write as _;

use thiserror::Error;

use super::{ConfigError, ExprError, HeuristicConfig, HeuristicExpr, RestartPolicy};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScriptError {
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: key `{key}` is not editable at patch point `{point}`")]
    KeyNotAllowed { line: usize, key: String, point: String },
    #[error("line {line}: bad value for `{key}`: {detail}")]
    BadValue { line: usize, key: String, detail: String },
    #[error("line {line}: bad score expression: {source}")]
    Expr { line: usize, source: ExprError },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("no settings given")]
    Empty,
}

pub const KEYS: [&str; 6] = [
    "bump_amount",
    "decay_factor",
    "rescale_threshold",
    "restart",
    "phase_saving",
    "score",
];

/// Keys a candidate for `point` may set, or `None` for an unknown point.
pub fn keys_for_point(point: &str) -> Option<&'static [&'static str]> {
    Some(match point {
        "inc_activity" => &["bump_amount", "rescale_threshold", "decay_factor", "score"],
        "decay_activity" => &["decay_factor"],
        "restart_due" => &["restart"],
        "pick_phase" => &["phase_saving"],
        _ => return None,
    })
}

/// Applies `script` on top of `base`. With `point` set, only that point's
/// keys are accepted.
pub fn apply_script(base: &HeuristicConfig, script: &str, point: Option<&str>) -> Result<HeuristicConfig, ScriptError> {
    let allowed = point.and_then(keys_for_point);
    let mut cfg = base.clone();
    let mut any = false;
    for (idx, raw) in script.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or(ScriptError::Syntax { line: line_no })?;
        if !KEYS.contains(&key) {
            return Err(ScriptError::UnknownKey {
                line: line_no,
                key: key.to_string(),
            });
        }
        if let (Some(allowed), Some(point)) = (allowed, point) {
            if !allowed.contains(&key) {
                return Err(ScriptError::KeyNotAllowed {
                    line: line_no,
                    key: key.to_string(),
                    point: point.to_string(),
                });
            }
        }
        let bad = |detail: &str| ScriptError::BadValue {
            line: line_no,
            key: key.to_string(),
            detail: detail.to_string(),
        };
        let number = |v: &str| v.parse::<f64>().map_err(|_| bad("expected a number"));
        match key {
            "bump_amount" => cfg.bump_amount = number(value)?,
            "decay_factor" => cfg.decay_factor = number(value)?,
            "rescale_threshold" => cfg.rescale_threshold = number(value)?,
            "phase_saving" => cfg.phase_saving = value.parse().map_err(|_| bad("expected true or false"))?,
            "restart" => {
                cfg.restart_policy = parse_restart(value).ok_or_else(|| bad("expected luby(N) or geometric(B, F)"))?
            }
            "score" => {
                cfg.score_expr = if value == "default" {
                    None
                } else {
                    Some(HeuristicExpr::parse(value).map_err(|source| ScriptError::Expr { line: line_no, source })?)
                }
            }
            _ => unreachable!("key checked above"),
        }
        any = true;
    }
    if !any {
        return Err(ScriptError::Empty);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn parse_restart(value: &str) -> Option<RestartPolicy> {
    let (name, rest) = value.split_once('(')?;
    let args: Vec<&str> = rest.strip_suffix(')')?.split(',').map(str::trim).collect();
    match (name.trim(), args.as_slice()) {
        ("luby", [base]) => Some(RestartPolicy::Luby {
            base: base.parse().ok()?,
        }),
        ("geometric", [base, factor]) => Some(RestartPolicy::Geometric {
            base: base.parse().ok()?,
            factor: factor.parse().ok()?,
        }),
        _ => None,
    }
}

fn restart_text(p: &RestartPolicy) -> String {
    match p {
        RestartPolicy::Luby { base } => format!("luby({base})"),
        RestartPolicy::Geometric { base, factor } => format!("geometric({base:?}, {factor:?})"),
    }
}

/// The settings of `cfg` that belong to `point`, in script form. Unknown
/// points get the full script.
pub fn script_for_point(cfg: &HeuristicConfig, point: &str) -> String {
    let keys = keys_for_point(point).unwrap_or(&KEYS);
    let mut out = String::new();
    for key in keys {
        let value = match *key {
            "bump_amount" => format!("{:?}", cfg.bump_amount),
            "decay_factor" => format!("{:?}", cfg.decay_factor),
            "rescale_threshold" => format!("{:?}", cfg.rescale_threshold),
            "restart" => restart_text(&cfg.restart_policy),
            "phase_saving" => cfg.phase_saving.to_string(),
            _ => cfg
                .score_expr
                .as_ref()
                .map_or_else(|| "default".to_string(), ToString::to_string),
        };
        let _ = writeln!(out, "{key} = {value}");
    }
    out
}

pub fn to_script(cfg: &HeuristicConfig) -> String {
    script_for_point(cfg, "")
}
