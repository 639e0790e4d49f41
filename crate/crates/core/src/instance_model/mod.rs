//! CNF data model: formulas, assignments, DIMACS I/O, the exhaustive oracle,
//! and seeded instance generators.

mod cnf;
mod dimacs;
mod generators;
mod oracle;
pub mod rng;

use std::path::{Path, PathBuf};
use std::sync::Arc;

pub use cnf::{evaluate, Assignment, CnfFormula, FormulaError, SolveOutcome, UnknownReason};
pub use dimacs::{
    parse_dimacs, parse_dimacs_with_warnings, serialize_dimacs, DimacsError, DimacsWarning, ParsedDimacs,
};
pub use generators::{gen_pigeonhole, gen_random_ksat, pigeonhole_var, GeneratorError};
pub use oracle::{brute_force_sat, TooManyVars, BRUTE_FORCE_MAX_VARS};

/// A named formula backed by a DIMACS file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub name: String,
    pub path: PathBuf,
    pub formula: Arc<CnfFormula>,
}

#[derive(Debug, thiserror::Error)]
pub enum InstanceLoadError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Dimacs { path: PathBuf, source: DimacsError },
}

impl Instance {
    /// Loads a DIMACS file; the instance name is the file stem.
    pub fn load(path: &Path) -> Result<Self, InstanceLoadError> {
        let text = std::fs::read_to_string(path).map_err(|source| InstanceLoadError::Io {
            path: path.to_owned(),
            source,
        })?;
        let formula = parse_dimacs(&text).map_err(|source| InstanceLoadError::Dimacs {
            path: path.to_owned(),
            source,
        })?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        Ok(Self {
            name,
            path: path.to_owned(),
            formula: Arc::new(formula),
        })
    }

    /// Writes `formula` to `dir/<name>.cnf` and returns the instance.
    pub fn write_new(dir: &Path, name: &str, formula: CnfFormula) -> std::io::Result<Self> {
        let path = dir.join(format!("{name}.cnf"));
        std::fs::write(&path, serialize_dimacs(&formula))?;
        Ok(Self {
            name: name.to_string(),
            path,
            formula: Arc::new(formula),
        })
    }
}

/// Loads every `*.cnf` file under `dir`, sorted by file name.
pub fn load_instance_dir(dir: &Path) -> Result<Vec<Instance>, InstanceLoadError> {
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|source| InstanceLoadError::Io {
            path: dir.to_owned(),
            source,
        })?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "cnf"))
        .collect();
    paths.sort();
    paths.iter().map(|p| Instance::load(p)).collect()
}
