//! Append-only JSON Lines files.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::RunResult;

/// Version of the run-result line format. Bump on incompatible changes.
pub const RESULTS_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {source}")]
    Json {
        path: PathBuf,
        line: usize,
        source: serde_json::Error,
    },
    #[error("{path}:{line}: unsupported schema version {found}")]
    Schema { path: PathBuf, line: usize, found: u32 },
}

/// Serializes appends from many threads into one file; each value is
/// written and flushed as a single line.
#[derive(Debug)]
pub struct JsonlWriter {
    path: PathBuf,
    file: Mutex<File>,
}

impl JsonlWriter {
    pub fn append_to(path: &Path) -> Result<Self, LedgerError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|source| LedgerError::Io {
                path: path.to_owned(),
                source,
            })?;
        Ok(Self {
            path: path.to_owned(),
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append<T: Serialize>(&self, value: &T) -> Result<(), LedgerError> {
        let mut line = serde_json::to_vec(value).map_err(|source| LedgerError::Json {
            path: self.path.clone(),
            line: 0,
            source,
        })?;
        line.push(b'\n');
        let mut file = self.file.lock().unwrap_or_else(|e| e.into_inner());
        file.write_all(&line)
            .and_then(|_| file.flush())
            .map_err(|source| LedgerError::Io {
                path: self.path.clone(),
                source,
            })
    }
}

/// Reads every non-blank line of `path` as a `T`.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, LedgerError> {
    let io_err = |source| LedgerError::Io {
        path: path.to_owned(),
        source,
    };
    let reader = BufReader::new(File::open(path).map_err(io_err)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(io_err)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| LedgerError::Json {
            path: path.to_owned(),
            line: idx + 1,
            source,
        })?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub schema: u32,
    #[serde(flatten)]
    pub result: RunResult,
}

impl ResultRecord {
    pub fn new(result: RunResult) -> Self {
        Self {
            schema: RESULTS_SCHEMA_VERSION,
            result,
        }
    }
}

pub fn read_results(path: &Path) -> Result<Vec<RunResult>, LedgerError> {
    let records: Vec<ResultRecord> = read_jsonl(path)?;
    records
        .into_iter()
        .enumerate()
        .map(|(idx, rec)| {
            if rec.schema == RESULTS_SCHEMA_VERSION {
                Ok(rec.result)
            } else {
                Err(LedgerError::Schema {
                    path: path.to_owned(),
                    line: idx + 1,
                    found: rec.schema,
                })
            }
        })
        .collect()
}
