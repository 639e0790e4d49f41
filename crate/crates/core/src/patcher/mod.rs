//! Marker-delimited patch regions, copy-on-write workspaces, and a build
//! cache keyed by (base tree hash, patch point, code hash).

mod scan;
mod tree;

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use scan::{
    language_for, scan_patch_points, scan_text, splice_text, PatchPoint, PointHistory, ScanError, BEGIN_MARKER,
    END_MARKER,
};
pub use tree::{copy_tree, list_files, sha256_hex, tree_hash, TreeError, IGNORE_FILE};

use crate::bench_harness::process::{run_child, Termination};

pub const DEFAULT_BUILD_TIMEOUT_S: f64 = 300.0;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum BuildStatus {
    Unbuilt,
    Built { binary: PathBuf },
    Failed { log: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Workspace {
    pub base_tree_hash: String,
    /// `None` for an unpatched copy of the base tree.
    pub patch_point: Option<String>,
    pub code_hash: String,
    pub key: String,
    pub dir: PathBuf,
    pub build_status: BuildStatus,
}

impl Workspace {
    pub fn binary(&self) -> Option<&Path> {
        match &self.build_status {
            BuildStatus::Built { binary } => Some(binary),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum PatchError {
    #[error("patch point `{name}` not found in {file}")]
    PointNotFound { name: String, file: String },
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PatchError + '_ {
    move |source| PatchError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Candidate code as spliced: ends with exactly one newline unless empty.
pub fn normalize_code(code: &str) -> String {
    let trimmed = code.trim_end_matches(['\n', '\r']);
    if trimmed.is_empty() {
        String::new()
    } else {
        format!("{trimmed}\n")
    }
}

/// Workspace and build cache rooted at one directory:
/// `ws/<key>` holds spliced trees, `built/<key>` built trees,
/// `status/<key>.json` build outcomes.
#[derive(Debug)]
pub struct Patcher {
    root: PathBuf,
    build_timeout_s: f64,
    invocations: AtomicU64,
    locks: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl Patcher {
    pub fn new(cache_root: &Path) -> Result<Self, PatchError> {
        for sub in ["ws", "built", "status", "tmp"] {
            let dir = cache_root.join(sub);
            std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
        }
        let root = std::path::absolute(cache_root).map_err(io_err(cache_root))?;
        Ok(Self {
            root,
            build_timeout_s: DEFAULT_BUILD_TIMEOUT_S,
            invocations: AtomicU64::new(0),
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn with_build_timeout(mut self, seconds: f64) -> Self {
        self.build_timeout_s = seconds;
        self
    }

    pub fn cache_root(&self) -> &Path {
        &self.root
    }

    /// Build commands actually started by this patcher.
    pub fn build_invocations(&self) -> u64 {
        self.invocations.load(Ordering::SeqCst)
    }

    fn key_lock(&self, key: &str) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(key.to_string()).or_default().clone()
    }

    fn status_path(&self, key: &str) -> PathBuf {
        self.root.join("status").join(format!("{key}.json"))
    }

    fn cached_status(&self, key: &str) -> BuildStatus {
        std::fs::read_to_string(self.status_path(key))
            .ok()
            .and_then(|text| serde_json::from_str(&text).ok())
            .unwrap_or(BuildStatus::Unbuilt)
    }

    /// Materializes the tree produced by `edit` (which may rewrite files in
    /// the fresh copy) under `key`, or reuses an existing one.
    fn materialize_with(
        &self,
        source_root: &Path,
        key: &str,
        edit: impl FnOnce(&Path) -> Result<(), PatchError>,
    ) -> Result<PathBuf, PatchError> {
        let dir = self.root.join("ws").join(key);
        let lock = self.key_lock(key);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        if dir.is_dir() {
            return Ok(dir);
        }
        let tmp_root = self.root.join("tmp");
        let tmp = tempfile::Builder::new()
            .prefix("ws-")
            .tempdir_in(&tmp_root)
            .map_err(io_err(&tmp_root))?;
        copy_tree(source_root, tmp.path())?;
        edit(tmp.path())?;
        let staged = tmp.keep();
        if let Err(e) = std::fs::rename(&staged, &dir) {
            let _ = std::fs::remove_dir_all(&staged);
            if !dir.is_dir() {
                return Err(io_err(&dir)(e));
            }
        }
        Ok(dir)
    }

    /// An unpatched copy of `source_root`.
    pub fn materialize(&self, source_root: &Path) -> Result<Workspace, PatchError> {
        let base = tree_hash(source_root)?;
        let key = sha256_hex(&[base.as_bytes(), b"", b""]);
        let dir = self.materialize_with(source_root, &key, |_| Ok(()))?;
        Ok(Workspace {
            base_tree_hash: base,
            patch_point: None,
            code_hash: String::new(),
            build_status: self.cached_status(&key),
            key,
            dir,
        })
    }

    /// A copy of `source_root` with the body of `point` replaced by `code`.
    pub fn splice(&self, source_root: &Path, point: &PatchPoint, code: &str) -> Result<Workspace, PatchError> {
        let base = tree_hash(source_root)?;
        let code_hash = sha256_hex(&[code.as_bytes()]);
        let key = sha256_hex(&[base.as_bytes(), point.name.as_bytes(), code_hash.as_bytes()]);
        let file = source_root.join(&point.file);
        let text = std::fs::read_to_string(&file).map_err(io_err(&file))?;
        let not_found = || PatchError::PointNotFound {
            name: point.name.clone(),
            file: point.file.clone(),
        };
        let spliced = splice_text(&text, &point.name, code).ok_or_else(not_found)?;
        let dir = self.materialize_with(source_root, &key, |tmp| {
            let target = tmp.join(&point.file);
            std::fs::write(&target, spliced).map_err(io_err(&target))
        })?;
        Ok(Workspace {
            base_tree_hash: base,
            patch_point: Some(point.name.clone()),
            code_hash,
            build_status: self.cached_status(&key),
            key,
            dir,
        })
    }

    /// Builds `ws` with `build_cmd` in a scratch copy, publishing the built
    /// tree by rename on success. Outcomes, including failures, are cached
    /// per workspace key.
    pub fn build(&self, ws: &Workspace, build_cmd: &str, binary: &str) -> Workspace {
        let lock = self.key_lock(&ws.key);
        let _guard = lock.lock().unwrap_or_else(|e| e.into_inner());
        let mut out = ws.clone();
        out.build_status = self.cached_status(&ws.key);
        if out.build_status != BuildStatus::Unbuilt {
            return out;
        }
        self.invocations.fetch_add(1, Ordering::SeqCst);
        out.build_status = self.run_build(ws, build_cmd, binary);
        if let Ok(json) = serde_json::to_string(&out.build_status) {
            let path = self.status_path(&ws.key);
            let written = tempfile::NamedTempFile::new_in(self.root.join("tmp")).and_then(|mut f| {
                use std::io::Write;
                f.write_all(json.as_bytes())?;
                f.persist(&path).map_err(|e| e.error)?;
                Ok(())
            });
            if let Err(e) = written {
                log::warn!("could not cache build status for {}: {e}", ws.key);
            }
        }
        out
    }

    fn run_build(&self, ws: &Workspace, build_cmd: &str, binary: &str) -> BuildStatus {
        let failed = |log: String| BuildStatus::Failed { log };
        let Some(argv) = shlex::split(build_cmd).filter(|a| !a.is_empty()) else {
            return failed(format!("build command does not split into words: {build_cmd:?}"));
        };
        let scratch = match tempfile::Builder::new()
            .prefix("build-")
            .tempdir_in(self.root.join("tmp"))
        {
            Ok(d) => d,
            Err(e) => return failed(format!("creating build dir: {e}")),
        };
        if let Err(e) = tree::copy_all(&ws.dir, scratch.path()) {
            return failed(format!("copying workspace: {e}"));
        }
        let run = match run_child(&argv, scratch.path(), self.build_timeout_s, None) {
            Ok(run) => run,
            Err(e) => return failed(format!("spawning {}: {e}", argv[0])),
        };
        let mut log = format!("$ {build_cmd}\n{}{}", run.stdout, run.stderr);
        match run.termination {
            Termination::Exited(0) => {}
            Termination::TimedOut => {
                log.push_str(&format!("\nbuild timed out after {} s\n", self.build_timeout_s));
                return failed(log);
            }
            Termination::Exited(code) => {
                log.push_str(&format!("\nbuild exited with status {code}\n"));
                return failed(log);
            }
            Termination::Signaled(sig) => {
                log.push_str(&format!("\nbuild killed by signal {sig}\n"));
                return failed(log);
            }
        }
        if !scratch.path().join(binary).is_file() {
            log.push_str(&format!("\nbuild succeeded but produced no `{binary}`\n"));
            return failed(log);
        }
        let dest = self.root.join("built").join(&ws.key);
        let staged = scratch.keep();
        if let Err(e) = std::fs::rename(&staged, &dest) {
            let _ = std::fs::remove_dir_all(&staged);
            if !dest.is_dir() {
                return failed(format!("{log}\npublishing build: {e}\n"));
            }
        }
        BuildStatus::Built {
            binary: dest.join(binary),
        }
    }
}

#[cfg(test)]
mod tests;
