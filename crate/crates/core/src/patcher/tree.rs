use std::path::{Path, PathBuf};

use globset::{Glob, GlobSet, GlobSetBuilder};
use sha2::{Digest, Sha256};
use thiserror::Error;
use walkdir::WalkDir;

pub const IGNORE_FILE: &str = ".solsearchignore";

#[derive(Debug, Error)]
pub enum TreeError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("walking {root}: {source}")]
    Walk { root: PathBuf, source: walkdir::Error },
    #[error("{IGNORE_FILE}: bad pattern `{pattern}`: {source}")]
    Pattern { pattern: String, source: globset::Error },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> TreeError + '_ {
    move |source| TreeError::Io {
        path: path.to_owned(),
        source,
    }
}

/// Patterns from `.solsearchignore`: one glob per line, `#` comments. A
/// pattern without `/` matches a file name at any depth.
fn ignore_set(root: &Path) -> Result<GlobSet, TreeError> {
    let mut builder = GlobSetBuilder::new();
    let text = match std::fs::read_to_string(root.join(IGNORE_FILE)) {
        Ok(t) => t,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => String::new(),
        Err(e) => return Err(io_err(&root.join(IGNORE_FILE))(e)),
    };
    for line in text.lines().map(str::trim) {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let pattern = line.trim_start_matches('/').trim_end_matches('/');
        let mut variants = vec![pattern.to_string(), format!("{pattern}/**")];
        if !pattern.contains('/') {
            variants.push(format!("**/{pattern}"));
            variants.push(format!("**/{pattern}/**"));
        }
        for p in variants {
            let glob = Glob::new(&p).map_err(|source| TreeError::Pattern {
                pattern: line.to_string(),
                source,
            })?;
            builder.add(glob);
        }
    }
    builder.build().map_err(|source| TreeError::Pattern {
        pattern: String::new(),
        source,
    })
}

/// Relative paths (with `/`) of all non-ignored files, sorted.
pub fn list_files(root: &Path) -> Result<Vec<String>, TreeError> {
    let ignore = ignore_set(root)?;
    let mut files = Vec::new();
    let walker = WalkDir::new(root)
        .follow_links(false)
        .into_iter()
        .filter_entry(|e| e.depth() == 0 || e.file_name() != ".git");
    for entry in walker {
        let entry = entry.map_err(|source| TreeError::Walk {
            root: root.to_owned(),
            source,
        })?;
        if !entry.file_type().is_file() {
            continue;
        }
        let rel = entry.path().strip_prefix(root).expect("walk stays under root");
        let rel = rel
            .components()
            .map(|c| c.as_os_str().to_string_lossy())
            .collect::<Vec<_>>()
            .join("/");
        if !ignore.is_match(&rel) {
            files.push(rel);
        }
    }
    files.sort();
    Ok(files)
}

/// Hash over (relative path, file bytes) of all non-ignored files in path
/// order.
pub fn tree_hash(root: &Path) -> Result<String, TreeError> {
    let mut hasher = Sha256::new();
    for rel in list_files(root)? {
        let path = root.join(&rel);
        let bytes = std::fs::read(&path).map_err(io_err(&path))?;
        hasher.update((rel.len() as u64).to_le_bytes());
        hasher.update(rel.as_bytes());
        hasher.update((bytes.len() as u64).to_le_bytes());
        hasher.update(&bytes);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Copies the non-ignored files of `src` into `dst`, keeping permissions.
pub fn copy_tree(src: &Path, dst: &Path) -> Result<(), TreeError> {
    copy_files(src, dst, &list_files(src)?)
}

/// Copies every file of `src`, ignored or not.
pub fn copy_all(src: &Path, dst: &Path) -> Result<(), TreeError> {
    let mut files = Vec::new();
    for entry in WalkDir::new(src) {
        let entry = entry.map_err(|source| TreeError::Walk {
            root: src.to_owned(),
            source,
        })?;
        if entry.file_type().is_file() {
            let rel = entry.path().strip_prefix(src).expect("walk stays under root");
            files.push(rel.to_string_lossy().into_owned());
        }
    }
    copy_files(src, dst, &files)
}

fn copy_files(src: &Path, dst: &Path, files: &[String]) -> Result<(), TreeError> {
    for rel in files {
        let to = dst.join(rel);
        if let Some(parent) = to.parent() {
            std::fs::create_dir_all(parent).map_err(io_err(parent))?;
        }
        let from = src.join(rel);
        std::fs::copy(&from, &to).map_err(io_err(&from))?;
    }
    Ok(())
}

pub fn sha256_hex(parts: &[&[u8]]) -> String {
    let mut hasher = Sha256::new();
    for part in parts {
        hasher.update((part.len() as u64).to_le_bytes());
        hasher.update(part);
    }
    hex::encode(hasher.finalize())
}
