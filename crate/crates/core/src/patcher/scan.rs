use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tree::{list_files, TreeError};

pub const BEGIN_MARKER: &str = "SOLSEARCH:BEGIN";
pub const END_MARKER: &str = "SOLSEARCH:END";

/// Per-point search statistics.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointHistory {
    pub attempts: u64,
    pub adoptions: u64,
    /// Sum of the improvements recorded for this point.
    pub total_improvement: f64,
    pub best_improvement: f64,
}

impl PointHistory {
    pub fn mean_improvement(&self) -> f64 {
        if self.attempts == 0 {
            0.0
        } else {
            self.total_improvement / self.attempts as f64
        }
    }
}

/// A marked, replaceable region of solver source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchPoint {
    pub name: String,
    /// Path relative to the source root, with `/` separators.
    pub file: String,
    /// 1-based line number of the BEGIN marker.
    pub line: usize,
    /// The lines strictly between the markers, each with its newline.
    pub reference_code: String,
    pub behavior_desc: String,
    pub language_name: String,
    pub history: PointHistory,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScanError {
    #[error("{file}:{line}: `{name}` has a BEGIN marker but no END")]
    Unclosed { file: String, line: usize, name: String },
    #[error("{file}:{line}: END marker for `{name}` without a matching BEGIN")]
    Unopened { file: String, line: usize, name: String },
    #[error("{file}:{line}: marker without a region name")]
    Unnamed { file: String, line: usize },
    #[error("{file}:{line}: BEGIN `{name}` nested inside `{outer}`")]
    Nested {
        file: String,
        line: usize,
        name: String,
        outer: String,
    },
    #[error("region `{name}` declared in both {first} and {second}")]
    Duplicate {
        name: String,
        first: String,
        second: String,
    },
    #[error("{0}")]
    Tree(String),
}

impl From<TreeError> for ScanError {
    fn from(e: TreeError) -> Self {
        ScanError::Tree(e.to_string())
    }
}

enum Marker<'a> {
    Begin(&'a str),
    End(&'a str),
}

/// Recognizes a marker anywhere on the line, so any comment leader works.
fn marker(line: &str) -> Option<Option<Marker<'_>>> {
    for (tag, begin) in [(BEGIN_MARKER, true), (END_MARKER, false)] {
        if let Some(pos) = line.find(tag) {
            let rest = &line[pos + tag.len()..];
            if !(rest.is_empty() || rest.starts_with(char::is_whitespace)) {
                continue;
            }
            let Some(name) = rest.split_whitespace().next() else {
                return Some(None);
            };
            return Some(Some(if begin { Marker::Begin(name) } else { Marker::End(name) }));
        }
    }
    None
}

pub fn language_for(file: &str) -> &'static str {
    match Path::new(file).extension().and_then(|e| e.to_str()) {
        Some("rs") => "Rust",
        Some("c" | "h") => "C",
        Some("cc" | "cpp" | "cxx" | "hpp" | "hh") => "C++",
        Some("py") => "Python",
        Some("java") => "Java",
        Some("go") => "Go",
        _ => "text",
    }
}

/// Regions in one file's text, in order of appearance.
pub fn scan_text(file: &str, text: &str) -> Result<Vec<PatchPoint>, ScanError> {
    let mut points = Vec::new();
    let mut open: Option<(String, usize, String)> = None;
    for (idx, line) in text.split_inclusive('\n').enumerate() {
        let line_no = idx + 1;
        match marker(line) {
            None => {
                if let Some((_, _, body)) = open.as_mut() {
                    body.push_str(line);
                }
            }
            Some(None) => {
                return Err(ScanError::Unnamed {
                    file: file.to_string(),
                    line: line_no,
                })
            }
            Some(Some(Marker::Begin(name))) => {
                if let Some((outer, _, _)) = &open {
                    return Err(ScanError::Nested {
                        file: file.to_string(),
                        line: line_no,
                        name: name.to_string(),
                        outer: outer.clone(),
                    });
                }
                open = Some((name.to_string(), line_no, String::new()));
            }
            Some(Some(Marker::End(name))) => match open.take() {
                Some((open_name, begin, body)) if open_name == name => points.push(PatchPoint {
                    name: open_name,
                    file: file.to_string(),
                    line: begin,
                    reference_code: body,
                    behavior_desc: String::new(),
                    language_name: language_for(file).to_string(),
                    history: PointHistory::default(),
                }),
                Some((open_name, begin, _)) => {
                    return Err(ScanError::Unclosed {
                        file: file.to_string(),
                        line: begin,
                        name: open_name,
                    })
                }
                None => {
                    return Err(ScanError::Unopened {
                        file: file.to_string(),
                        line: line_no,
                        name: name.to_string(),
                    })
                }
            },
        }
    }
    if let Some((name, line, _)) = open {
        return Err(ScanError::Unclosed {
            file: file.to_string(),
            line,
            name,
        });
    }
    Ok(points)
}

/// Every marked region under `root`, ordered by file path then position.
/// Ignored and non-UTF-8 files are skipped.
pub fn scan_patch_points(root: &Path) -> Result<Vec<PatchPoint>, ScanError> {
    let mut all: Vec<PatchPoint> = Vec::new();
    let mut seen: HashMap<String, String> = HashMap::new();
    for rel in list_files(root)? {
        let path: PathBuf = root.join(&rel);
        let Ok(text) = std::fs::read_to_string(&path) else {
            continue;
        };
        if !text.contains("SOLSEARCH:") {
            continue;
        }
        for point in scan_text(&rel, &text)? {
            if let Some(first) = seen.insert(point.name.clone(), rel.clone()) {
                return Err(ScanError::Duplicate {
                    name: point.name,
                    first,
                    second: rel,
                });
            }
            all.push(point);
        }
    }
    Ok(all)
}

/// Replaces the body of region `name` in `text`, keeping both marker lines.
/// A missing trailing newline on `code` is added.
pub fn splice_text(text: &str, name: &str, code: &str) -> Option<String> {
    let mut out = String::with_capacity(text.len() + code.len());
    let mut inside = false;
    let mut found = false;
    for line in text.split_inclusive('\n') {
        match marker(line) {
            Some(Some(Marker::Begin(n))) if n == name && !found => {
                out.push_str(line);
                out.push_str(code);
                if !code.is_empty() && !code.ends_with('\n') {
                    out.push('\n');
                }
                inside = true;
            }
            Some(Some(Marker::End(n))) if n == name && inside => {
                out.push_str(line);
                inside = false;
                found = true;
            }
            _ if inside => {}
            _ => out.push_str(line),
        }
    }
    (found && !inside).then_some(out)
}
