use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// File name of the manifest at the root of a solver package.
pub const MANIFEST_FILE: &str = "solsearch.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchPointDecl {
    pub name: String,
    #[serde(default)]
    pub behavior: String,
    /// Language named in prompts; guessed from the file extension if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub language: Option<String>,
}

/// On-disk description of a solver package.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackageManifest {
    pub id: String,
    pub build_cmd: String,
    /// Placeholders: `{binary}`, `{instance}` (required, once), `{seed}`,
    /// `{timeout}`, `{max_conflicts}`, `{mem_limit_mb}`.
    pub run_cmd_template: String,
    /// Path of the built executable relative to the package root.
    pub binary: String,
    #[serde(default)]
    pub patch_points: Vec<PatchPointDecl>,
}

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("run_cmd_template must contain {{instance}} exactly once, found {0}")]
    InstancePlaceholder(usize),
    #[error("run_cmd_template does not split into words: {0:?}")]
    BadTemplate(String),
    #[error("empty field `{0}`")]
    Empty(&'static str),
}

impl PackageManifest {
    pub fn validate(&self) -> Result<(), ManifestError> {
        if self.id.trim().is_empty() {
            return Err(ManifestError::Empty("id"));
        }
        if self.binary.trim().is_empty() {
            return Err(ManifestError::Empty("binary"));
        }
        let count = self.run_cmd_template.matches("{instance}").count();
        if count != 1 {
            return Err(ManifestError::InstancePlaceholder(count));
        }
        match shlex::split(&self.run_cmd_template) {
            Some(words) if !words.is_empty() => Ok(()),
            _ => Err(ManifestError::BadTemplate(self.run_cmd_template.clone())),
        }
    }

    pub fn load(root: &Path) -> Result<Self, ManifestError> {
        let path = root.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|source| ManifestError::Io {
            path: path.clone(),
            source,
        })?;
        let manifest: Self = serde_json::from_str(&text).map_err(|source| ManifestError::Json { path, source })?;
        manifest.validate()?;
        Ok(manifest)
    }
}

/// A solver package at a concrete source root, optionally built.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverPackage {
    pub id: String,
    pub source_root: PathBuf,
    pub build_cmd: String,
    pub run_cmd_template: String,
    pub patch_points: Vec<String>,
    pub binary_path: Option<PathBuf>,
}

impl SolverPackage {
    pub fn new(source_root: &Path, manifest: &PackageManifest) -> Result<Self, ManifestError> {
        manifest.validate()?;
        Ok(Self {
            id: manifest.id.clone(),
            source_root: source_root.to_owned(),
            build_cmd: manifest.build_cmd.clone(),
            run_cmd_template: manifest.run_cmd_template.clone(),
            patch_points: manifest.patch_points.iter().map(|p| p.name.clone()).collect(),
            binary_path: None,
        })
    }

    /// A package around an already-built executable.
    pub fn prebuilt(id: &str, binary: &Path, run_cmd_template: &str) -> Result<Self, ManifestError> {
        let manifest = PackageManifest {
            id: id.to_string(),
            build_cmd: String::new(),
            run_cmd_template: run_cmd_template.to_string(),
            binary: binary.display().to_string(),
            patch_points: Vec::new(),
        };
        let mut pkg = Self::new(binary.parent().unwrap_or(Path::new(".")), &manifest)?;
        pkg.binary_path = Some(binary.to_owned());
        Ok(pkg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn manifest(template: &str) -> PackageManifest {
        PackageManifest {
            id: "s".into(),
            build_cmd: "make".into(),
            run_cmd_template: template.into(),
            binary: "s".into(),
            patch_points: vec![],
        }
    }

    #[test]
    fn instance_placeholder_must_appear_once() {
        assert!(manifest("{binary} {instance}").validate().is_ok());
        assert!(matches!(
            manifest("{binary}").validate(),
            Err(ManifestError::InstancePlaceholder(0))
        ));
        assert!(matches!(
            manifest("{binary} {instance} {instance}").validate(),
            Err(ManifestError::InstancePlaceholder(2))
        ));
        assert!(matches!(
            manifest("{binary} '{instance}").validate(),
            Err(ManifestError::BadTemplate(_))
        ));
    }

    #[test]
    fn manifest_json_round_trip() {
        let m = PackageManifest {
            patch_points: vec![PatchPointDecl {
                name: "inc_activity".into(),
                behavior: "bumps".into(),
                language: None,
            }],
            ..manifest("{binary} {instance}")
        };
        let text = serde_json::to_string(&m).unwrap();
        assert_eq!(serde_json::from_str::<PackageManifest>(&text).unwrap(), m);
    }
}
