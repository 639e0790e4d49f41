//! Solvers the search can patch and run.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use thiserror::Error;

use crate::bench_harness::{
    execute_run, verify_claim, Claim, Clock, ExitKind, MemMechanism, PackageManifest, RunResult, RunSpec, SolverPackage,
};
use crate::instance_model::{Instance, SolveOutcome};
use crate::patcher::{scan_patch_points, sha256_hex, BuildStatus, PatchError, PatchPoint, Patcher, ScanError};
use crate::ref_solver::script::{apply_script, script_for_point};
use crate::ref_solver::{solve, Budget, HeuristicConfig};

/// A solver version the search can evaluate and derive candidates from.
pub trait SolverTarget: Send + Sync {
    /// Content identity of this version.
    fn id(&self) -> &str;
    /// Patch points with this version's code as `reference_code`.
    fn patch_points(&self) -> &[PatchPoint];
    /// This version with the body of `point` replaced by `code`. A build or
    /// parse failure is returned as its log.
    fn derive(&self, point: &str, code: &str) -> Result<Arc<dyn SolverTarget>, String>;
    fn run(&self, instance: &Instance, timeout_s: f64, seed: u64) -> RunResult;
}

#[derive(Debug, Error)]
pub enum TargetError {
    #[error(transparent)]
    Manifest(#[from] crate::bench_harness::ManifestError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error("building the base solver failed:\n{0}")]
    BaseBuild(String),
    #[error("manifest declares patch point `{0}` but the sources have no such region")]
    UndeclaredPoint(String),
}

/// How runs of a package are limited and scored.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunOptions {
    pub clock: Clock,
    pub mem_limit_mb: Option<u64>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            clock: Clock::Wall,
            mem_limit_mb: None,
        }
    }
}

/// An external solver package, built through the patcher's cache.
pub struct PackageTarget {
    id: String,
    source_dir: PathBuf,
    manifest: PackageManifest,
    points: Vec<PatchPoint>,
    package: Arc<SolverPackage>,
    patcher: Arc<Patcher>,
    options: RunOptions,
}

/// Fills behavior and language from the manifest and keeps only declared
/// points (all points when the manifest declares none).
fn merge_decls(manifest: &PackageManifest, scanned: Vec<PatchPoint>) -> Result<Vec<PatchPoint>, TargetError> {
    if manifest.patch_points.is_empty() {
        return Ok(scanned);
    }
    manifest
        .patch_points
        .iter()
        .map(|decl| {
            let mut p = scanned
                .iter()
                .find(|p| p.name == decl.name)
                .cloned()
                .ok_or_else(|| TargetError::UndeclaredPoint(decl.name.clone()))?;
            p.behavior_desc = decl.behavior.clone();
            if let Some(lang) = &decl.language {
                p.language_name = lang.clone();
            }
            Ok(p)
        })
        .collect()
}

impl PackageTarget {
    /// Copies and builds the package at `source_root`.
    pub fn build_base(source_root: &Path, patcher: Arc<Patcher>, options: RunOptions) -> Result<Self, TargetError> {
        let manifest = PackageManifest::load(source_root)?;
        let ws = patcher.materialize(source_root)?;
        let ws = patcher.build(&ws, &manifest.build_cmd, &manifest.binary);
        let binary = match &ws.build_status {
            BuildStatus::Built { binary } => binary.clone(),
            BuildStatus::Failed { log } => return Err(TargetError::BaseBuild(log.clone())),
            BuildStatus::Unbuilt => return Err(TargetError::BaseBuild("not built".into())),
        };
        let points = merge_decls(&manifest, scan_patch_points(&ws.dir)?)?;
        Self::assemble(ws.base_tree_hash, ws.dir, manifest, points, binary, patcher, options)
    }

    fn assemble(
        id: String,
        source_dir: PathBuf,
        manifest: PackageManifest,
        points: Vec<PatchPoint>,
        binary: PathBuf,
        patcher: Arc<Patcher>,
        options: RunOptions,
    ) -> Result<Self, TargetError> {
        let mut package = SolverPackage::new(&source_dir, &manifest)?;
        package.id = format!("{}@{}", manifest.id, &id[..12]);
        package.binary_path = Some(binary);
        Ok(Self {
            id,
            source_dir,
            manifest,
            points,
            package: Arc::new(package),
            patcher,
            options,
        })
    }

    pub fn source_dir(&self) -> &Path {
        &self.source_dir
    }

    pub fn package(&self) -> &SolverPackage {
        &self.package
    }
}

impl SolverTarget for PackageTarget {
    fn id(&self) -> &str {
        &self.id
    }

    fn patch_points(&self) -> &[PatchPoint] {
        &self.points
    }

    fn derive(&self, point: &str, code: &str) -> Result<Arc<dyn SolverTarget>, String> {
        let p = self
            .points
            .iter()
            .find(|p| p.name == point)
            .ok_or_else(|| format!("unknown patch point `{point}`"))?;
        let ws = self
            .patcher
            .splice(&self.source_dir, p, code)
            .map_err(|e| e.to_string())?;
        let ws = self.patcher.build(&ws, &self.manifest.build_cmd, &self.manifest.binary);
        let binary = match ws.build_status {
            BuildStatus::Built { binary } => binary,
            BuildStatus::Failed { log } => return Err(log),
            BuildStatus::Unbuilt => return Err("not built".into()),
        };
        let id = crate::patcher::tree_hash(&ws.dir).map_err(|e| e.to_string())?;
        let scanned = scan_patch_points(&ws.dir).map_err(|e| e.to_string())?;
        let mut points = merge_decls(&self.manifest, scanned).map_err(|e| e.to_string())?;
        for (new, old) in points.iter_mut().zip(&self.points) {
            new.history = old.history.clone();
        }
        let target = Self::assemble(
            id,
            ws.dir,
            self.manifest.clone(),
            points,
            binary,
            self.patcher.clone(),
            self.options,
        )
        .map_err(|e| e.to_string())?;
        Ok(Arc::new(target))
    }

    fn run(&self, instance: &Instance, timeout_s: f64, seed: u64) -> RunResult {
        match RunSpec::new(self.package.clone(), instance.clone(), timeout_s, seed) {
            Ok(spec) => execute_run(
                &spec
                    .with_clock(self.options.clock)
                    .with_mem_limit(self.options.mem_limit_mb),
            ),
            Err(e) => RunResult::crashed(&self.package.id, instance, timeout_s, seed, e.to_string()),
        }
    }
}

pub const HERMETIC_FILE: &str = "heuristics.conf";

/// The in-process reference solver. Candidates are heuristic scripts; a
/// script that does not parse or validate counts as a failed build. Time is
/// scored as conflicts / `conflicts_per_second`.
pub struct HermeticTarget {
    id: String,
    config: HeuristicConfig,
    points: Vec<PatchPoint>,
    conflicts_per_second: f64,
}

impl HermeticTarget {
    pub fn new(config: HeuristicConfig, conflicts_per_second: f64) -> Self {
        let decls = crate::ref_solver::package::point_decls();
        let points = decls
            .into_iter()
            .map(|d| PatchPoint {
                reference_code: script_for_point(&config, &d.name),
                name: d.name,
                file: HERMETIC_FILE.to_string(),
                line: 0,
                behavior_desc: d.behavior,
                language_name: "heuristic script (`key = value` lines)".to_string(),
                history: Default::default(),
            })
            .collect();
        let id = sha256_hex(&[crate::ref_solver::script::to_script(&config).as_bytes()]);
        Self {
            id,
            config,
            points,
            conflicts_per_second,
        }
    }

    pub fn config(&self) -> &HeuristicConfig {
        &self.config
    }
}

impl SolverTarget for HermeticTarget {
    fn id(&self) -> &str {
        &self.id
    }

    fn patch_points(&self) -> &[PatchPoint] {
        &self.points
    }

    fn derive(&self, point: &str, code: &str) -> Result<Arc<dyn SolverTarget>, String> {
        if !self.points.iter().any(|p| p.name == point) {
            return Err(format!("unknown patch point `{point}`"));
        }
        let config = apply_script(&self.config, code, Some(point)).map_err(|e| e.to_string())?;
        let mut next = HermeticTarget::new(config, self.conflicts_per_second);
        for (new, old) in next.points.iter_mut().zip(&self.points) {
            new.history = old.history.clone();
        }
        Ok(Arc::new(next))
    }

    fn run(&self, instance: &Instance, timeout_s: f64, seed: u64) -> RunResult {
        let max_conflicts = (timeout_s * self.conflicts_per_second).floor().max(1.0) as u64;
        let budget = Budget {
            max_conflicts: Some(max_conflicts),
            max_wall_s: None,
        };
        let (outcome, stats) = solve(&instance.formula, &self.config, budget, seed);
        let claim = match outcome {
            SolveOutcome::Sat { model } => Claim::Sat(model.to_literals()),
            SolveOutcome::Unsat => Claim::Unsat,
            SolveOutcome::Unknown { .. } => Claim::Unknown,
        };
        let exit_code = claim.exit_code();
        let (outcome, verified, wrong_answer) = verify_claim(instance, claim);
        RunResult {
            solver_id: format!("hermetic@{}", &self.id[..12]),
            instance: instance.name.clone(),
            instance_path: instance.path.clone(),
            timeout_s,
            seed,
            outcome,
            wall_time_s: stats.wall_time_s,
            scored_time_s: stats.conflicts as f64 / self.conflicts_per_second,
            verified,
            exit_kind: ExitKind::Normal,
            wrong_answer,
            mem_mechanism: MemMechanism::None,
            peak_mem_kb: None,
            conflicts: Some(stats.conflicts),
            exit_code: Some(exit_code),
            detail: None,
        }
    }
}
