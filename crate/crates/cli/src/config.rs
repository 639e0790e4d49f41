//! The JSON run configuration shared by `bench`, `search` and `replay`.
//!
//! Only `seed` and `solver` are required. Relative paths are resolved
//! against the directory holding the config file.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use solsearch_core::bench_harness::Clock;
use solsearch_core::instance_model::load_instance_dir;
use solsearch_core::llm_client::Backend;
use solsearch_core::patcher::Patcher;
use solsearch_core::ref_solver::script::apply_script;
use solsearch_core::ref_solver::HeuristicConfig;
use solsearch_core::search_loop::{RunOptions, TargetError};
use solsearch_core::{
    CurriculumConfig, HermeticTarget, Instance, LlmConfig, PackageTarget, SearchConfig, SolverTarget,
};

use crate::gen::{generate, GenSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolverSpec {
    /// An external package described by its `solsearch.json`.
    Package { manifest: PathBuf },
    /// The in-process reference solver, searched through heuristic scripts.
    Hermetic {
        #[serde(default = "default_conflict_rate")]
        conflicts_per_second: f64,
        /// Script applied to the default heuristics before the search.
        #[serde(default)]
        heuristics: Option<PathBuf>,
    },
}

fn default_conflict_rate() -> f64 {
    10_000.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PoolSpec {
    /// Every `*.cnf` file in `path`.
    Dir { path: PathBuf },
    /// Generated into `path` before use; regeneration is byte-identical.
    Generate { path: PathBuf, spec: GenSpec },
}

impl Default for PoolSpec {
    fn default() -> Self {
        PoolSpec::Dir {
            path: PathBuf::from("instances"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Falls back to the curriculum's initial timeout.
    pub timeout_s: Option<f64>,
    /// Rows `Solved Ratio in t ≤ X` of table.csv.
    pub thresholds: Vec<f64>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            timeout_s: None,
            thresholds: vec![100.0, 300.0, 500.0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub solver: SolverSpec,
    #[serde(default)]
    pub pool: PoolSpec,
    #[serde(default)]
    pub curriculum: CurriculumConfig,
    #[serde(default)]
    pub search: SearchConfig,
    #[serde(default)]
    pub llm: LlmConfig,
    #[serde(default)]
    pub bench: BenchConfig,
    #[serde(default = "default_clock")]
    pub clock: Clock,
    #[serde(default)]
    pub mem_limit_mb: Option<u64>,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    /// Build cache; defaults to `<out_dir>/cache`.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
}

fn default_clock() -> Clock {
    Clock::Wall
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn absolutize(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn must_exist(p: &Path, what: &str) -> Result<()> {
    if !p.exists() {
        bail!("{what} {} does not exist", p.display());
    }
    Ok(())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads, resolves and validates a config file. `seed` overrides the
    /// file's seed.
    pub fn load(path: &Path, seed: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut cfg = Self::parse(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .map_or_else(|| PathBuf::from("."), Path::to_path_buf);
        let base = std::path::absolute(&base).unwrap_or(base);
        cfg.resolve(&base);
        if let Some(s) = seed {
            cfg.seed = s;
        }
        cfg.search.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    fn resolve(&mut self, base: &Path) {
        match &mut self.solver {
            SolverSpec::Package { manifest } => absolutize(base, manifest),
            SolverSpec::Hermetic { heuristics, .. } => {
                if let Some(h) = heuristics {
                    absolutize(base, h);
                }
            }
        }
        match &mut self.pool {
            PoolSpec::Dir { path } | PoolSpec::Generate { path, .. } => absolutize(base, path),
        }
        if let Backend::Replay { dir } | Backend::Record { dir } = &mut self.llm.backend {
            absolutize(base, dir);
        }
        absolutize(base, &mut self.out_dir);
        if let Some(c) = &mut self.cache_dir {
            absolutize(base, c);
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.solver {
            SolverSpec::Package { manifest } => must_exist(manifest, "solver manifest")?,
            SolverSpec::Hermetic {
                conflicts_per_second,
                heuristics,
            } => {
                if !(*conflicts_per_second > 0.0) {
                    bail!("conflicts_per_second must be positive");
                }
                if let Some(h) = heuristics {
                    must_exist(h, "heuristics script")?;
                }
            }
        }
        match &self.pool {
            PoolSpec::Dir { path } => must_exist(path, "instance directory")?,
            PoolSpec::Generate { spec, .. } => spec.validate()?,
        }
        if let Backend::Replay { dir } = &self.llm.backend {
            must_exist(dir, "recording directory")?;
        }
        self.curriculum.validate()?;
        if self.search.temperatures.iter().any(|t| !(0.0..=2.0).contains(t)) {
            bail!("temperatures must lie in [0, 2]");
        }
        if self.bench.thresholds.iter().any(|t| !(*t > 0.0)) {
            bail!("table thresholds must be positive");
        }
        if let Some(t) = self.bench.timeout_s {
            if !(t > 0.0) {
                bail!("bench timeout must be positive");
            }
        }
        Ok(())
    }

    pub fn cache_dir(&self) -> PathBuf {
        self.cache_dir.clone().unwrap_or_else(|| self.out_dir.join("cache"))
    }

    pub fn run_options(&self) -> RunOptions {
        RunOptions {
            clock: self.clock,
            mem_limit_mb: self.mem_limit_mb,
        }
    }

    /// Loads or generates the instance pool.
    pub fn load_pool(&self) -> Result<Vec<Instance>> {
        let pool = match &self.pool {
            PoolSpec::Dir { path } => load_instance_dir(path)?,
            PoolSpec::Generate { path, spec } => {
                generate(spec, path)?;
                load_instance_dir(path)?
            }
        };
        if pool.is_empty() {
            bail!("the instance pool is empty");
        }
        Ok(pool)
    }
}

/// Errors from building the configured solver.
#[derive(Debug)]
pub enum BuildFailure {
    /// The base solver does not build or lacks its patch points.
    Base(TargetError),
    Other(anyhow::Error),
}

/// Builds the configured base solver.
pub fn build_target(cfg: &RunConfig) -> Result<Arc<dyn SolverTarget>, BuildFailure> {
    match &cfg.solver {
        SolverSpec::Package { manifest } => {
            let root = manifest.parent().unwrap_or(Path::new("."));
            let patcher = Patcher::new(&cfg.cache_dir()).map_err(|e| BuildFailure::Other(e.into()))?;
            let target =
                PackageTarget::build_base(root, Arc::new(patcher), cfg.run_options()).map_err(BuildFailure::Base)?;
            Ok(Arc::new(target))
        }
        SolverSpec::Hermetic {
            conflicts_per_second,
            heuristics,
        } => {
            let mut hc = HeuristicConfig::default();
            if let Some(path) = heuristics {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))
                    .map_err(BuildFailure::Other)?;
                hc = apply_script(&hc, &text, None).map_err(|e| BuildFailure::Other(e.into()))?;
            }
            Ok(Arc::new(HermeticTarget::new(hc, *conflicts_per_second)))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_resolve_against_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("sub/pool")).unwrap();
        let path = dir.path().join("sub/cfg.json");
        std::fs::write(
            &path,
            r#"{"seed": 3, "solver": {"kind": "hermetic"}, "pool": {"kind": "dir", "path": "pool"}}"#,
        )
        .unwrap();
        let cfg = RunConfig::load(&path, None).unwrap();
        assert_eq!(
            cfg.pool,
            PoolSpec::Dir {
                path: dir.path().join("sub/pool")
            }
        );
        assert_eq!(cfg.out_dir, dir.path().join("sub/out"));
        assert_eq!(cfg.cache_dir(), dir.path().join("sub/out/cache"));
        assert_eq!(cfg.search.seed, 3);
        assert_eq!(cfg.bench.thresholds, [100.0, 300.0, 500.0]);
        assert_eq!(RunConfig::load(&path, Some(8)).unwrap().search.seed, 8);
    }

    #[test]
    fn generated_pools_round_trip_through_json() {
        let text = r#"{"seed": 0, "solver": {"kind": "hermetic"},
            "pool": {"kind": "generate", "path": "p", "spec": {"family": "pigeonhole", "pigeons": 3, "holes": 2, "count": 2, "seed": 0}}}"#;
        let cfg = RunConfig::parse(text).unwrap();
        let back = RunConfig::parse(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, back);
    }
}
