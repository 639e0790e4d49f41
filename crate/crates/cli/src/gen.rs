//! Seeded instance pools written as DIMACS files plus a manifest.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use solsearch_core::instance_model::{gen_pigeonhole, gen_random_ksat, serialize_dimacs, CnfFormula};

pub const GEN_MANIFEST: &str = "gen_manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum Family {
    /// Uniform random k-SAT; `m` defaults to round(ratio · n).
    RandomKsat {
        n: usize,
        #[serde(default)]
        m: Option<usize>,
        #[serde(default = "default_ratio")]
        ratio: f64,
        #[serde(default = "default_k")]
        k: usize,
    },
    /// Instance i is PHP(pigeons + i, holes + i).
    Pigeonhole { pigeons: usize, holes: usize },
}

fn default_ratio() -> f64 {
    4.26
}

fn default_k() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenSpec {
    #[serde(flatten)]
    pub family: Family,
    pub count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenEntry {
    pub file: String,
    pub family: String,
    pub params: serde_json::Value,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenManifest {
    pub spec: GenSpec,
    pub files: Vec<GenEntry>,
}

impl GenSpec {
    pub fn validate(&self) -> Result<()> {
        if self.count == 0 {
            bail!("count must be at least 1");
        }
        if let Family::RandomKsat { ratio, m: None, .. } = self.family {
            if !(ratio > 0.0 && ratio.is_finite()) {
                bail!("ratio must be a positive number");
            }
        }
        Ok(())
    }

    /// (file name, family, params, seed, formula) of instance `i`.
    fn instance(&self, i: usize) -> Result<(String, &'static str, serde_json::Value, u64, CnfFormula)> {
        let seed = self.seed.wrapping_add(i as u64);
        Ok(match self.family {
            Family::RandomKsat { n, m, ratio, k } => {
                let m = m.unwrap_or_else(|| (ratio * n as f64).round() as usize);
                let f = gen_random_ksat(n, m, k, seed)?;
                (
                    format!("ksat-k{k}-n{n}-m{m}-{i:04}.cnf"),
                    "random_ksat",
                    serde_json::json!({ "n": n, "m": m, "k": k }),
                    seed,
                    f,
                )
            }
            Family::Pigeonhole { pigeons, holes } => {
                let (p, h) = (pigeons + i, holes + i);
                let f = gen_pigeonhole(p, h)?;
                (
                    format!("php-{p}-{h}.cnf"),
                    "pigeonhole",
                    serde_json::json!({ "pigeons": p, "holes": h }),
                    seed,
                    f,
                )
            }
        })
    }
}

/// Writes the instances of `spec` and `gen_manifest.json` into `dir`.
pub fn generate(spec: &GenSpec, dir: &Path) -> Result<GenManifest> {
    spec.validate()?;
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut files = Vec::with_capacity(spec.count);
    for i in 0..spec.count {
        let (file, family, params, seed, formula) = spec.instance(i)?;
        let path = dir.join(&file);
        std::fs::write(&path, serialize_dimacs(&formula)).with_context(|| format!("writing {}", path.display()))?;
        files.push(GenEntry {
            file,
            family: family.to_string(),
            params,
            seed,
        });
    }
    let manifest = GenManifest {
        spec: spec.clone(),
        files,
    };
    std::fs::write(dir.join(GEN_MANIFEST), serde_json::to_string_pretty(&manifest)? + "\n")?;
    Ok(manifest)
}
