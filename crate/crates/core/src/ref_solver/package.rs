//! Exports the reference solver as a self-contained solver package: a
//! source tree with marked patch points, a manifest, and a build command
//! that needs only `rustc`.

use std::io;
use std::path::Path;

use crate::bench_harness::{PackageManifest, PatchPointDecl, MANIFEST_FILE};

pub const PACKAGE_ID: &str = "ref-cdcl";

const SOURCES: [(&str, &str); 5] = [
    ("src/main.rs", include_str!("../../ref_package/main.rs")),
    ("src/config.rs", include_str!("config.rs")),
    ("src/engine.rs", include_str!("engine.rs")),
    ("src/expr.rs", include_str!("expr.rs")),
    ("src/vsids.rs", include_str!("vsids.rs")),
];

/// Behavior contracts shown to the model for each hot-spot.
pub fn point_decls() -> Vec<PatchPointDecl> {
    let decl = |name: &str, behavior: &str| PatchPointDecl {
        name: name.to_string(),
        behavior: behavior.to_string(),
        language: Some("Rust".to_string()),
    };
    vec![
        decl(
            "inc_activity",
            "Increases activity by a fixed amount, checks for overflow, and rescales if needed. \
             Manages variable priorities within a priority queue.",
        ),
        decl(
            "decay_activity",
            "Runs once per conflict and decays all variable activities, here by growing the \
             bump increment.",
        ),
        decl(
            "restart_due",
            "Decides whether the search restarts now, given the conflicts since the last \
             restart and the current restart limit.",
        ),
        decl(
            "pick_phase",
            "Chooses the polarity assigned to a decision variable, using the saved phase when \
             phase saving is on.",
        ),
    ]
}

pub fn manifest() -> PackageManifest {
    PackageManifest {
        id: PACKAGE_ID.to_string(),
        build_cmd: "rustc --edition 2021 -O -o solver src/main.rs".to_string(),
        run_cmd_template: "{binary} --max-conflicts {max_conflicts} --seed {seed} {instance}".to_string(),
        binary: "solver".to_string(),
        patch_points: point_decls(),
    }
}

/// Writes the package into `dir` (created if missing).
pub fn export_package(dir: &Path) -> io::Result<()> {
    std::fs::create_dir_all(dir.join("src"))?;
    for (rel, text) in SOURCES {
        std::fs::write(dir.join(rel), text)?;
    }
    std::fs::write(dir.join(".solsearchignore"), "solver\n*.o\n*.pdb\n")?;
    let json = serde_json::to_string_pretty(&manifest()).map_err(io::Error::other)?;
    std::fs::write(dir.join(MANIFEST_FILE), json + "\n")
}
