use std::path::Path;

use proptest::prelude::*;

use super::*;

const SOLVER_RS: &str = "fn main() {}\n\
// SOLSEARCH:BEGIN bump\n\
fn bump(x: f64) -> f64 { x + 1.0 }\n\
// SOLSEARCH:END bump\n\
\n\
fn other() {}\n";

fn package(dir: &Path) {
    std::fs::create_dir_all(dir.join("src")).unwrap();
    std::fs::write(dir.join("src/solver.rs"), SOLVER_RS).unwrap();
    std::fs::write(dir.join("README"), "notes\n").unwrap();
    std::fs::write(dir.join(IGNORE_FILE), "target\n*.o\n").unwrap();
}

#[test]
fn scans_a_single_region() {
    let pts = scan_text("src/solver.rs", SOLVER_RS).unwrap();
    assert_eq!(pts.len(), 1);
    assert_eq!(pts[0].name, "bump");
    assert_eq!(pts[0].line, 2);
    assert_eq!(pts[0].reference_code, "fn bump(x: f64) -> f64 { x + 1.0 }\n");
    assert_eq!(pts[0].language_name, "Rust");
}

#[test]
fn malformed_markers_are_reported() {
    let unclosed = "// SOLSEARCH:BEGIN a\nx\n";
    assert!(matches!(
        scan_text("f.c", unclosed),
        Err(ScanError::Unclosed { line: 1, .. })
    ));
    let unopened = "x\n// SOLSEARCH:END a\n";
    assert!(matches!(
        scan_text("f.c", unopened),
        Err(ScanError::Unopened { line: 2, .. })
    ));
    let nested = "// SOLSEARCH:BEGIN a\n// SOLSEARCH:BEGIN b\n// SOLSEARCH:END b\n// SOLSEARCH:END a\n";
    assert!(matches!(scan_text("f.c", nested), Err(ScanError::Nested { .. })));
    assert!(matches!(
        scan_text("f.c", "# SOLSEARCH:BEGIN\n"),
        Err(ScanError::Unnamed { .. })
    ));
    let mismatched = "// SOLSEARCH:BEGIN a\n// SOLSEARCH:END b\n";
    assert!(matches!(scan_text("f.c", mismatched), Err(ScanError::Unclosed { .. })));
}

#[test]
fn duplicate_names_across_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    package(dir.path());
    std::fs::write(
        dir.path().join("src/more.rs"),
        "// SOLSEARCH:BEGIN bump\n// SOLSEARCH:END bump\n",
    )
    .unwrap();
    assert!(matches!(
        scan_patch_points(dir.path()),
        Err(ScanError::Duplicate { .. })
    ));
}

#[test]
fn ignored_files_do_not_affect_the_tree_hash() {
    let dir = tempfile::tempdir().unwrap();
    package(dir.path());
    let before = tree_hash(dir.path()).unwrap();
    std::fs::create_dir_all(dir.path().join("target/debug")).unwrap();
    std::fs::write(dir.path().join("target/debug/solver"), "binary").unwrap();
    std::fs::write(dir.path().join("src/x.o"), "obj").unwrap();
    assert_eq!(tree_hash(dir.path()).unwrap(), before);
    assert_eq!(
        list_files(dir.path()).unwrap(),
        [IGNORE_FILE, "README", "src/solver.rs"]
    );
    std::fs::write(dir.path().join("README"), "changed\n").unwrap();
    assert_ne!(tree_hash(dir.path()).unwrap(), before);
}

#[test]
fn splice_reads_back_and_leaves_the_rest_alone() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src-tree");
    package(&src);
    let patcher = Patcher::new(&dir.path().join("cache")).unwrap();
    let point = scan_patch_points(&src).unwrap().remove(0);
    let code = "fn bump(x: f64) -> f64 { x * 2.0 }";
    let ws = patcher.splice(&src, &point, code).unwrap();
    assert_eq!(ws.patch_point.as_deref(), Some("bump"));
    let again = scan_patch_points(&ws.dir).unwrap();
    assert_eq!(again[0].reference_code, format!("{code}\n"));
    assert_eq!(std::fs::read(ws.dir.join("README")).unwrap(), b"notes\n");
    // The source tree is untouched.
    assert_eq!(std::fs::read_to_string(src.join("src/solver.rs")).unwrap(), SOLVER_RS);

    let same = patcher.splice(&src, &point, code).unwrap();
    assert_eq!(same.dir, ws.dir);
    assert_eq!(same.key, ws.key);

    let identity = patcher.splice(&src, &point, &point.reference_code).unwrap();
    assert_eq!(tree_hash(&identity.dir).unwrap(), tree_hash(&src).unwrap());

    let missing = PatchPoint {
        name: "nope".into(),
        ..point
    };
    assert!(matches!(
        patcher.splice(&src, &missing, "x"),
        Err(PatchError::PointNotFound { .. })
    ));
}

#[test]
fn builds_are_cached_including_failures() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src-tree");
    package(&src);
    let cache = dir.path().join("cache");
    let patcher = Patcher::new(&cache).unwrap();
    let ws = patcher.materialize(&src).unwrap();
    assert_eq!(ws.build_status, BuildStatus::Unbuilt);

    let ok = "sh -c 'cat src/solver.rs > solver'";
    let built = patcher.build(&ws, ok, "solver");
    let binary = built.binary().unwrap().to_owned();
    assert_eq!(std::fs::read_to_string(&binary).unwrap(), SOLVER_RS);
    assert_eq!(patcher.build_invocations(), 1);
    assert_eq!(patcher.build(&ws, ok, "solver").build_status, built.build_status);
    assert_eq!(patcher.build_invocations(), 1);
    // The workspace itself holds no build products.
    assert!(!ws.dir.join("solver").exists());

    let point = scan_patch_points(&src).unwrap().remove(0);
    let bad = patcher.splice(&src, &point, "broken\n").unwrap();
    let fail = "sh -c 'echo boom >&2; exit 3'";
    let failed = patcher.build(&bad, fail, "solver");
    match &failed.build_status {
        BuildStatus::Failed { log } => {
            assert!(log.contains("boom"));
            assert!(log.contains("status 3"));
        }
        other => panic!("expected a failure, got {other:?}"),
    }
    patcher.build(&bad, fail, "solver");
    assert_eq!(patcher.build_invocations(), 2);

    // Outcomes persist for a new patcher on the same cache.
    let reopened = Patcher::new(&cache).unwrap();
    let ws2 = reopened.materialize(&src).unwrap();
    assert_eq!(ws2.build_status, built.build_status);
    reopened.build(&bad, fail, "solver");
    assert_eq!(reopened.build_invocations(), 0);
}

#[test]
fn build_without_the_binary_or_past_the_timeout_fails() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src-tree");
    package(&src);
    let patcher = Patcher::new(&dir.path().join("cache")).unwrap().with_build_timeout(0.5);
    let ws = patcher.materialize(&src).unwrap();
    let none = patcher.build(&ws, "true", "solver");
    assert!(matches!(&none.build_status, BuildStatus::Failed { log } if log.contains("produced no")));
    let point = scan_patch_points(&src).unwrap().remove(0);
    let slow = patcher.splice(&src, &point, "slow\n").unwrap();
    let timed = patcher.build(&slow, "sleep 5", "solver");
    assert!(matches!(&timed.build_status, BuildStatus::Failed { log } if log.contains("timed out")));
}

#[test]
fn normalize_code_keeps_one_trailing_newline() {
    assert_eq!(normalize_code("a\n\n\n"), "a\n");
    assert_eq!(normalize_code("a"), "a\n");
    assert_eq!(normalize_code("\n"), "");
}

fn code_strategy() -> impl Strategy<Value = String> {
    prop::collection::vec("[a-z0-9 (){};=+*.]{0,30}", 1..6).prop_map(|lines| lines.join("\n"))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn splice_changes_only_the_region(
        before in "[a-z \n]{0,40}",
        after in "[a-z \n]{0,40}",
        old in code_strategy(),
        new in code_strategy(),
    ) {
        let block = |code: &str| format!("// SOLSEARCH:BEGIN p\n{}// SOLSEARCH:END p\n", normalize_code(code));
        let sep = |s: &str| if s.is_empty() || s.ends_with('\n') { s.to_string() } else { format!("{s}\n") };
        let text = format!("{}{}{after}", sep(&before), block(&old));
        let spliced = splice_text(&text, "p", &normalize_code(&new)).unwrap();
        prop_assert_eq!(&spliced, &format!("{}{}{after}", sep(&before), block(&new)));
        let pts = scan_text("f.rs", &spliced).unwrap();
        prop_assert_eq!(&pts[0].reference_code, &normalize_code(&new));
        // Splicing the old code back restores the original text.
        prop_assert_eq!(splice_text(&spliced, "p", &normalize_code(&old)).unwrap(), text);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn workspace_keys_track_content(a in code_strategy(), b in code_strategy()) {
        use std::sync::OnceLock;
        static FIXTURE: OnceLock<(tempfile::TempDir, Patcher, PatchPoint)> = OnceLock::new();
        let (dir, patcher, point) = FIXTURE.get_or_init(|| {
            let dir = tempfile::tempdir().unwrap();
            package(&dir.path().join("src-tree"));
            let patcher = Patcher::new(&dir.path().join("cache")).unwrap();
            let point = scan_patch_points(&dir.path().join("src-tree")).unwrap().remove(0);
            (dir, patcher, point)
        });
        let src = dir.path().join("src-tree");
        let wa = patcher.splice(&src, point, &normalize_code(&a)).unwrap();
        let wb = patcher.splice(&src, point, &normalize_code(&b)).unwrap();
        prop_assert_eq!(wa.key == wb.key, normalize_code(&a) == normalize_code(&b));
        let read = |w: &Workspace| scan_patch_points(&w.dir).unwrap().remove(0).reference_code;
        prop_assert_eq!(read(&wa), normalize_code(&a));
        prop_assert_eq!(read(&wb), normalize_code(&b));
    }
}
