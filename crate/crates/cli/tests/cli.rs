use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use solsearch_core::bench_harness::{par2, read_results};
use solsearch_core::search_loop::{read_ledger, Event, LEDGER_FILE};

fn solsearch(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_solsearch"))
        .args(args)
        .current_dir(cwd)
        .env_remove("DEEPSEEK_API_KEY")
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().to_string_lossy().into_owned(),
                std::fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn gen_is_byte_identical_for_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str, seed: &'static str| {
        [
            "gen",
            "--seed",
            seed,
            "--family",
            "random-ksat",
            "--n",
            "15",
            "--count",
            "12",
            "--out",
            out,
        ]
    };
    for (out, seed) in [("a", "5"), ("b", "5"), ("c", "6")] {
        let o = solsearch(&args(out, seed), dir.path());
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    }
    let (a, b, c) = (
        read_dir_sorted(&dir.path().join("a")),
        read_dir_sorted(&dir.path().join("b")),
        read_dir_sorted(&dir.path().join("c")),
    );
    assert_eq!(a, b);
    assert_ne!(a, c);
    let manifest: Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("a/gen_manifest.json")).unwrap()).unwrap();
    let files = manifest["files"].as_array().unwrap();
    assert_eq!(files.len(), 12);
    assert_eq!(a.iter().filter(|(n, _)| n.ends_with(".cnf")).count(), files.len());
    assert_eq!(files[3]["seed"], 8);
    assert_eq!(files[3]["params"]["m"], 64);
}

#[test]
fn gen_requires_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let o = solsearch(
        &[
            "gen",
            "--family",
            "pigeonhole",
            "--pigeons",
            "3",
            "--holes",
            "2",
            "--out",
            "p",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 2);
    assert!(!dir.path().join("p").exists());
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

const HERMETIC_POOL: &str = r#""solver": {"kind": "hermetic", "conflicts_per_second": 1000},
  "pool": {"kind": "generate", "path": "pool", "spec": {"family": "random_ksat", "n": 40, "count": 24, "seed": 3}}"#;

#[test]
fn bench_writes_table_rows_and_par2_from_the_raw_results() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "cfg.json",
        &format!(
            r#"{{ "seed": 1, {HERMETIC_POOL}, "bench": {{"timeout_s": 0.05, "thresholds": [0.01, 0.02, 0.05]}} }}"#
        ),
    );
    let o = solsearch(&["bench", "--config", "cfg.json"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = dir.path().join("out/bench");
    let table = std::fs::read_to_string(out.join("table.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 5, "{table}");
    assert!(rows[1].starts_with("Solved Ratio in t ≤ 0.01s,"));
    assert!(rows[4].starts_with("PAR-2,"));

    let results = read_results(&out.join("results.jsonl")).unwrap();
    assert_eq!(results.len(), 24);
    let metrics: Value = serde_json::from_slice(&std::fs::read(out.join("metrics.json")).unwrap()).unwrap();
    let logged = metrics[0]["metrics"]["par2"].as_f64().unwrap();
    assert_eq!(logged, par2(&results, 0.05).unwrap());
    let cactus = std::fs::read_to_string(out.join("cactus.csv")).unwrap();
    assert_eq!(
        cactus.lines().count() - 1,
        results.iter().filter(|r| r.is_solved()).count()
    );
}

#[test]
fn a_solver_solving_nothing_scores_twice_the_timeout() {
    let dir = tempfile::tempdir().unwrap();
    // One conflict per 100 s: no pigeonhole instance is refuted in time.
    write(
        dir.path(),
        "cfg.json",
        r#"{ "seed": 1, "solver": {"kind": "hermetic", "conflicts_per_second": 0.01},
             "pool": {"kind": "generate", "path": "php", "spec": {"family": "pigeonhole", "pigeons": 4, "holes": 3, "count": 4, "seed": 0}},
             "bench": {"timeout_s": 100} }"#,
    );
    let o = solsearch(&["bench", "--config", "cfg.json"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = std::fs::read_to_string(dir.path().join("out/bench/table.csv")).unwrap();
    assert!(table.contains("Solved Ratio in t ≤ 100s,0.0%"), "{table}");
    assert!(table.ends_with("PAR-2,200.00\n"), "{table}");
}

#[test]
fn an_empty_pool_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("empty")).unwrap();
    write(
        dir.path(),
        "cfg.json",
        r#"{ "seed": 1, "solver": {"kind": "hermetic"}, "pool": {"kind": "dir", "path": "empty"} }"#,
    );
    let o = solsearch(&["bench", "--config", "cfg.json"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("empty"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("pool")).unwrap();
    let cases = [
        r#"{ "solver": {"kind": "hermetic"}, "pool": {"kind": "dir", "path": "pool"} }"#,
        r#"{ "seed": 1, "pool": {"kind": "dir", "path": "pool"} }"#,
        r#"{ "seed": 1, "solver": {"kind": "hermetic"}, "pool": {"kind": "dir", "path": "pool"}, "typo": 1 }"#,
        r#"{ "seed": 1, "solver": {"kind": "package", "manifest": "nowhere/solsearch.json"}, "pool": {"kind": "dir", "path": "pool"} }"#,
        r#"{ "seed": 1, "solver": {"kind": "hermetic"}, "pool": {"kind": "dir", "path": "missing"} }"#,
        r#"{ "seed": 1, "solver": {"kind": "hermetic"}, "pool": {"kind": "dir", "path": "pool"}, "curriculum": {"escalation_factor": 0.5} }"#,
    ];
    for (i, text) in cases.iter().enumerate() {
        write(dir.path(), "cfg.json", text);
        let o = solsearch(&["search", "--config", "cfg.json"], dir.path());
        assert_eq!(code(&o), 2, "case {i}: {}", stderr(&o));
    }
}

#[test]
fn missing_api_key_fails_before_any_run() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "cfg.json", &format!(r#"{{ "seed": 1, {HERMETIC_POOL} }}"#));
    let o = solsearch(&["search", "--config", "cfg.json"], dir.path());
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("DEEPSEEK_API_KEY"));
    assert!(!dir.path().join("out").exists());
    assert!(!dir.path().join("pool").exists());
}

#[test]
fn a_package_that_does_not_build_has_no_baseline() {
    let dir = tempfile::tempdir().unwrap();
    let pkg = dir.path().join("pkg");
    std::fs::create_dir_all(pkg.join("src")).unwrap();
    write(&pkg, "src/main.c", "// SOLSEARCH:BEGIN f\nint f;\n// SOLSEARCH:END f\n");
    write(
        &pkg,
        "solsearch.json",
        r#"{"id": "broken", "build_cmd": "false", "run_cmd_template": "{binary} {instance}", "binary": "solver"}"#,
    );
    std::fs::create_dir(dir.path().join("pool")).unwrap();
    let o = solsearch(
        &[
            "gen",
            "--seed",
            "1",
            "--family",
            "random-ksat",
            "--n",
            "8",
            "--count",
            "4",
            "--out",
            "pool",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    write(
        dir.path(),
        "cfg.json",
        r#"{ "seed": 1, "solver": {"kind": "package", "manifest": "pkg/solsearch.json"}, "pool": {"kind": "dir", "path": "pool"},
             "llm": {"backend": {"kind": "canned", "responses": []}} }"#,
    );
    let o = solsearch(&["search", "--config", "cfg.json"], dir.path());
    assert_eq!(code(&o), 3, "{}", stderr(&o));
}

const RESPONSES: &str = r#"["```\ndecay_factor = 0.9\n```", "```\nbump_amount = 2.0\n```", "```\nrestart = luby 32\n```",
  "no code here", "```\nphase_saving = false\n```", "```\ndecay_factor = 0.85\n```", "```\nrestart = luby 128\n```",
  "```\nbump_amount = 0.5\n```"]"#;

fn search_config(dir: &Path, max_rounds: usize) {
    write(
        dir,
        "cfg.json",
        &format!(
            r#"{{ "seed": 4, {HERMETIC_POOL},
  "curriculum": {{"initial_timeout_s": 0.2, "max_timeout_s": 8.0, "probe_timeout_s": 0.2, "improvement_threshold": 0.0}},
  "search": {{"k": 2, "max_rounds": {max_rounds}, "patience": 10, "smoke_timeout_s": 1.0}},
  "llm": {{"backend": {{"kind": "canned", "responses": {RESPONSES}}}}} }}"#
        ),
    );
}

fn events(dir: &Path) -> Vec<Event> {
    read_ledger(&dir.join(LEDGER_FILE))
        .unwrap()
        .into_iter()
        .map(|l| l.event)
        .collect()
}

#[test]
fn search_then_replay_matches_and_the_report_audits_clean() {
    let dir = tempfile::tempdir().unwrap();
    search_config(dir.path(), 3);
    let o = solsearch(&["search", "--config", "cfg.json"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = dir.path().join("out");
    for f in [
        "ledger.jsonl",
        "report.json",
        "trajectory.csv",
        "adopted_patches.diff",
        "run_config.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }

    let o = solsearch(&["replay", "--dir", "out"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let verdict: Value =
        serde_json::from_slice(&std::fs::read(out.join("replay/replay_verdict.json")).unwrap()).unwrap();
    assert_eq!(verdict["ok"], true);
    let strip = |p: &Path| {
        let mut v: Value = serde_json::from_slice(&std::fs::read(p).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("stop_reason");
        v
    };
    assert_eq!(strip(&out.join("report.json")), strip(&out.join("replay/report.json")));

    let o = solsearch(&["report", "--search-dir", "out"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let mut report: Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    report["llm_calls"] = Value::from(999);
    std::fs::write(out.join("report.json"), report.to_string()).unwrap();
    let o = solsearch(&["report", "--search-dir", "out"], dir.path());
    assert_eq!(code(&o), 4);
    assert!(stderr(&o).contains("llm_calls"));
}

#[test]
fn replay_detects_tampered_code_and_missing_recordings() {
    let dir = tempfile::tempdir().unwrap();
    search_config(dir.path(), 2);
    let o = solsearch(&["search", "--config", "cfg.json"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ledger = dir.path().join("out").join(LEDGER_FILE);
    let original = std::fs::read_to_string(&ledger).unwrap();

    let mut done = false;
    let tampered: Vec<String> = original
        .lines()
        .map(|l| {
            if !done && l.contains(r#""event":"candidate""#) && l.contains("decay_factor = 0.9") {
                done = true;
                l.replace("decay_factor = 0.9", "decay_factor = 0.5")
            } else {
                l.to_string()
            }
        })
        .collect();
    assert!(done);
    let tampered = tampered.join("\n") + "\n";
    std::fs::write(&ledger, &tampered).unwrap();
    let o = solsearch(&["replay", "--dir", "out"], dir.path());
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(stderr(&o).contains("does not match its content"), "{}", stderr(&o));

    std::fs::write(&ledger, &original).unwrap();
    let rec = dir.path().join("out/recordings");
    let victim = std::fs::read_dir(&rec).unwrap().next().unwrap().unwrap().path();
    std::fs::remove_file(victim).unwrap();
    let o = solsearch(&["replay", "--dir", "out"], dir.path());
    assert_eq!(code(&o), 4, "{}", stderr(&o));
    assert!(stderr(&o).contains("no recorded response"), "{}", stderr(&o));
}

fn backend_calls(events: &[Event]) -> usize {
    events
        .iter()
        .filter(|e| {
            matches!(
                e,
                Event::LlmCall {
                    response: Some(_),
                    from_ledger: false,
                    ..
                }
            )
        })
        .count()
}

#[test]
fn resume_continues_without_repeating_model_calls() {
    let whole = tempfile::tempdir().unwrap();
    search_config(whole.path(), 3);
    let o = solsearch(&["search", "--config", "cfg.json"], whole.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let cut = tempfile::tempdir().unwrap();
    search_config(cut.path(), 3);
    let o = solsearch(&["search", "--config", "cfg.json"], cut.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // Simulate a crash in the middle of the second round.
    let ledger = cut.path().join("out").join(LEDGER_FILE);
    let text = std::fs::read_to_string(&ledger).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    let second_ckpt = lines
        .iter()
        .enumerate()
        .filter(|(_, l)| l.contains(r#""event":"checkpoint""#))
        .nth(1)
        .unwrap()
        .0;
    let keep = lines[..second_ckpt + 4].join("\n") + "\n";
    std::fs::write(&ledger, keep).unwrap();
    std::fs::remove_file(cut.path().join("out/report.json")).unwrap();

    let o = solsearch(&["search", "--config", "cfg.json", "--resume"], cut.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let (a, b) = (events(&whole.path().join("out")), events(&cut.path().join("out")));
    assert_eq!(backend_calls(&a), backend_calls(&b));
    let report = |d: &Path| -> Value {
        let mut v: Value = serde_json::from_slice(&std::fs::read(d.join("out/report.json")).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("stop_reason");
        v
    };
    let (ra, rb) = (report(whole.path()), report(cut.path()));
    assert_eq!(ra["promotions"], rb["promotions"]);
    assert_eq!(ra["final_id"], rb["final_id"]);
    assert_eq!(ra["llm_calls"], rb["llm_calls"]);
}

#[test]
fn resume_without_a_ledger_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    search_config(dir.path(), 1);
    let o = solsearch(&["search", "--config", "cfg.json", "--resume"], dir.path());
    assert_eq!(code(&o), 2, "{}", stderr(&o));
}

#[test]
fn the_global_seed_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    search_config(dir.path(), 1);
    let o = solsearch(&["--seed", "99", "search", "--config", "cfg.json"], dir.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let run: Value = serde_json::from_slice(&std::fs::read(dir.path().join("out/run_config.json")).unwrap()).unwrap();
    assert_eq!(run["seed"], 99);
    assert_eq!(run["search"]["seed"], 99);
}

#[test]
fn solve_uses_competition_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = solsearch(
        &[
            "gen",
            "--seed",
            "1",
            "--family",
            "pigeonhole",
            "--pigeons",
            "3",
            "--holes",
            "2",
            "--out",
            "php",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let o = solsearch(&["solve", "php/php-3-2.cnf"], dir.path());
    assert_eq!(code(&o), 20);
    assert!(String::from_utf8_lossy(&o.stdout).contains("s UNSATISFIABLE"));
    let o = solsearch(
        &[
            "gen",
            "--seed",
            "2",
            "--family",
            "random-ksat",
            "--n",
            "10",
            "--m",
            "20",
            "--out",
            "easy",
        ],
        dir.path(),
    );
    assert_eq!(code(&o), 0);
    let o = solsearch(&["solve", "easy/ksat-k3-n10-m20-0000.cnf"], dir.path());
    assert_eq!(code(&o), 10);
}
