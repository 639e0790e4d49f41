//! Subcommands and their exit codes.

use std::fmt;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use solsearch_core::bench_harness::{default_workers, parallel_map, protocol, read_results, JsonlWriter, ResultRecord};
use solsearch_core::llm_client::{Backend, LlmError};
use solsearch_core::ref_solver::script::apply_script;
use solsearch_core::ref_solver::{self, Budget, HeuristicConfig};
use solsearch_core::search_loop::{
    audit_ledger, compare_ledgers, effective_events, read_ledger, Event, SearchError, LEDGER_FILE,
};
use solsearch_core::{Instance, LlmClient, MetricSet, Report, SearchSetup};

use crate::config::{build_target, BuildFailure, RunConfig};
use crate::gen::{generate, Family, GenSpec};
use crate::tables::{columns, render, table_rows, write_tables};

pub const EXIT_OK: i32 = 0;
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NO_BASELINE: i32 = 3;
pub const EXIT_DIVERGENCE: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "solsearch",
    version,
    about = "Search SAT solver heuristics with a language model"
)]
pub struct Cli {
    /// Seed for everything random; overrides the config file's.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Parallel solver runs (default: all cores but one).
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded pool of DIMACS instances.
    Gen(GenArgs),
    /// Run the configured solver over the pool and write metric tables.
    Bench(BenchArgs),
    /// Run the heuristic search.
    Search(SearchArgs),
    /// Re-run a finished search from its recorded model responses.
    Replay(ReplayArgs),
    /// Recompute tables from result files, or audit a search directory.
    Report(ReportArgs),
    /// Solve one instance with the in-process reference solver.
    Solve(SolveArgs),
    /// Write the reference solver as a patchable source package.
    ExportPackage(ExportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    RandomKsat,
    Pigeonhole,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub family: FamilyArg,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub m: Option<usize>,
    #[arg(long, default_value_t = 4.26)]
    pub ratio: f64,
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    #[arg(long)]
    pub pigeons: Option<usize>,
    #[arg(long)]
    pub holes: Option<usize>,
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Tabulate an existing results.jsonl instead of running the solver.
    #[arg(long)]
    pub results: Option<PathBuf>,
    #[arg(long)]
    pub timeout: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Continue the search recorded in the output directory.
    #[arg(long)]
    pub resume: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Output directory of the original search.
    #[arg(long)]
    pub dir: PathBuf,
    /// Where the replayed search is written (default: <dir>/replay).
    #[arg(long)]
    pub into: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long)]
    pub results: Vec<PathBuf>,
    #[arg(long, conflicts_with = "results")]
    pub search_dir: Option<PathBuf>,
    #[arg(long)]
    pub timeout: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub thresholds: Option<Vec<f64>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    pub instance: PathBuf,
    #[arg(long)]
    pub max_conflicts: Option<u64>,
    #[arg(long)]
    pub timeout: Option<f64>,
    /// Heuristic script applied to the default configuration.
    #[arg(long)]
    pub heuristics: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    pub dir: PathBuf,
}

#[derive(Debug)]
pub enum Failure {
    Runtime(anyhow::Error),
    Config(anyhow::Error),
    NoBaseline(anyhow::Error),
    Divergence(String),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Runtime(_) => EXIT_RUNTIME,
            Failure::Config(_) => EXIT_CONFIG,
            Failure::NoBaseline(_) => EXIT_NO_BASELINE,
            Failure::Divergence(_) => EXIT_DIVERGENCE,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Runtime(e) => write!(f, "{}", chain(e)),
            Failure::Config(e) => write!(f, "configuration: {}", chain(e)),
            Failure::NoBaseline(e) => write!(f, "no baseline: {}", chain(e)),
            Failure::Divergence(m) => write!(f, "divergence: {m}"),
        }
    }
}

/// The error and its causes, skipping causes whose message is already
/// part of the outer one.
fn chain(e: &anyhow::Error) -> String {
    let mut out = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if out.contains(&msg) {
            continue;
        }
        if !out.is_empty() {
            out.push_str(": ");
        }
        out.push_str(&msg);
    }
    out
}

fn runtime<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Runtime(e.into())
}

fn config<E: Into<anyhow::Error>>(e: E) -> Failure {
    Failure::Config(e.into())
}

type Outcome = Result<i32, Failure>;

/// Runs the parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    let res = match &cli.command {
        Command::Gen(a) => cmd_gen(a, &cli),
        Command::Bench(a) => cmd_bench(a, &cli),
        Command::Search(a) => cmd_search(a, &cli),
        Command::Replay(a) => cmd_replay(a, &cli),
        Command::Report(a) => cmd_report(a),
        Command::Solve(a) => cmd_solve(a, &cli),
        Command::ExportPackage(a) => cmd_export(a),
    };
    match res {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {f}");
            f.code()
        }
    }
}

fn cmd_gen(a: &GenArgs, cli: &Cli) -> Outcome {
    let seed = cli.seed.ok_or_else(|| config(anyhow!("gen needs --seed")))?;
    let family = match a.family {
        FamilyArg::RandomKsat => Family::RandomKsat {
            n: a.n.ok_or_else(|| config(anyhow!("random-ksat needs --n")))?,
            m: a.m,
            ratio: a.ratio,
            k: a.k,
        },
        FamilyArg::Pigeonhole => Family::Pigeonhole {
            pigeons: a.pigeons.ok_or_else(|| config(anyhow!("pigeonhole needs --pigeons")))?,
            holes: a.holes.ok_or_else(|| config(anyhow!("pigeonhole needs --holes")))?,
        },
    };
    let spec = GenSpec {
        family,
        count: a.count,
        seed,
    };
    spec.validate().map_err(Failure::Config)?;
    let manifest = generate(&spec, &a.out).map_err(Failure::Config)?;
    println!("wrote {} instances to {}", manifest.files.len(), a.out.display());
    Ok(EXIT_OK)
}

fn workers(cli: &Cli, configured: usize) -> usize {
    match cli.workers.unwrap_or(configured) {
        0 => default_workers(),
        n => n,
    }
}

fn build_failure(f: BuildFailure) -> Failure {
    match f {
        BuildFailure::Base(e) => Failure::NoBaseline(e.into()),
        BuildFailure::Other(e) => Failure::Config(e),
    }
}

const DEFAULT_THRESHOLDS: [f64; 3] = [100.0, 300.0, 500.0];

fn cmd_bench(a: &BenchArgs, cli: &Cli) -> Outcome {
    let cfg = a
        .config
        .as_deref()
        .map(|p| RunConfig::load(p, cli.seed))
        .transpose()
        .map_err(Failure::Config)?;
    let thresholds = a
        .thresholds
        .clone()
        .or_else(|| cfg.as_ref().map(|c| c.bench.thresholds.clone()))
        .unwrap_or_else(|| DEFAULT_THRESHOLDS.to_vec());
    let (results, timeout, out) = match (&a.results, &cfg) {
        (Some(path), _) => {
            let results = read_results(path).map_err(config)?;
            if results.is_empty() {
                return Err(config(anyhow!("{} holds no results", path.display())));
            }
            let out = a
                .out
                .clone()
                .unwrap_or_else(|| path.parent().unwrap_or(Path::new(".")).to_path_buf());
            (results, a.timeout, out)
        }
        (None, Some(cfg)) => {
            let timeout = a
                .timeout
                .or(cfg.bench.timeout_s)
                .unwrap_or(cfg.curriculum.initial_timeout_s);
            if !(timeout > 0.0) {
                return Err(config(anyhow!("timeout must be positive")));
            }
            let pool = cfg.load_pool().map_err(Failure::Config)?;
            let target = build_target(cfg).map_err(build_failure)?;
            info!("running {} on {} instances at {timeout} s", target.id(), pool.len());
            let results = parallel_map(&pool, workers(cli, cfg.search.workers), |i| {
                target.run(i, timeout, cfg.seed)
            });
            let out = a.out.clone().unwrap_or_else(|| cfg.out_dir.join("bench"));
            std::fs::create_dir_all(&out).map_err(runtime)?;
            let path = out.join("results.jsonl");
            if path.exists() {
                std::fs::remove_file(&path).map_err(runtime)?;
            }
            let w = JsonlWriter::append_to(&path).map_err(runtime)?;
            for r in &results {
                w.append(&ResultRecord::new(r.clone())).map_err(runtime)?;
            }
            (results, Some(timeout), out)
        }
        (None, None) => return Err(config(anyhow!("bench needs --config or --results"))),
    };
    let cols = columns(results, timeout);
    let rows = write_tables(&out, &cols, &thresholds).map_err(runtime)?;
    print!("{}", render(&rows));
    Ok(EXIT_OK)
}

fn search_failure(e: SearchError) -> Failure {
    match e {
        SearchError::Llm(LlmError::ReplayMiss(hash)) => {
            Failure::Divergence(format!("no recorded response for request {hash}"))
        }
        SearchError::Llm(e @ (LlmError::MissingApiKey(_) | LlmError::MissingDir(_))) => config(e),
        e @ SearchError::Resume(_) => config(e),
        e @ SearchError::NoPatchPoints => Failure::NoBaseline(e.into()),
        e => runtime(e),
    }
}

pub const RUN_CONFIG_FILE: &str = "run_config.json";

/// Checks the model client first, so a missing key fails before any run.
fn run_configured(cfg: &RunConfig, resume: bool) -> Result<Report, Failure> {
    let client = LlmClient::new(cfg.llm.clone()).map_err(config)?;
    let pool = cfg.load_pool().map_err(Failure::Config)?;
    let base = build_target(cfg).map_err(build_failure)?;
    std::fs::create_dir_all(&cfg.out_dir).map_err(runtime)?;
    let json = serde_json::to_string_pretty(cfg).map_err(runtime)?;
    std::fs::write(cfg.out_dir.join(RUN_CONFIG_FILE), json + "\n").map_err(runtime)?;
    let setup = SearchSetup {
        config: cfg.search.clone(),
        curriculum: cfg.curriculum.clone(),
        out_dir: cfg.out_dir.clone(),
        resume,
    };
    solsearch_core::run_search(&pool, base, client, &setup).map_err(search_failure)
}

fn metric_line(label: &str, m: &MetricSet) -> String {
    format!("{label}: {}/{} solved, PAR-2 {:.2}", m.solved, m.total, m.par2)
}

fn print_report(r: &Report) {
    println!(
        "stopped: {:?} after {} rounds and {} model calls",
        r.stop_reason, r.rounds, r.llm_calls
    );
    println!("{}", metric_line("baseline train", &r.baseline_train));
    println!("{}", metric_line("final train", &r.final_train));
    println!("{}", metric_line("baseline test", &r.baseline_test));
    println!("{}", metric_line("final test", &r.final_test));
    println!("promotions: {}", r.promotions.len());
    for p in &r.promotions {
        println!("  round {} {} -> {}", p.round, p.point, &p.to[..p.to.len().min(12)]);
    }
}

fn cmd_search(a: &SearchArgs, cli: &Cli) -> Outcome {
    let mut cfg = RunConfig::load(&a.config, cli.seed).map_err(Failure::Config)?;
    if let Some(w) = cli.workers {
        cfg.search.workers = w;
    }
    if let Some(out) = &a.out {
        cfg.out_dir = std::path::absolute(out).map_err(runtime)?;
    }
    let report = run_configured(&cfg, a.resume)?;
    print_report(&report);
    Ok(EXIT_OK)
}

fn cmd_replay(a: &ReplayArgs, cli: &Cli) -> Outcome {
    let path = a.dir.join(RUN_CONFIG_FILE);
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Config)?;
    let mut cfg = RunConfig::parse(&text).map_err(Failure::Config)?;
    let recordings = a.dir.join("recordings");
    if !recordings.is_dir() {
        return Err(config(anyhow!("{} has no recordings", a.dir.display())));
    }
    let original = read_ledger(&a.dir.join(LEDGER_FILE)).map_err(config)?;
    cfg.cache_dir = Some(cfg.cache_dir());
    cfg.llm.backend = Backend::Replay { dir: recordings };
    if let Some(s) = cli.seed {
        cfg.seed = s;
        cfg.search.seed = s;
    }
    if let Some(w) = cli.workers {
        cfg.search.workers = w;
    }
    let into = match &a.into {
        Some(d) => d.clone(),
        None => {
            let d = a.dir.join("replay");
            if d.exists() {
                std::fs::remove_dir_all(&d).map_err(runtime)?;
            }
            d
        }
    };
    cfg.out_dir = std::path::absolute(&into).map_err(runtime)?;
    let report = run_configured(&cfg, false)?;
    let replayed = read_ledger(&cfg.out_dir.join(LEDGER_FILE)).map_err(runtime)?;
    let verdict = compare_ledgers(&original, &replayed);
    let json = serde_json::json!({
        "ok": verdict.ok(),
        "promotions_match": verdict.promotions_match,
        "candidates_match": verdict.candidates_match,
        "integrity_ok": verdict.integrity_ok,
        "details": verdict.details,
        "promotions": report.promotions.len(),
    });
    let text = serde_json::to_string_pretty(&json).map_err(runtime)? + "\n";
    std::fs::write(cfg.out_dir.join("replay_verdict.json"), text).map_err(runtime)?;
    if verdict.ok() {
        println!("replay matches: {} promotions", report.promotions.len());
        Ok(EXIT_OK)
    } else {
        Err(Failure::Divergence(verdict.details.join("; ")))
    }
}

fn cmd_report(a: &ReportArgs) -> Outcome {
    if let Some(dir) = &a.search_dir {
        return report_search(dir);
    }
    if a.results.is_empty() {
        return Err(config(anyhow!("report needs --results or --search-dir")));
    }
    let mut all = Vec::new();
    for p in &a.results {
        all.extend(read_results(p).map_err(config)?);
    }
    if all.is_empty() {
        return Err(config(anyhow!("no results to report")));
    }
    let thresholds = a.thresholds.clone().unwrap_or_else(|| DEFAULT_THRESHOLDS.to_vec());
    let cols = columns(all, a.timeout);
    let rows = match &a.out {
        Some(out) => write_tables(out, &cols, &thresholds),
        None => table_rows(&cols, &thresholds),
    }
    .map_err(runtime)?;
    print!("{}", render(&rows));
    Ok(EXIT_OK)
}

/// Recomputes a search's summary from its ledger and checks report.json
/// against it.
fn report_search(dir: &Path) -> Outcome {
    let lines = read_ledger(&dir.join(LEDGER_FILE)).map_err(config)?;
    let path = dir.join("report.json");
    let text = std::fs::read_to_string(&path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Config)?;
    let report: Report = serde_json::from_str(&text).map_err(config)?;
    let audit = audit_ledger(&lines);
    let mut bad = audit.mismatches.clone();
    let mut check = |what: &str, same: bool| {
        if !same {
            bad.push(format!("report.json {what} differs from the ledger"));
        }
    };
    check("rounds", audit.rounds == report.rounds);
    check("llm_calls", audit.llm_calls == report.llm_calls);
    check("promotions", audit.promotions == report.promotions.len());
    check("base_id", audit.base_id.as_deref() == Some(report.base_id.as_str()));
    check("final_id", audit.final_id.as_deref() == Some(report.final_id.as_str()));
    check(
        "baseline_train",
        audit.baseline_train.as_ref() == Some(&report.baseline_train),
    );
    check(
        "baseline_test",
        audit.baseline_test.as_ref() == Some(&report.baseline_test),
    );
    let last_round = effective_events(&lines).into_iter().rev().find_map(|l| match &l.event {
        Event::RoundEnd { train, test, .. } => Some(Some((train.clone(), test.clone()))),
        Event::RoundFailed { .. } => Some(None),
        _ => None,
    });
    if let Some(Some((train, test))) = last_round {
        check("final_train", train == report.final_train);
        check("final_test", test == report.final_test);
    }
    let json = serde_json::json!({ "audit": audit, "mismatches": bad });
    let text = serde_json::to_string_pretty(&json).map_err(runtime)? + "\n";
    std::fs::write(dir.join("audit.json"), text).map_err(runtime)?;
    print_report(&report);
    if bad.is_empty() {
        println!("report.json agrees with the ledger");
        Ok(EXIT_OK)
    } else {
        Err(Failure::Divergence(bad.join("; ")))
    }
}

fn cmd_solve(a: &SolveArgs, cli: &Cli) -> Outcome {
    let instance = Instance::load(&a.instance).map_err(config)?;
    let mut hc = HeuristicConfig::default();
    if let Some(path) = &a.heuristics {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))
            .map_err(Failure::Config)?;
        hc = apply_script(&hc, &text, None).map_err(config)?;
    }
    let budget = Budget {
        max_conflicts: a.max_conflicts,
        max_wall_s: a.timeout,
    };
    let (outcome, stats) = ref_solver::solve(&instance.formula, &hc, budget, cli.seed.unwrap_or(0));
    let text = format!(
        "c conflicts {}\nc decisions {}\n{}",
        stats.conflicts,
        stats.decisions,
        protocol::format_output(&outcome)
    );
    // A reader that closed the pipe early is not an error.
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(runtime(e)),
        _ => Ok(protocol::exit_code(&outcome)),
    }
}

fn cmd_export(a: &ExportArgs) -> Outcome {
    ref_solver::package::export_package(&a.dir).map_err(runtime)?;
    println!("wrote the reference solver package to {}", a.dir.display());
    Ok(EXIT_OK)
}
