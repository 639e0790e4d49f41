// Standalone driver for the reference CDCL solver.
//
// usage: solver [--max-conflicts N] [--seed S] [--time-limit SECONDS] INSTANCE.cnf
//
// Prints `c <stat> <value>` lines, then `s SATISFIABLE` / `s UNSATISFIABLE` /
// `s UNKNOWN`, and for SAT the model on `v` lines ending in 0. Exit code 10
// for SAT, 20 for UNSAT, 0 for UNKNOWN, 1 on usage or input errors.
#![allow(dead_code)]

mod config;
mod engine;
mod expr;
mod vsids;

use std::io::Write;
use std::process::exit;

use config::HeuristicConfig;
use engine::{Budget, SearchResult, Solver};

fn fail(msg: &str) -> ! {
    eprintln!("error: {msg}");
    exit(1)
}

fn read_dimacs(text: &str) -> (usize, Vec<Vec<i32>>) {
    let mut num_vars: Option<usize> = None;
    let mut clauses = Vec::new();
    let mut current = Vec::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('c') {
            continue;
        }
        if line.starts_with('%') {
            break;
        }
        if line.starts_with('p') {
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 || parts[1] != "cnf" {
                fail("bad header");
            }
            num_vars = Some(parts[2].parse().unwrap_or_else(|_| fail("bad header")));
            continue;
        }
        let n = num_vars.unwrap_or_else(|| fail("clause before header"));
        for tok in line.split_whitespace() {
            let lit: i32 = tok.parse().unwrap_or_else(|_| fail("bad literal"));
            if lit == 0 {
                clauses.push(std::mem::take(&mut current));
            } else if lit.unsigned_abs() as usize > n {
                fail("literal out of range");
            } else {
                current.push(lit);
            }
        }
    }
    if !current.is_empty() {
        clauses.push(current);
    }
    (num_vars.unwrap_or_else(|| fail("missing header")), clauses)
}

fn main() {
    let mut args = std::env::args().skip(1);
    let mut budget = Budget::default();
    let mut seed = 0u64;
    let mut path = None;
    while let Some(arg) = args.next() {
        let mut value = || args.next().unwrap_or_else(|| fail("missing option value"));
        match arg.as_str() {
            "--max-conflicts" => {
                let n: u64 = value().parse().unwrap_or_else(|_| fail("bad --max-conflicts"));
                budget.max_conflicts = (n > 0).then_some(n);
            }
            "--seed" => seed = value().parse().unwrap_or_else(|_| fail("bad --seed")),
            "--time-limit" => {
                let t: f64 = value().parse().unwrap_or_else(|_| fail("bad --time-limit"));
                budget.max_wall_s = (t > 0.0).then_some(t);
            }
            _ => path = Some(arg),
        }
    }
    let path = path.unwrap_or_else(|| fail("usage: solver [options] INSTANCE.cnf"));
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| fail(&e.to_string()));
    let (num_vars, clauses) = read_dimacs(&text);

    let mut solver = Solver::new(num_vars, &clauses, HeuristicConfig::default(), seed);
    let result = solver.solve(budget);
    let stats = solver.stats();

    let stdout = std::io::stdout();
    let mut out = std::io::BufWriter::new(stdout.lock());
    let _ = writeln!(out, "c conflicts {}", stats.conflicts);
    let _ = writeln!(out, "c decisions {}", stats.decisions);
    let _ = writeln!(out, "c propagations {}", stats.propagations);
    let _ = writeln!(out, "c restarts {}", stats.restarts);
    let _ = writeln!(out, "c learned_clauses {}", stats.learned_clauses);
    let code = match result {
        SearchResult::Sat(model) => {
            let _ = writeln!(out, "s SATISFIABLE");
            let lits: Vec<String> = model
                .iter()
                .enumerate()
                .map(|(i, &v)| if v { (i + 1).to_string() } else { format!("-{}", i + 1) })
                .collect();
            for chunk in lits.chunks(20) {
                let _ = writeln!(out, "v {}", chunk.join(" "));
            }
            let _ = writeln!(out, "v 0");
            10
        }
        SearchResult::Unsat => {
            let _ = writeln!(out, "s UNSATISFIABLE");
            20
        }
        SearchResult::Unknown => {
            let _ = writeln!(out, "s UNKNOWN");
            0
        }
    };
    let _ = out.flush();
    drop(out);
    exit(code)
}
