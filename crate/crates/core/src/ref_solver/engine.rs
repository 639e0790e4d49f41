//! Conflict-driven clause learning search.
//!
//! Two watched literals with blockers, first-UIP learning, phase saving,
//! restarts per [`RestartPolicy`], and a learned-clause database capped at
//! `max(4000, 2 * original clauses)` that evicts its lowest-activity clauses.
//!
//! This file is also compiled standalone inside the exported solver package.
//! The marked regions are the patch points `restart_due` and `pick_phase`.

use std::time::Instant;

use super::config::{luby, HeuristicConfig, RestartPolicy};
use super::expr::VarFeatures;
use super::vsids::VarOrder;

/// `2 * var + sign`, sign 1 meaning negated.
type Lit = u32;

const FALSE: u8 = 0;
const TRUE: u8 = 1;
const UNDEF: u8 = 2;

fn lit_from_dimacs(l: i32) -> Lit {
    ((l.unsigned_abs() - 1) << 1) | u32::from(l < 0)
}

fn lit_to_dimacs(l: Lit) -> i32 {
    let v = (l >> 1) as i32 + 1;
    if l & 1 == 1 {
        -v
    } else {
        v
    }
}

fn var_of(l: Lit) -> usize {
    (l >> 1) as usize
}

fn lit_value(assigns: &[u8], l: Lit) -> u8 {
    let v = assigns[var_of(l)];
    if v == UNDEF {
        UNDEF
    } else {
        v ^ (l & 1) as u8
    }
}

/// Limits on a single `solve` call. Conflict-only budgets are reproducible.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Budget {
    pub max_conflicts: Option<u64>,
    pub max_wall_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SearchResult {
    /// `model[v]` is the value of 0-based variable `v`.
    Sat(Vec<bool>),
    Unsat,
    /// Budget exhausted.
    Unknown,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchStats {
    pub conflicts: u64,
    pub decisions: u64,
    pub propagations: u64,
    pub restarts: u64,
    pub learned_clauses: u64,
}

#[derive(Debug, Clone)]
struct Clause {
    lits: Vec<Lit>,
    learnt: bool,
    activity: f64,
    deleted: bool,
}

#[derive(Debug, Clone, Copy)]
struct Watch {
    cref: usize,
    blocker: Lit,
}

/// Picks the variable with the highest score among those `eligible`; ties
/// go to the lowest index and NaN scores rank below everything.
pub fn best_by_score(num_vars: usize, eligible: impl Fn(usize) -> bool, score: impl Fn(usize) -> f64) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for v in (0..num_vars).filter(|&v| eligible(v)) {
        let s = score(v);
        let s = if s.is_nan() { f64::NEG_INFINITY } else { s };
        match best {
            Some((_, b)) if s <= b => {}
            _ => best = Some((v, s)),
        }
    }
    best.map(|(v, _)| v)
}

pub struct Solver {
    num_vars: usize,
    clauses: Vec<Clause>,
    watches: Vec<Vec<Watch>>,
    assigns: Vec<u8>,
    level: Vec<u32>,
    reason: Vec<Option<usize>>,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    order: VarOrder,
    saved_phase: Vec<bool>,
    initial_phase: Vec<bool>,
    last_bump: Vec<u64>,
    config: HeuristicConfig,
    seen: Vec<bool>,
    cla_inc: f64,
    max_learnts: usize,
    num_learnts: usize,
    restarts_scheduled: u64,
    conflicts_since_restart: u64,
    restart_limit: u64,
    ok: bool,
    stats: SearchStats,
    learned_log: Option<Vec<Vec<i32>>>,
    check_invariants: bool,
}

impl Solver {
    /// Loads `clauses` (DIMACS literals over `1..=num_vars`). A nonzero seed
    /// randomizes the initial phases; seed 0 starts every phase at false.
    pub fn new(num_vars: usize, clauses: &[Vec<i32>], config: HeuristicConfig, seed: u64) -> Self {
        let initial_phase = initial_phases(num_vars, seed);
        let mut s = Solver {
            num_vars,
            clauses: Vec::new(),
            watches: vec![Vec::new(); 2 * num_vars],
            assigns: vec![UNDEF; num_vars],
            level: vec![0; num_vars],
            reason: vec![None; num_vars],
            trail: Vec::with_capacity(num_vars),
            trail_lim: Vec::new(),
            qhead: 0,
            order: VarOrder::new(
                num_vars,
                config.bump_amount,
                config.decay_factor,
                config.rescale_threshold,
            ),
            saved_phase: initial_phase.clone(),
            initial_phase,
            last_bump: vec![0; num_vars],
            config,
            seen: vec![false; num_vars],
            cla_inc: 1.0,
            max_learnts: 4000.max(2 * clauses.len()),
            num_learnts: 0,
            restarts_scheduled: 0,
            conflicts_since_restart: 0,
            restart_limit: 0,
            ok: true,
            stats: SearchStats::default(),
            learned_log: None,
            check_invariants: false,
        };
        s.schedule_restart();

        let mut units = Vec::new();
        for clause in clauses {
            let mut lits: Vec<Lit> = clause.iter().map(|&l| lit_from_dimacs(l)).collect();
            lits.sort_unstable();
            lits.dedup();
            if lits.windows(2).any(|w| w[0] ^ 1 == w[1]) {
                continue;
            }
            match lits.len() {
                0 => s.ok = false,
                1 => units.push(lits[0]),
                _ => {
                    s.attach(lits, false);
                }
            }
        }
        for u in units {
            match lit_value(&s.assigns, u) {
                FALSE => s.ok = false,
                UNDEF => s.enqueue(u, None),
                _ => {}
            }
        }
        s
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    pub fn stats(&self) -> SearchStats {
        self.stats
    }

    pub fn order(&self) -> &VarOrder {
        &self.order
    }

    /// Keep a copy of every learned clause (DIMACS literals).
    #[allow(dead_code)]
    pub fn record_learned(&mut self) {
        self.learned_log = Some(Vec::new());
    }

    #[allow(dead_code)]
    pub fn learned_log(&self) -> Option<&[Vec<i32>]> {
        self.learned_log.as_deref()
    }

    /// Assert the propagation fixpoint before every decision.
    #[allow(dead_code)]
    pub fn set_invariant_checks(&mut self, on: bool) {
        self.check_invariants = on;
    }

    fn decision_level(&self) -> usize {
        self.trail_lim.len()
    }

    fn attach(&mut self, lits: Vec<Lit>, learnt: bool) -> usize {
        let cref = self.clauses.len();
        self.watches[(lits[0] ^ 1) as usize].push(Watch { cref, blocker: lits[1] });
        self.watches[(lits[1] ^ 1) as usize].push(Watch { cref, blocker: lits[0] });
        if learnt {
            self.num_learnts += 1;
        }
        self.clauses.push(Clause {
            lits,
            learnt,
            activity: 0.0,
            deleted: false,
        });
        cref
    }

    fn enqueue(&mut self, lit: Lit, reason: Option<usize>) {
        let v = var_of(lit);
        self.assigns[v] = u8::from(lit & 1 == 0);
        self.level[v] = self.decision_level() as u32;
        self.reason[v] = reason;
        self.trail.push(lit);
    }

    fn propagate(&mut self) -> Option<usize> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            self.stats.propagations += 1;
            let false_lit = p ^ 1;
            let mut ws = std::mem::take(&mut self.watches[p as usize]);
            let (mut i, mut j) = (0, 0);
            let mut conflict = None;
            while i < ws.len() {
                let w = ws[i];
                i += 1;
                if lit_value(&self.assigns, w.blocker) == TRUE {
                    ws[j] = w;
                    j += 1;
                    continue;
                }
                let clause = &mut self.clauses[w.cref];
                if clause.deleted {
                    continue;
                }
                let lits = &mut clause.lits;
                if lits[0] == false_lit {
                    lits.swap(0, 1);
                }
                let first = lits[0];
                let kept = Watch {
                    cref: w.cref,
                    blocker: first,
                };
                if first != w.blocker && lit_value(&self.assigns, first) == TRUE {
                    ws[j] = kept;
                    j += 1;
                    continue;
                }
                let mut moved = false;
                for k in 2..lits.len() {
                    if lit_value(&self.assigns, lits[k]) != FALSE {
                        lits.swap(1, k);
                        self.watches[(lits[1] ^ 1) as usize].push(kept);
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                ws[j] = kept;
                j += 1;
                if lit_value(&self.assigns, first) == FALSE {
                    conflict = Some(w.cref);
                    self.qhead = self.trail.len();
                    while i < ws.len() {
                        ws[j] = ws[i];
                        j += 1;
                        i += 1;
                    }
                } else {
                    self.enqueue(first, Some(w.cref));
                }
            }
            ws.truncate(j);
            self.watches[p as usize] = ws;
            if conflict.is_some() {
                return conflict;
            }
        }
        None
    }

    fn bump_var(&mut self, v: usize) {
        self.order.inc_activity(v);
        self.last_bump[v] = self.stats.conflicts;
    }

    fn bump_clause(&mut self, cref: usize) {
        let c = &mut self.clauses[cref];
        if !c.learnt {
            return;
        }
        c.activity += self.cla_inc;
        if c.activity > 1e20 {
            for c in self.clauses.iter_mut().filter(|c| c.learnt) {
                c.activity *= 1e-20;
            }
            self.cla_inc *= 1e-20;
        }
    }

    /// First-UIP analysis. Returns the learned clause, asserting literal
    /// first, and the backjump level.
    fn analyze(&mut self, mut confl: usize) -> (Vec<Lit>, usize) {
        let mut learnt: Vec<Lit> = vec![0];
        let mut pending = 0usize;
        let mut p: Option<Lit> = None;
        let mut index = self.trail.len();
        let current = self.decision_level() as u32;
        loop {
            self.bump_clause(confl);
            let start = usize::from(p.is_some());
            for k in start..self.clauses[confl].lits.len() {
                let q = self.clauses[confl].lits[k];
                let v = var_of(q);
                if !self.seen[v] && self.level[v] > 0 {
                    self.seen[v] = true;
                    self.bump_var(v);
                    if self.level[v] >= current {
                        pending += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                index -= 1;
                if self.seen[var_of(self.trail[index])] {
                    break;
                }
            }
            let pl = self.trail[index];
            self.seen[var_of(pl)] = false;
            pending -= 1;
            p = Some(pl);
            if pending == 0 {
                break;
            }
            confl = self.reason[var_of(pl)].expect("implied literal has a reason");
        }
        learnt[0] = p.expect("conflict involves the current level") ^ 1;
        for &l in &learnt[1..] {
            self.seen[var_of(l)] = false;
        }
        let mut backjump = 0;
        if learnt.len() > 1 {
            let mut max_i = 1;
            for k in 2..learnt.len() {
                if self.level[var_of(learnt[k])] > self.level[var_of(learnt[max_i])] {
                    max_i = k;
                }
            }
            learnt.swap(1, max_i);
            backjump = self.level[var_of(learnt[1])] as usize;
        }
        (learnt, backjump)
    }

    fn cancel_until(&mut self, level: usize) {
        if self.decision_level() <= level {
            return;
        }
        let lim = self.trail_lim[level];
        for k in (lim..self.trail.len()).rev() {
            let lit = self.trail[k];
            let v = var_of(lit);
            self.saved_phase[v] = lit & 1 == 0;
            self.assigns[v] = UNDEF;
            self.reason[v] = None;
            self.order.insert(v);
        }
        self.trail.truncate(lim);
        self.trail_lim.truncate(level);
        self.qhead = self.trail.len();
    }

    fn schedule_restart(&mut self) {
        let i = self.restarts_scheduled;
        self.restart_limit = match self.config.restart_policy {
            RestartPolicy::Luby { base } => base.saturating_mul(luby(i)),
            RestartPolicy::Geometric { base, factor } => {
                (base * factor.powf(i as f64)).min(u64::MAX as f64).max(1.0) as u64
            }
        };
        self.restarts_scheduled += 1;
        self.conflicts_since_restart = 0;
    }

    // SOLSEARCH:BEGIN restart_due
    /// True once the conflicts since the last restart reach the current
    /// limit of the restart schedule.
    fn restart_due(&self) -> bool {
        self.conflicts_since_restart >= self.restart_limit
    }
    // SOLSEARCH:END restart_due

    // SOLSEARCH:BEGIN pick_phase
    /// Polarity of the next decision on `var`: its saved phase with phase
    /// saving on, its initial phase otherwise.
    fn pick_phase(&self, var: usize) -> bool {
        if self.config.phase_saving {
            self.saved_phase[var]
        } else {
            self.initial_phase[var]
        }
    }
    // SOLSEARCH:END pick_phase

    fn features(&self, v: usize) -> VarFeatures {
        VarFeatures {
            activity: self.order.activity[v],
            saved_phase: self.saved_phase[v],
            conflicts_since_last_bump: self.stats.conflicts - self.last_bump[v],
            var_index: v + 1,
        }
    }

    /// Next decision variable (0-based), or `None` when none is left.
    pub fn pick_branch_var(&mut self) -> Option<usize> {
        if let Some(expr) = &self.config.score_expr {
            return best_by_score(
                self.num_vars,
                |v| self.assigns[v] == UNDEF,
                |v| expr.eval(&self.features(v)),
            );
        }
        while let Some(v) = self.order.pop() {
            if self.assigns[v] == UNDEF {
                return Some(v);
            }
        }
        None
    }

    /// Activity bump as applied during conflict analysis.
    #[allow(dead_code)]
    pub fn bump(&mut self, var: usize) {
        self.bump_var(var);
    }

    fn locked(&self, cref: usize) -> bool {
        let first = self.clauses[cref].lits[0];
        lit_value(&self.assigns, first) == TRUE && self.reason[var_of(first)] == Some(cref)
    }

    fn reduce_db(&mut self) {
        let mut candidates: Vec<usize> = (0..self.clauses.len())
            .filter(|&c| {
                let cl = &self.clauses[c];
                cl.learnt && !cl.deleted && !self.locked(c)
            })
            .collect();
        candidates.sort_by(|&a, &b| {
            self.clauses[a]
                .activity
                .total_cmp(&self.clauses[b].activity)
                .then(a.cmp(&b))
        });
        let target = self.max_learnts / 2;
        for cref in candidates {
            if self.num_learnts <= target {
                break;
            }
            let c = &mut self.clauses[cref];
            c.deleted = true;
            c.lits = Vec::new();
            self.num_learnts -= 1;
        }
        let clauses = &self.clauses;
        for ws in self.watches.iter_mut() {
            ws.retain(|w| !clauses[w.cref].deleted);
        }
    }

    /// After propagation reaches a fixpoint without conflict, no clause may be
    /// falsified or unit with its last literal unassigned.
    pub fn propagation_fixpoint_holds(&self) -> bool {
        self.clauses.iter().filter(|c| !c.deleted).all(|c| {
            let mut unassigned = 0;
            for &l in &c.lits {
                match lit_value(&self.assigns, l) {
                    TRUE => return true,
                    UNDEF => unassigned += 1,
                    _ => {}
                }
            }
            unassigned >= 2
        })
    }

    pub fn solve(&mut self, budget: Budget) -> SearchResult {
        let start = Instant::now();
        let out_of_time = |start: &Instant| {
            budget
                .max_wall_s
                .is_some_and(|limit| start.elapsed().as_secs_f64() >= limit)
        };
        if !self.ok {
            return SearchResult::Unsat;
        }
        loop {
            if let Some(confl) = self.propagate() {
                self.stats.conflicts += 1;
                self.conflicts_since_restart += 1;
                if self.decision_level() == 0 {
                    self.ok = false;
                    return SearchResult::Unsat;
                }
                let (learnt, backjump) = self.analyze(confl);
                self.cancel_until(backjump);
                if let Some(log) = self.learned_log.as_mut() {
                    log.push(learnt.iter().map(|&l| lit_to_dimacs(l)).collect());
                }
                self.stats.learned_clauses += 1;
                let asserting = learnt[0];
                if learnt.len() == 1 {
                    self.enqueue(asserting, None);
                } else {
                    let cref = self.attach(learnt, true);
                    self.bump_clause(cref);
                    self.enqueue(asserting, Some(cref));
                }
                self.order.decay_activity();
                self.cla_inc /= 0.999;
                let conflicts_spent = budget.max_conflicts.is_some_and(|m| self.stats.conflicts >= m);
                if conflicts_spent || out_of_time(&start) {
                    self.cancel_until(0);
                    return SearchResult::Unknown;
                }
            } else {
                if self.check_invariants {
                    assert!(
                        self.propagation_fixpoint_holds(),
                        "unit propagation left a unit or falsified clause"
                    );
                }
                if self.decision_level() > 0 && self.restart_due() {
                    self.stats.restarts += 1;
                    self.cancel_until(0);
                    self.schedule_restart();
                    continue;
                }
                if self.num_learnts > self.max_learnts {
                    self.reduce_db();
                }
                if self.stats.decisions % 256 == 255 && out_of_time(&start) {
                    self.cancel_until(0);
                    return SearchResult::Unknown;
                }
                match self.pick_branch_var() {
                    None => {
                        let model = self.assigns.iter().map(|&a| a == TRUE).collect();
                        return SearchResult::Sat(model);
                    }
                    Some(v) => {
                        self.stats.decisions += 1;
                        let phase = self.pick_phase(v);
                        self.trail_lim.push(self.trail.len());
                        self.enqueue(((v as u32) << 1) | u32::from(!phase), None);
                    }
                }
            }
        }
    }
}

fn initial_phases(num_vars: usize, seed: u64) -> Vec<bool> {
    if seed == 0 {
        return vec![false; num_vars];
    }
    let mut x = seed;
    (0..num_vars)
        .map(|_| {
            x ^= x << 13;
            x ^= x >> 7;
            x ^= x << 17;
            x & 1 == 1
        })
        .collect()
}
