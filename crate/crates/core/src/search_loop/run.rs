//! The round driver: baseline, steps, curriculum updates, checkpoints and
//! resumption.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Instant;

use super::events::{
    effective_events, read_ledger, Event, EventLedger, LedgerLine, RunSet, LEDGER_FILE, LEDGER_SCHEMA_VERSION,
};
use super::report::{build_report, write_report, AdoptedPatch, Report, TrajectoryRow};
use super::smoke::{smoke_failure, smoke_suite, SmokeInstance};
use super::target::SolverTarget;
use super::{
    build_prompt, propose_candidates, rank_order, select_patch_point, Candidate, CandidateStatus, Checkpoint,
    PatchPoint, PointHistory, SearchConfig, SearchError, StopReason,
};
use crate::bench_harness::{default_workers, parallel_map, MetricSet};
use crate::curriculum::{advance, propose_initial, Curriculum, CurriculumConfig};
use crate::instance_model::rng::XorShift64Star;
use crate::instance_model::Instance;
use crate::llm_client::{LlmClient, LlmError, LlmResponse};

/// Longest feedback note kept per patch point, in lines.
const FEEDBACK_LINES: usize = 40;

#[derive(Debug, Clone)]
pub struct SearchSetup {
    pub config: SearchConfig,
    pub curriculum: CurriculumConfig,
    pub out_dir: PathBuf,
    pub resume: bool,
}

pub struct SearchState {
    pub incumbent: Arc<dyn SolverTarget>,
    pub base_id: String,
    pub curriculum: Curriculum,
    pub rounds_done: usize,
    pub step: u64,
    pub llm_calls: u64,
    pub history: BTreeMap<String, PointHistory>,
    /// Notes on the last failed attempts, fed into the next prompt.
    pub feedback: BTreeMap<String, String>,
    pub rr_turn: u64,
    /// Consecutive rounds without a promotion.
    pub streak: usize,
    pub incumbent_train: MetricSet,
    pub incumbent_test: MetricSet,
    pub baseline_train: MetricSet,
    pub baseline_test: MetricSet,
    pub trajectory: Vec<TrajectoryRow>,
    pub adopted: Vec<AdoptedPatch>,
    pub elapsed_before_s: f64,
}

pub struct Searcher {
    pub config: SearchConfig,
    pub curriculum_config: CurriculumConfig,
    client: LlmClient,
    ledger: EventLedger,
    smoke: Vec<SmokeInstance>,
    workers: usize,
}

fn tail_lines(text: &str, n: usize) -> String {
    let lines: Vec<&str> = text.lines().collect();
    lines[lines.len().saturating_sub(n)..].join("\n")
}

/// Scale-free gain of `m` over `inc`: solved fraction plus PAR-2 in units
/// of the penalty.
fn improvement(m: &MetricSet, inc: &MetricSet) -> f64 {
    let total = m.total.max(1) as f64;
    (m.solved as f64 - inc.solved as f64) / total + (inc.par2 - m.par2) / (2.0 * m.timeout_s)
}

fn panic_text(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "panic".to_string())
}

impl Searcher {
    pub fn new(
        config: SearchConfig,
        curriculum_config: CurriculumConfig,
        client: LlmClient,
        ledger: EventLedger,
        smoke: Vec<SmokeInstance>,
    ) -> Self {
        let workers = if config.workers == 0 {
            default_workers()
        } else {
            config.workers
        };
        Self {
            config,
            curriculum_config,
            client,
            ledger,
            smoke,
            workers,
        }
    }

    pub fn client(&self) -> &LlmClient {
        &self.client
    }

    pub fn ledger(&self) -> &EventLedger {
        &self.ledger
    }

    fn log(&self, event: Event) -> Result<u64, SearchError> {
        Ok(self.ledger.append(event)?)
    }

    /// Runs `target` on `instances` in parallel and logs every run.
    #[allow(clippy::too_many_arguments)]
    pub fn evaluate_set(
        &self,
        target: &dyn SolverTarget,
        instances: &[Instance],
        timeout_s: f64,
        set: RunSet,
        round: usize,
        step: u64,
        candidate_id: Option<&str>,
    ) -> Result<MetricSet, SearchError> {
        let seed = self.config.run_seed;
        let results = parallel_map(instances, self.workers, |i| target.run(i, timeout_s, seed));
        for r in &results {
            self.log(Event::Run {
                round,
                step,
                set,
                candidate_id: candidate_id.map(str::to_string),
                result: r.clone(),
            })?;
        }
        MetricSet::from_results(&results, timeout_s).map_err(|e| SearchError::Target(e.to_string()))
    }

    /// Builds, smoke-tests and benchmarks each candidate. Returns the
    /// evaluated ones in rank order and notes on the failures.
    #[allow(clippy::type_complexity)]
    pub fn evaluate_candidates(
        &self,
        st: &SearchState,
        cands: Vec<Candidate>,
        round: usize,
        step: u64,
    ) -> Result<(Vec<(Candidate, Arc<dyn SolverTarget>)>, Vec<String>), SearchError> {
        let mut ranked = Vec::new();
        let mut notes = Vec::new();
        for mut c in cands {
            let mut note = None;
            match st.incumbent.derive(&c.patch_point, &c.code) {
                Err(log) => {
                    c.status = CandidateStatus::CompileFailed;
                    let tail = tail_lines(&log, 20);
                    notes.push(format!("- a candidate failed to build:\n{tail}"));
                    note = Some(tail);
                }
                Ok(target) => {
                    let timeout = self.config.smoke_timeout_s;
                    let seed = self.config.run_seed;
                    let results = parallel_map(&self.smoke, self.workers, |s| target.run(&s.instance, timeout, seed));
                    let mut failures = Vec::new();
                    for (case, r) in self.smoke.iter().zip(&results) {
                        self.log(Event::Run {
                            round,
                            step,
                            set: RunSet::Smoke,
                            candidate_id: Some(c.id.clone()),
                            result: r.clone(),
                        })?;
                        failures.extend(smoke_failure(case, r));
                    }
                    if !failures.is_empty() {
                        c.status = CandidateStatus::WrongAnswer;
                        let text = failures.join("\n");
                        notes.push(format!("- a candidate gave wrong answers:\n{text}"));
                        note = Some(text);
                    } else {
                        let m = self.evaluate_set(
                            &*target,
                            &st.curriculum.train,
                            st.curriculum.timeout_s,
                            RunSet::Train,
                            round,
                            step,
                            Some(&c.id),
                        )?;
                        if m.wrong_answers > 0 {
                            c.status = CandidateStatus::WrongAnswer;
                            let text = format!("{} invalid models on the training set", m.wrong_answers);
                            notes.push(format!("- a candidate gave wrong answers: {text}"));
                            note = Some(text);
                        } else {
                            c.status = CandidateStatus::Evaluated;
                        }
                        c.metrics = Some(m);
                    }
                    if c.status == CandidateStatus::Evaluated {
                        ranked.push((c.clone(), target));
                    }
                }
            }
            self.log(Event::Candidate {
                round,
                step,
                candidate: c,
                note,
            })?;
        }
        ranked.sort_by(|a, b| rank_order(&a.0, &b.0));
        Ok((ranked, notes))
    }

    /// One search step on the current incumbent. Returns whether a
    /// candidate was promoted.
    pub fn step(&self, st: &mut SearchState) -> Result<bool, SearchError> {
        let cfg = &self.config;
        let step = st.step;
        st.step += 1;
        let round = st.rounds_done;
        let points: Vec<PatchPoint> = st
            .incumbent
            .patch_points()
            .iter()
            .filter(|p| cfg.patch_points.is_empty() || cfg.patch_points.contains(&p.name))
            .cloned()
            .collect();
        let mut rng = XorShift64Star::new(cfg.seed ^ (step + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let point = select_patch_point(&points, &st.history, &cfg.policy, st.rr_turn, &mut rng)?.clone();
        st.rr_turn += 1;
        self.log(Event::PointSelected {
            round,
            step,
            point: point.name.clone(),
        })?;

        let prompt = build_prompt(
            &point,
            &st.curriculum.summary(),
            st.feedback.get(&point.name).map(String::as_str),
        );
        let k = (cfg.k as u64).min(cfg.max_llm_calls.saturating_sub(st.llm_calls)) as usize;
        let parent = st.incumbent.id().to_string();
        let (cands, calls) = propose_candidates(&self.client, &prompt, k, &cfg.temperatures, &parent, &point.name)?;
        st.llm_calls += calls.len() as u64;
        let mut notes = Vec::new();
        for call in calls {
            if let Some(e) = &call.error {
                notes.push(format!("- a response was unusable: {e}"));
            }
            self.log(Event::LlmCall {
                round,
                step,
                prompt_hash: call.prompt_hash,
                temperature: call.temperature,
                model_name: call.model_name,
                finish_reason: call.finish_reason,
                response: call.response,
                error: call.error,
                from_ledger: call.from_ledger,
            })?;
        }
        for c in &cands {
            self.log(Event::Candidate {
                round,
                step,
                candidate: c.clone(),
                note: None,
            })?;
        }

        let (ranked, fail_notes) = self.evaluate_candidates(st, cands, round, step)?;
        notes.extend(fail_notes);
        let mut hist = st.history.get(&point.name).cloned().unwrap_or_default();
        hist.attempts += 1;
        let mut promoted = false;
        if let Some((best, target)) = ranked.into_iter().next() {
            let m = best.metrics.clone().expect("evaluated candidates carry metrics");
            let gain = improvement(&m, &st.incumbent_train);
            hist.total_improvement += gain;
            hist.best_improvement = if hist.attempts == 1 {
                gain
            } else {
                hist.best_improvement.max(gain)
            };
            if m.better_than(&st.incumbent_train) {
                let test = self.evaluate_set(
                    &*target,
                    &st.curriculum.test,
                    st.curriculum.timeout_s,
                    RunSet::Test,
                    round,
                    step,
                    Some(&best.id),
                )?;
                if cfg.promotion_guard && test.solved < st.incumbent_test.solved {
                    let reason = format!(
                        "test set regression: {} solved against {} for the incumbent",
                        test.solved, st.incumbent_test.solved
                    );
                    notes.push(format!("- the best candidate improved training but {reason}"));
                    self.log(Event::Rejected {
                        round,
                        step,
                        candidate_id: best.id.clone(),
                        reason,
                    })?;
                } else {
                    let patch = AdoptedPatch {
                        round,
                        step,
                        candidate_id: best.id.clone(),
                        point: point.name.clone(),
                        file: point.file.clone(),
                        from: parent.clone(),
                        to: target.id().to_string(),
                        old_code: point.reference_code.clone(),
                        new_code: best.code.clone(),
                    };
                    self.log(Event::Promotion {
                        round,
                        step,
                        candidate_id: best.id.clone(),
                        point: point.name.clone(),
                        from: patch.from.clone(),
                        to: patch.to.clone(),
                        train: m.clone(),
                        test: test.clone(),
                    })?;
                    st.adopted.push(patch);
                    st.incumbent = target;
                    st.incumbent_train = m;
                    st.incumbent_test = test;
                    hist.adoptions += 1;
                    promoted = true;
                }
            } else {
                let reason = format!(
                    "no improvement on the training set: {}/{} solved, PAR-2 {:.3} against {}/{}, {:.3}",
                    m.solved,
                    m.total,
                    m.par2,
                    st.incumbent_train.solved,
                    st.incumbent_train.total,
                    st.incumbent_train.par2
                );
                notes.push(format!("- the best candidate showed {reason}"));
                self.log(Event::Rejected {
                    round,
                    step,
                    candidate_id: best.id,
                    reason,
                })?;
            }
        }
        st.history.insert(point.name.clone(), hist);
        if promoted || notes.is_empty() {
            st.feedback.remove(&point.name);
        } else {
            st.feedback
                .insert(point.name.clone(), tail_lines(&notes.join("\n"), FEEDBACK_LINES));
        }
        Ok(promoted)
    }

    fn checkpoint(&self, st: &SearchState, elapsed_s: f64) -> Result<(), SearchError> {
        let cp = Checkpoint {
            rounds_done: st.rounds_done,
            step: st.step,
            llm_calls: st.llm_calls,
            curriculum: st.curriculum.snapshot(),
            adopted: st.adopted.clone(),
            history: st.history.clone(),
            feedback: st.feedback.clone(),
            rr_turn: st.rr_turn,
            streak: st.streak,
            incumbent_id: st.incumbent.id().to_string(),
            incumbent_train: st.incumbent_train.clone(),
            incumbent_test: st.incumbent_test.clone(),
            baseline_train: st.baseline_train.clone(),
            baseline_test: st.baseline_test.clone(),
            trajectory: st.trajectory.clone(),
            elapsed_s,
        };
        self.log(Event::Checkpoint {
            checkpoint: Box::new(cp),
        })?;
        Ok(())
    }

    fn trajectory_row(st: &SearchState, promoted: bool) -> TrajectoryRow {
        TrajectoryRow {
            round: st.rounds_done,
            timeout_s: st.incumbent_train.timeout_s,
            incumbent_id: st.incumbent.id().to_string(),
            train_solved: st.incumbent_train.solved,
            train_total: st.incumbent_train.total,
            train_par2: st.incumbent_train.par2,
            test_solved: st.incumbent_test.solved,
            test_total: st.incumbent_test.total,
            test_par2: st.incumbent_test.par2,
            promoted,
            llm_calls: st.llm_calls,
        }
    }

    /// Splits the pool, measures the base solver and logs the first
    /// checkpoint.
    pub fn start(&self, pool: &[Instance], base: Arc<dyn SolverTarget>) -> Result<SearchState, SearchError> {
        self.log(Event::SearchStarted {
            schema: LEDGER_SCHEMA_VERSION,
            config: self.config.clone(),
            model_name: self.client.config().model_name.clone(),
            base_id: base.id().to_string(),
        })?;
        let seed = self.config.run_seed;
        let probe = |insts: &[Instance], t: f64| {
            let results = parallel_map(insts, self.workers, |i| base.run(i, t, seed));
            for r in &results {
                let _ = self.ledger.append(Event::Run {
                    round: 0,
                    step: 0,
                    set: RunSet::Probe,
                    candidate_id: None,
                    result: r.clone(),
                });
            }
            results
        };
        let curriculum = propose_initial(pool, &probe, &self.curriculum_config, self.config.seed)?;
        self.log(Event::Curriculum {
            snapshot: curriculum.snapshot(),
        })?;
        let t = curriculum.timeout_s;
        let train = self.evaluate_set(&*base, &curriculum.train, t, RunSet::Train, 0, 0, None)?;
        let test = self.evaluate_set(&*base, &curriculum.test, t, RunSet::Test, 0, 0, None)?;
        self.log(Event::Baseline {
            solver_id: base.id().to_string(),
            train: train.clone(),
            test: test.clone(),
        })?;
        let mut st = SearchState {
            base_id: base.id().to_string(),
            incumbent: base,
            curriculum,
            rounds_done: 0,
            step: 0,
            llm_calls: 0,
            history: BTreeMap::new(),
            feedback: BTreeMap::new(),
            rr_turn: 0,
            streak: 0,
            incumbent_train: train.clone(),
            incumbent_test: test.clone(),
            baseline_train: train,
            baseline_test: test,
            trajectory: Vec::new(),
            adopted: Vec::new(),
            elapsed_before_s: 0.0,
        };
        st.trajectory.push(Self::trajectory_row(&st, false));
        self.checkpoint(&st, 0.0)?;
        Ok(st)
    }

    /// Rebuilds the state at the last checkpoint of `prior`. Responses the
    /// abandoned round already received are served again before the backend
    /// is asked.
    pub fn restore(
        &self,
        prior: &[LedgerLine],
        pool: &[Instance],
        base: Arc<dyn SolverTarget>,
    ) -> Result<SearchState, SearchError> {
        let eff = effective_events(prior);
        let (pos, cp_seq, cp) = eff
            .iter()
            .enumerate()
            .rev()
            .find_map(|(i, l)| match &l.event {
                Event::Checkpoint { checkpoint } => Some((i, l.seq, checkpoint.as_ref().clone())),
                _ => None,
            })
            .ok_or_else(|| SearchError::Resume("the ledger has no checkpoint; start a new search".into()))?;
        let base_id = eff
            .iter()
            .find_map(|l| match &l.event {
                Event::SearchStarted { base_id, .. } => Some(base_id.clone()),
                _ => None,
            })
            .unwrap_or_default();
        if base_id != base.id() {
            return Err(SearchError::Resume(format!(
                "the base solver changed: ledger has {base_id}, found {}",
                base.id()
            )));
        }
        for l in &eff[pos + 1..] {
            if let Event::LlmCall {
                prompt_hash,
                model_name,
                finish_reason: Some(finish_reason),
                response: Some(text),
                ..
            } = &l.event
            {
                self.client.preload(LlmResponse {
                    text: text.clone(),
                    model_name: model_name.clone(),
                    finish_reason: *finish_reason,
                    prompt_hash: prompt_hash.clone(),
                });
            }
        }
        let consumed = prior
            .iter()
            .filter(|l| {
                matches!(
                    &l.event,
                    Event::LlmCall {
                        response: Some(_),
                        from_ledger: false,
                        ..
                    }
                )
            })
            .count();
        self.client.set_canned_cursor(consumed);

        let mut incumbent = base;
        for patch in &cp.adopted {
            incumbent = incumbent.derive(&patch.point, &patch.new_code).map_err(|log| {
                SearchError::Resume(format!(
                    "rebuilding adopted patch {} failed:\n{log}",
                    patch.candidate_id
                ))
            })?;
            if incumbent.id() != patch.to {
                return Err(SearchError::Resume(format!(
                    "rebuilt solver {} does not match the recorded {}",
                    incumbent.id(),
                    patch.to
                )));
            }
        }
        let curriculum = Curriculum::restore(&cp.curriculum, pool).map_err(|e| SearchError::Resume(e.to_string()))?;
        self.log(Event::Resumed { after_seq: cp_seq })?;
        Ok(SearchState {
            incumbent,
            base_id,
            curriculum,
            rounds_done: cp.rounds_done,
            step: cp.step,
            llm_calls: cp.llm_calls,
            history: cp.history,
            feedback: cp.feedback,
            rr_turn: cp.rr_turn,
            streak: cp.streak,
            incumbent_train: cp.incumbent_train,
            incumbent_test: cp.incumbent_test,
            baseline_train: cp.baseline_train,
            baseline_test: cp.baseline_test,
            trajectory: cp.trajectory,
            adopted: cp.adopted,
            elapsed_before_s: cp.elapsed_s,
        })
    }

    pub fn stop_reason(&self, st: &SearchState, elapsed_s: f64) -> Option<StopReason> {
        let cfg = &self.config;
        if st.rounds_done >= cfg.max_rounds {
            Some(StopReason::MaxRounds)
        } else if st.llm_calls >= cfg.max_llm_calls {
            Some(StopReason::MaxLlmCalls)
        } else if cfg.max_wall_time_s.is_some_and(|w| elapsed_s >= w) {
            Some(StopReason::WallBudget)
        } else if cfg.patience > 0 && st.streak >= cfg.patience {
            Some(StopReason::Patience)
        } else {
            None
        }
    }

    /// Runs rounds until a stop condition holds. A round that errors or
    /// panics is logged and counted; the search goes on with the state as
    /// the failure left it.
    pub fn run_rounds(&self, st: &mut SearchState) -> Result<StopReason, SearchError> {
        let started = Instant::now();
        loop {
            let elapsed = st.elapsed_before_s + started.elapsed().as_secs_f64();
            if let Some(reason) = self.stop_reason(st, elapsed) {
                st.elapsed_before_s = elapsed;
                return Ok(reason);
            }
            let round = st.rounds_done;
            let prev_test = st.incumbent_test.clone();
            let timeout = st.curriculum.timeout_s;
            let outcome = catch_unwind(AssertUnwindSafe(|| -> Result<bool, SearchError> {
                let mut promoted = false;
                for _ in 0..self.config.steps_per_round.max(1) {
                    if st.llm_calls >= self.config.max_llm_calls {
                        break;
                    }
                    promoted |= self.step(st)?;
                }
                Ok(promoted)
            }));
            let mut promoted = false;
            match outcome {
                Ok(Ok(p)) => {
                    promoted = p;
                    let next = advance(&st.curriculum, &st.incumbent_test, &prev_test, &self.curriculum_config);
                    if next.timeout_s != timeout {
                        let inc = st.incumbent.clone();
                        let t = next.timeout_s;
                        st.incumbent_train =
                            self.evaluate_set(&*inc, &next.train, t, RunSet::Train, round, st.step, None)?;
                        st.incumbent_test =
                            self.evaluate_set(&*inc, &next.test, t, RunSet::Test, round, st.step, None)?;
                    }
                    self.log(Event::RoundEnd {
                        round,
                        timeout_s: timeout,
                        next_timeout_s: next.timeout_s,
                        incumbent_id: st.incumbent.id().to_string(),
                        train: st.incumbent_train.clone(),
                        test: st.incumbent_test.clone(),
                        promoted,
                    })?;
                    st.curriculum = next;
                }
                Ok(Err(e @ SearchError::Llm(LlmError::ReplayMiss(_)))) => return Err(e),
                Ok(Err(e)) => {
                    log::warn!("round {round} failed: {e}");
                    self.log(Event::RoundFailed {
                        round,
                        error: e.to_string(),
                    })?;
                    st.curriculum.round_index += 1;
                }
                Err(payload) => {
                    let error = panic_text(payload);
                    log::warn!("round {round} panicked: {error}");
                    self.log(Event::RoundFailed { round, error })?;
                    st.curriculum.round_index += 1;
                }
            }
            st.streak = if promoted { 0 } else { st.streak + 1 };
            st.rounds_done += 1;
            st.trajectory.push(Self::trajectory_row(st, promoted));
            self.log(Event::Curriculum {
                snapshot: st.curriculum.snapshot(),
            })?;
            self.checkpoint(st, st.elapsed_before_s + started.elapsed().as_secs_f64())?;
        }
    }
}

/// Runs a whole search into `setup.out_dir`: ledger, recordings mirror and
/// report files. With `setup.resume` it continues the ledger already there.
pub fn run_search(
    pool: &[Instance],
    base: Arc<dyn SolverTarget>,
    client: LlmClient,
    setup: &SearchSetup,
) -> Result<Report, SearchError> {
    let out = &setup.out_dir;
    std::fs::create_dir_all(out)?;
    let ledger_path = out.join(LEDGER_FILE);
    let prior = if ledger_path.exists() {
        read_ledger(&ledger_path)?
    } else {
        Vec::new()
    };
    if setup.resume && prior.is_empty() {
        return Err(SearchError::Resume(format!("no ledger at {}", ledger_path.display())));
    }
    if !setup.resume && !prior.is_empty() {
        return Err(SearchError::Resume(format!(
            "{} already holds a search; resume it or pick another directory",
            out.display()
        )));
    }
    let client = client.with_mirror(&out.join("recordings"))?;
    let config_json = serde_json::json!({"search": setup.config, "curriculum": setup.curriculum});
    std::fs::write(
        out.join("search_config.json"),
        serde_json::to_string_pretty(&config_json).expect("config serializes"),
    )?;
    let ledger = EventLedger::open(&ledger_path)?;
    let smoke = smoke_suite(&out.join("smoke"))?;
    let searcher = Searcher::new(setup.config.clone(), setup.curriculum.clone(), client, ledger, smoke);
    let mut st = if setup.resume {
        searcher.restore(&prior, pool, base)?
    } else {
        searcher.start(pool, base)?
    };
    let reason = searcher.run_rounds(&mut st)?;
    searcher.log(Event::SearchFinished {
        reason,
        rounds: st.rounds_done,
        llm_calls: st.llm_calls,
        final_id: st.incumbent.id().to_string(),
    })?;
    let lines = read_ledger(&ledger_path)?;
    let report = build_report(&st, reason, &searcher.client().config().model_name, &lines);
    write_report(out, &report)?;
    Ok(report)
}
