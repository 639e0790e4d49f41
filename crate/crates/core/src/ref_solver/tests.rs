use proptest::prelude::*;

use super::*;
use crate::instance_model::{brute_force_sat, evaluate, gen_pigeonhole, gen_random_ksat};

fn conflicts(n: u64) -> Budget {
    Budget {
        max_conflicts: Some(n),
        max_wall_s: None,
    }
}

fn f0() -> CnfFormula {
    CnfFormula::new(3, vec![vec![1, 3], vec![-2, 3]]).unwrap()
}

#[test]
fn complementary_units_are_unsat() {
    let f = CnfFormula::new(1, vec![vec![1], vec![-1]]).unwrap();
    let (outcome, _) = solve(&f, &HeuristicConfig::default(), conflicts(100), 0);
    assert_eq!(outcome, SolveOutcome::Unsat);
}

#[test]
fn example_formula_is_sat() {
    let (outcome, stats) = solve(&f0(), &HeuristicConfig::default(), conflicts(100), 0);
    let SolveOutcome::Sat { model } = outcome else {
        panic!("expected sat, got {outcome:?}");
    };
    assert!(evaluate(&f0(), &model).unwrap());
    assert!(stats.decisions >= stats.restarts);
}

#[test]
fn trivial_formulas() {
    let cfg = HeuristicConfig::default();
    let empty = CnfFormula::new(0, vec![]).unwrap();
    assert!(solve(&empty, &cfg, conflicts(1), 0).0.is_sat());
    let empty_clause = CnfFormula::new(2, vec![vec![1], vec![]]).unwrap();
    assert!(solve(&empty_clause, &cfg, conflicts(1), 0).0.is_unsat());
    let tautology = CnfFormula::new(1, vec![vec![1, -1]]).unwrap();
    assert!(solve(&tautology, &cfg, conflicts(1), 0).0.is_sat());
}

#[test]
fn agrees_with_brute_force_on_random_3sat() {
    let cfg = HeuristicConfig::default();
    for seed in 0..150u64 {
        let n = 3 + (seed % 16) as usize;
        let m = (4.26 * n as f64).round() as usize;
        let f = gen_random_ksat(n, m, 3, seed).unwrap();
        let expected = brute_force_sat(&f).unwrap();
        let (got, _) = solve(&f, &cfg, conflicts(1_000_000), seed);
        assert_eq!(got.answer(), expected.answer(), "seed {seed}");
        if let SolveOutcome::Sat { model } = got {
            assert!(evaluate(&f, &model).unwrap());
        }
    }
}

#[test]
fn pigeonhole_is_refuted() {
    for h in 1..=5 {
        let f = gen_pigeonhole(h + 1, h).unwrap();
        let (got, stats) = solve(&f, &HeuristicConfig::default(), conflicts(1_000_000), 0);
        assert!(got.is_unsat(), "php({}, {h})", h + 1);
        assert!(stats.decisions >= stats.restarts);
    }
}

#[test]
fn conflict_budget_runs_are_reproducible() {
    let f = gen_random_ksat(120, 511, 3, 5).unwrap();
    let cfg = HeuristicConfig::default();
    let (a, sa) = solve(&f, &cfg, conflicts(300), 9);
    let (b, sb) = solve(&f, &cfg, conflicts(300), 9);
    assert_eq!(a, b);
    assert_eq!(
        (
            sa.conflicts,
            sa.decisions,
            sa.propagations,
            sa.restarts,
            sa.learned_clauses
        ),
        (
            sb.conflicts,
            sb.decisions,
            sb.propagations,
            sb.restarts,
            sb.learned_clauses
        )
    );
}

#[test]
fn exhausted_budget_is_unknown_timeout() {
    let f = gen_pigeonhole(9, 8).unwrap();
    let (outcome, stats) = solve(&f, &HeuristicConfig::default(), conflicts(50), 0);
    assert_eq!(
        outcome,
        SolveOutcome::Unknown {
            reason: UnknownReason::Timeout
        }
    );
    assert_eq!(stats.conflicts, 50);
}

#[test]
fn wall_clock_budget_stops_the_search() {
    let f = gen_pigeonhole(11, 10).unwrap();
    let budget = Budget {
        max_conflicts: None,
        max_wall_s: Some(0.2),
    };
    let (outcome, stats) = solve(&f, &HeuristicConfig::default(), budget, 0);
    assert!(matches!(outcome, SolveOutcome::Unknown { .. }));
    assert!(stats.wall_time_s < 2.0);
}

#[test]
fn alternative_restart_and_phase_settings_stay_sound() {
    let configs = [
        HeuristicConfig {
            restart_policy: RestartPolicy::Geometric {
                base: 10.0,
                factor: 1.3,
            },
            ..HeuristicConfig::default()
        },
        HeuristicConfig {
            phase_saving: false,
            decay_factor: 0.8,
            ..HeuristicConfig::default()
        },
        HeuristicConfig {
            score_expr: Some(parse_heuristic_expr("activity / (1 + conflicts_since_last_bump)").unwrap()),
            ..HeuristicConfig::default()
        },
    ];
    for cfg in &configs {
        for seed in 0..40u64 {
            let f = gen_random_ksat(14, 60, 3, 1000 + seed).unwrap();
            let expected = brute_force_sat(&f).unwrap().answer();
            let (got, _) = solve(&f, cfg, conflicts(1_000_000), seed);
            assert_eq!(got.answer(), expected);
        }
    }
}

#[test]
fn propagation_reaches_a_complete_fixpoint() {
    for seed in 0..30u64 {
        let f = gen_random_ksat(40, 170, 3, seed).unwrap();
        let mut s = Solver::new(f.num_vars(), f.clauses(), HeuristicConfig::default(), seed);
        s.set_invariant_checks(true);
        s.solve(conflicts(2000));
    }
}

#[test]
fn learned_clauses_are_implied_by_the_formula() {
    for seed in 0..25u64 {
        let f = gen_random_ksat(12, 55, 3, 77 + seed).unwrap();
        let mut s = Solver::new(f.num_vars(), f.clauses(), HeuristicConfig::default(), seed);
        s.record_learned();
        s.solve(conflicts(10_000));
        for clause in s.learned_log().unwrap() {
            // F implies C iff F with every literal of C negated is UNSAT.
            let mut g = f.clone();
            for &lit in clause {
                g = g.with_clause(vec![-lit]).unwrap();
            }
            assert!(brute_force_sat(&g).unwrap().is_unsat(), "seed {seed}: {clause:?}");
        }
    }
}

#[test]
fn bump_below_threshold_adds_the_increment() {
    let mut order = VarOrder::new(1, 1.0, 0.95, 1e100);
    order.inc_activity(0);
    assert_eq!(order.activity, vec![1.0]);
    assert_eq!(order.var_inc, 1.0);
}

#[test]
fn bump_past_threshold_rescales_everything() {
    let threshold = 1e100;
    let mut order = VarOrder::new(3, 1.0, 0.95, threshold);
    order.activity = vec![threshold - 1e85, 5.0, 2.0];
    order.var_inc = 1e86;
    order.inc_activity(0);
    let bumped = threshold - 1e85 + 1e86;
    assert_eq!(order.activity[0], bumped * (1.0 / threshold));
    assert_eq!(order.activity[1], 5.0 * (1.0 / threshold));
    assert_eq!(order.activity[2], 2.0 * (1.0 / threshold));
    assert_eq!(order.var_inc, 1e86 * (1.0 / threshold));
    assert!(order.activity[0] > order.activity[1] && order.activity[1] > order.activity[2]);
}

#[test]
fn decay_grows_the_increment() {
    let mut order = VarOrder::new(2, 1.0, 0.5, 1e100);
    order.decay_activity();
    order.inc_activity(1);
    assert_eq!(order.activity, vec![0.0, 2.0]);
}

#[test]
fn repeated_bumps_make_the_variable_the_next_decision() {
    let f = gen_random_ksat(6, 10, 3, 3).unwrap();
    let mut s = Solver::new(f.num_vars(), f.clauses(), HeuristicConfig::default(), 0);
    for _ in 0..5 {
        s.bump(2);
    }
    let act = &s.order().activity;
    assert!(act.iter().enumerate().all(|(v, &a)| v == 2 || a < act[2]));
    assert_eq!(s.pick_branch_var(), Some(2));
}

#[test]
fn decide_next_ties_and_assignment() {
    let cfg = HeuristicConfig::default();
    let unassigned = |activity: f64| VarState {
        activity,
        ..VarState::default()
    };
    let vars = [unassigned(2.0), unassigned(5.0), unassigned(5.0)];
    assert_eq!(decide_next(&vars, &cfg), Some(2));

    let all_assigned = [VarState {
        assigned: true,
        ..VarState::default()
    }; 3];
    assert_eq!(decide_next(&all_assigned, &cfg), None);

    let argmin = HeuristicConfig {
        score_expr: Some(parse_heuristic_expr("neg(activity)").unwrap()),
        ..cfg
    };
    assert_eq!(decide_next(&vars, &argmin), Some(1));
}

#[test]
fn identity_expression_reproduces_default_ordering() {
    let with_expr = HeuristicConfig {
        score_expr: Some(parse_heuristic_expr("activity").unwrap()),
        ..HeuristicConfig::default()
    };
    for seed in 0..20u64 {
        let f = gen_random_ksat(60, 256, 3, seed).unwrap();
        let (a, sa) = solve(&f, &HeuristicConfig::default(), conflicts(400), seed);
        let (b, sb) = solve(&f, &with_expr, conflicts(400), seed);
        assert_eq!(a, b);
        assert_eq!(
            (sa.conflicts, sa.decisions, sa.propagations),
            (sb.conflicts, sb.decisions, sb.propagations)
        );
    }
}

#[test]
fn constant_score_decides_in_ascending_index_order() {
    let constant = HeuristicConfig {
        score_expr: Some(parse_heuristic_expr("0").unwrap()),
        ..HeuristicConfig::default()
    };
    let lowest_index = HeuristicConfig {
        score_expr: Some(parse_heuristic_expr("neg(var_index)").unwrap()),
        ..HeuristicConfig::default()
    };
    for seed in 0..10u64 {
        let f = gen_random_ksat(40, 170, 3, seed).unwrap();
        let (a, sa) = solve(&f, &constant, conflicts(300), 0);
        let (b, sb) = solve(&f, &lowest_index, conflicts(300), 0);
        assert_eq!(a, b);
        assert_eq!((sa.conflicts, sa.decisions), (sb.conflicts, sb.decisions));
    }
    let f = CnfFormula::new(4, vec![vec![1, 2, 3, 4]]).unwrap();
    let mut s = Solver::new(4, f.clauses(), constant, 0);
    assert_eq!(s.pick_branch_var(), Some(0));
}

#[test]
fn expression_parsing() {
    use HeuristicExpr::*;
    let e = parse_heuristic_expr("activity + 0.5*saved_phase").unwrap();
    assert_eq!(
        e,
        Binary(
            BinOp::Add,
            Box::new(Feature(super::Feature::Activity)),
            Box::new(Binary(
                BinOp::Mul,
                Box::new(Const(0.5)),
                Box::new(Feature(super::Feature::SavedPhase))
            ))
        )
    );
    assert_eq!(parse_heuristic_expr(&e.to_string()).unwrap(), e);
    assert_eq!(
        parse_heuristic_expr("-activity").unwrap(),
        Neg(Box::new(Feature(super::Feature::Activity)))
    );
    assert_eq!(parse_heuristic_expr("-2").unwrap(), Const(-2.0));
    assert_eq!(
        parse_heuristic_expr("max(1, min(2, var_index))")
            .unwrap()
            .eval(&VarFeatures {
                var_index: 7,
                ..VarFeatures::default()
            }),
        2.0
    );
    assert_eq!(
        parse_heuristic_expr("1 - 2 - 3").unwrap().eval(&VarFeatures::default()),
        -4.0
    );
    assert_eq!(
        parse_heuristic_expr("activity / 0")
            .unwrap()
            .eval(&VarFeatures::default()),
        0.0
    );
}

#[test]
fn expression_errors() {
    assert_eq!(parse_heuristic_expr(""), Err(ExprError::Empty));
    assert_eq!(parse_heuristic_expr("   "), Err(ExprError::Empty));
    assert_eq!(parse_heuristic_expr("(activity"), Err(ExprError::UnbalancedParens));
    assert_eq!(parse_heuristic_expr("activity)"), Err(ExprError::UnbalancedParens));
    assert_eq!(
        parse_heuristic_expr("velocity * 2"),
        Err(ExprError::UnknownIdentifier("velocity".into()))
    );
    assert!(parse_heuristic_expr("activity +").is_err());
    assert!(parse_heuristic_expr("min(1)").is_err());
}

#[test]
fn config_validation() {
    assert!(HeuristicConfig::default().validate().is_ok());
    let bad = [
        HeuristicConfig {
            decay_factor: 1.0,
            ..HeuristicConfig::default()
        },
        HeuristicConfig {
            bump_amount: 0.0,
            ..HeuristicConfig::default()
        },
        HeuristicConfig {
            rescale_threshold: 0.5,
            ..HeuristicConfig::default()
        },
        HeuristicConfig {
            restart_policy: RestartPolicy::Luby { base: 0 },
            ..HeuristicConfig::default()
        },
    ];
    for cfg in bad {
        assert!(cfg.validate().is_err(), "{cfg:?}");
    }
}

#[test]
fn luby_prefix() {
    let got: Vec<u64> = (0..15).map(luby).collect();
    assert_eq!(got, vec![1, 1, 2, 1, 1, 2, 4, 1, 1, 2, 1, 1, 2, 4, 8]);
}

fn arb_expr() -> impl Strategy<Value = HeuristicExpr> {
    let leaf = prop_oneof![
        (-1e6f64..1e6).prop_map(HeuristicExpr::Const),
        prop_oneof![
            Just(Feature::Activity),
            Just(Feature::SavedPhase),
            Just(Feature::ConflictsSinceLastBump),
            Just(Feature::VarIndex)
        ]
        .prop_map(HeuristicExpr::Feature),
    ];
    leaf.prop_recursive(5, 40, 2, |inner| {
        let op = prop_oneof![
            Just(BinOp::Add),
            Just(BinOp::Sub),
            Just(BinOp::Mul),
            Just(BinOp::Div),
            Just(BinOp::Min),
            Just(BinOp::Max)
        ];
        prop_oneof![
            inner.clone().prop_map(|e| HeuristicExpr::Neg(Box::new(e))),
            (op, inner.clone(), inner).prop_map(|(op, a, b)| HeuristicExpr::Binary(op, Box::new(a), Box::new(b))),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn printed_expressions_parse_back(e in arb_expr()) {
        let text = e.to_string();
        prop_assert_eq!(parse_heuristic_expr(&text).unwrap(), e);
    }

    #[test]
    fn expressions_never_panic(e in arb_expr(), act in 0.0f64..1e9, phase: bool, since in 0u64..1000, idx in 1usize..1000) {
        let _ = e.eval(&VarFeatures { activity: act, saved_phase: phase, conflicts_since_last_bump: since, var_index: idx });
    }

    #[test]
    fn rescaling_preserves_the_argmax_set(
        acts in prop::collection::vec(0.0f64..1e3, 1..20),
        var_seed in any::<prop::sample::Index>(),
    ) {
        let threshold = 1e4;
        let mut order = VarOrder::new(acts.len(), 1.0, 0.95, threshold);
        order.activity = acts;
        let var = var_seed.index(order.activity.len());
        // Push `var` just past the threshold so this bump rescales.
        order.var_inc = threshold - order.activity[var] + 1.0;
        let mut before = order.activity.clone();
        before[var] += order.var_inc;
        let argmax = |xs: &[f64]| {
            let m = xs.iter().cloned().fold(f64::MIN, f64::max);
            xs.iter().enumerate().filter(|(_, &x)| x == m).map(|(i, _)| i).collect::<Vec<_>>()
        };
        order.inc_activity(var);
        prop_assert!(order.activity[var] < 1.01);
        prop_assert_eq!(argmax(&before), argmax(&order.activity));
    }

    #[test]
    fn heap_agrees_with_linear_decide(
        acts in prop::collection::vec(0u8..6, 1..30),
        assigned in prop::collection::vec(any::<bool>(), 30),
    ) {
        let n = acts.len();
        let mut order = VarOrder::new(n, 1.0, 0.95, 1e100);
        for (v, &a) in acts.iter().enumerate() {
            for _ in 0..a {
                order.inc_activity(v);
            }
        }
        prop_assert!(order.heap_is_consistent());
        let states: Vec<VarState> = (0..n)
            .map(|v| VarState { assigned: assigned[v], activity: order.activity[v], ..VarState::default() })
            .collect();
        let mut from_heap = None;
        while let Some(v) = order.pop() {
            if !assigned[v] {
                from_heap = Some(v + 1);
                break;
            }
        }
        prop_assert_eq!(from_heap, decide_next(&states, &HeuristicConfig::default()));
    }
}
