mod common;

use std::collections::{BTreeMap, BTreeSet};

use mpisym::engine::ScheduleOutcome;
use mpisym::lang::{lower, BinaryOp, Block, Code, Expr, Source, Span, Stmt, StmtKind, SymDecl, UnaryOp};
use mpisym::oracle::{concretize, explore_full, Applied, ConcreteState, GlobalAction, Machine};
use mpisym::report::serialize;
use mpisym::solver::Solver;
use mpisym::symstate::{fork, Verdict};
use mpisym::{parse_program, pretty_print, search, Engine, Model, Program, SearchStrategy};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn pick_model(p: &Program, r: &mut ChaCha8Rng) -> Model {
    common::all_models(p).choose(r).cloned().unwrap()
}

// Random ASTs -----------------------------------------------------------

fn arb_expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0i64..300).prop_map(Expr::Int),
        proptest::char::range('a', 'z').prop_map(Expr::Char),
        prop::sample::select(vec!["X", "Y"]).prop_map(|n| Expr::Input(n.into())),
        prop::sample::select(vec!["a", "b", "tmp"]).prop_map(Expr::var),
        Just(Expr::Rank),
        Just(Expr::NProcs),
    ];
    leaf.prop_recursive(4, 24, 2, |inner| {
        prop_oneof![
            (prop::sample::select(vec![UnaryOp::Neg, UnaryOp::Not]), inner.clone())
                .prop_map(|(op, e)| Expr::unary(op, e)),
            (
                prop::sample::select(vec![
                    BinaryOp::Add,
                    BinaryOp::Sub,
                    BinaryOp::Mul,
                    BinaryOp::Eq,
                    BinaryOp::Ne,
                    BinaryOp::Lt,
                    BinaryOp::Le,
                    BinaryOp::Gt,
                    BinaryOp::Ge,
                    BinaryOp::And,
                    BinaryOp::Or,
                ]),
                inner.clone(),
                inner
            )
                .prop_map(|(op, a, b)| Expr::binary(op, a, b)),
        ]
    })
}

fn arb_block() -> impl Strategy<Value = Block> {
    let var = || prop::sample::select(vec!["a", "b", "tmp"]).prop_map(String::from);
    let simple = prop_oneof![
        (var(), arb_expr()).prop_map(|(var, value)| StmtKind::Assign { var, value }),
        (arb_expr(), arb_expr()).prop_map(|(payload, dest)| StmtKind::Send { payload, dest }),
        (var(), arb_expr()).prop_map(|(var, e)| StmtKind::Recv { var, src: Source::Rank(e) }),
        var().prop_map(|var| StmtKind::Recv { var, src: Source::Any }),
        Just(StmtKind::Barrier),
        arb_expr().prop_map(StmtKind::Assert),
        Just(StmtKind::Exit),
    ]
    .prop_map(Stmt::new);
    let stmts = simple.prop_recursive(3, 16, 4, |inner| {
        let block = prop::collection::vec(inner, 0..4).prop_map(Block::new);
        prop_oneof![
            (arb_expr(), block.clone(), prop::option::of(block.clone()))
                .prop_map(|(cond, t, e)| Stmt::new(StmtKind::If { cond, then_block: t, else_block: e })),
            (0u32..5, block.clone()).prop_map(|(count, body)| Stmt::new(StmtKind::Repeat { count, body })),
            block.prop_map(|b| Stmt::new(StmtKind::Seq(b))),
        ]
    });
    prop::collection::vec(stmts, 0..6).prop_map(Block::new)
}

fn arb_program() -> impl Strategy<Value = Program> {
    (prop::option::of(1usize..9), arb_block()).prop_map(|(nprocs_default, body)| {
        let decl = |name: &str, lo, hi| SymDecl { name: name.into(), lo, hi, span: Span::default() };
        let decls = vec![decl("X", 0, 255), decl("Y", -4, 4)];
        Program { nprocs_default, decls, body }
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn parse_print_round_trip(p in arb_program()) {
        let text = pretty_print(&p);
        let back = parse_program(&text).map_err(|e| TestCaseError::fail(format!("{e}\n{text}")))?;
        prop_assert_eq!(&back, &p, "{}", text);
        prop_assert_eq!(pretty_print(&back), text);
        prop_assert_eq!(back.hash(), p.hash());
    }
}

// Solver ----------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn solver_matches_brute_force(seed in any::<u64>()) {
        let (domains, pc) = common::random_pc(&mut rng(seed));
        let truth = common::brute_force(&domains, &pc);
        let solver = Solver::new(domains);
        prop_assert_eq!(solver.is_sat(&pc).unwrap(), truth.is_some());
        match truth {
            Some(x) => {
                let m = solver.get_model(&pc).unwrap();
                prop_assert!(pc.holds(&m.values).unwrap());
                prop_assert_eq!(m.values, x);
            }
            None => prop_assert!(solver.get_model(&pc).is_err()),
        }
    }

    #[test]
    fn adding_constraints_never_restores_satisfiability(a in any::<u64>(), b in any::<u64>()) {
        let (domains, pc) = common::random_pc(&mut rng(a));
        let (_, extra) = common::random_pc(&mut rng(b));
        let solver = Solver::new(domains.clone());
        let mut stronger = pc.clone();
        for c in extra.conjuncts() {
            // Only keep constraints over inputs the domains declare.
            let mut ids = BTreeSet::new();
            c.inputs(&mut ids);
            if ids.iter().all(|&i| i < domains.len()) {
                stronger.push(c.clone());
            }
        }
        if !solver.is_sat(&pc).unwrap() {
            prop_assert!(!solver.is_sat(&stronger).unwrap());
        }
        if solver.is_sat(&stronger).unwrap() {
            prop_assert!(solver.is_sat(&pc).unwrap());
            let m = solver.get_model(&stronger).unwrap();
            prop_assert!(pc.holds(&m.values).unwrap());
        }
    }

    #[test]
    fn enumerated_models_are_distinct_and_valid(seed in any::<u64>(), k in 1usize..6) {
        let (domains, pc) = common::random_pc(&mut rng(seed));
        let solver = Solver::new(domains);
        let models = solver.models(&pc, k).unwrap();
        prop_assert!(models.len() <= k);
        let distinct: BTreeSet<_> = models.iter().collect();
        prop_assert_eq!(distinct.len(), models.len());
        for m in &models {
            prop_assert!(pc.holds(&m.values).unwrap());
        }
        prop_assert_eq!(models.is_empty(), !solver.is_sat(&pc).unwrap());
    }
}

// Engine ----------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn expansion_leaves_the_parent_untouched(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = common::random_program(&mut r);
        let engine = Engine::new(&g.program, g.nprocs).unwrap();
        let mut violations = 0;
        common::random_walk(&engine, &mut r, 100, |s, succs| {
            let before = s.clone();
            let child = fork(s);
            let again = engine.expand(child).unwrap();
            if *s != before || again != succs {
                violations += 1;
            }
        });
        prop_assert_eq!(violations, 0);
    }

    #[test]
    fn path_conditions_and_traces_only_grow(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = common::random_program(&mut r);
        let engine = Engine::new(&g.program, g.nprocs).unwrap();
        let mut bad = Vec::new();
        common::random_walk(&engine, &mut r, 100, |s, succs| {
            for t in succs {
                if !s.pc.is_prefix_of(&t.pc) {
                    bad.push(format!("pc {} -> {}", s.pc, t.pc));
                }
                if t.trace.entries()[..s.trace.len()] != *s.trace.entries() {
                    bad.push("trace rewritten".to_string());
                }
                if t.steps != s.steps + 1 {
                    bad.push("step counter".to_string());
                }
                if !engine.solver().is_sat(&t.pc).unwrap() {
                    bad.push(format!("unsat successor {}", t.pc));
                }
            }
        });
        prop_assert!(bad.is_empty(), "{:?}\n{}", bad, g.source);
    }

    #[test]
    fn search_is_deterministic(seed in any::<u64>()) {
        let g = common::random_program(&mut rng(seed));
        let a = search(&g.program, g.nprocs, SearchStrategy::dfs()).unwrap();
        let b = search(&g.program, g.nprocs, SearchStrategy::dfs()).unwrap();
        prop_assert_eq!(serialize(&a), serialize(&b));
        let c = search(&g.program, g.nprocs, SearchStrategy::bfs()).unwrap();
        prop_assert_eq!(a.counts, c.counts);
        prop_assert_eq!(a.states_created, c.states_created);
    }

    /// At a wildcard fork the concrete system can only make SR* moves, and
    /// exactly the ones the engine forks on. Any other engine step is one
    /// enabled concrete action or leaves the concrete state unchanged.
    #[test]
    fn engine_steps_are_concrete_actions(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = common::random_program(&mut r);
        let model = pick_model(&g.program, &mut r);
        let engine = Engine::new(&g.program, g.nprocs).unwrap().pin(&model);
        let code = engine.code().clone();
        let machine = Machine::new(&code, g.nprocs, &model).unwrap();
        let mut bad = Vec::new();
        common::random_walk(&engine, &mut r, 100, |s, succs| {
            let Ok(cs) = concretize(&s.procs, &code, &model) else { return };
            let enabled = machine.enabled(&cs);
            let mut probe = s.clone();
            if let ScheduleOutcome::ForkedWildcard(_) = engine.scheduler(&mut probe).unwrap() {
                if enabled.iter().any(|a| !a.is_wildcard()) {
                    bad.push(format!("fork with {enabled:?} enabled at {cs}"));
                }
                let forked: BTreeSet<_> = mpisym::engine::wildcard_pairs(s).into_iter().collect();
                let oracle: BTreeSet<_> = enabled
                    .iter()
                    .filter_map(|a| match *a {
                        GlobalAction::SRstar { sender, receiver } => Some((sender, receiver)),
                        _ => None,
                    })
                    .collect();
                if forked != oracle {
                    bad.push(format!("forked {forked:?}, oracle {oracle:?}"));
                }
            }
            for t in succs {
                if t.verdict != Verdict::Running {
                    continue;
                }
                let Ok(ct) = concretize(&t.procs, &code, &model) else { continue };
                let reached = ct == cs
                    || enabled.iter().any(|&a| matches!(machine.apply(&cs, a), Ok(Applied::Next(ref n)) if *n == ct));
                if !reached {
                    bad.push(format!("{cs} -> {ct} is not a concrete action"));
                }
            }
        });
        prop_assert!(bad.is_empty(), "{:?}\n{}", bad, g.source);
    }

    /// The engine never creates more states than the full interleaving
    /// graph has.
    #[test]
    fn reduction_never_exceeds_the_full_graph(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = common::random_program(&mut r);
        let model = pick_model(&g.program, &mut r);
        let engine = Engine::new(&g.program, g.nprocs).unwrap().pin(&model);
        let report = engine.search(SearchStrategy::dfs()).unwrap();
        let full = explore_full(engine.code(), g.nprocs, &model, 1_000_000).unwrap();
        prop_assert!(report.states_created as usize <= full.states_visited, "{}", g.source);
    }
}

#[test]
fn reduction_never_exceeds_the_full_graph_on_the_corpus() {
    for e in mpisym::corpus::load_corpus().unwrap() {
        let p = e.program().unwrap();
        for m in mpisym::oracle::sample_models(&p, e.nprocs, 4).unwrap() {
            let engine = Engine::new(&p, e.nprocs).unwrap().pin(&m);
            let report = engine.search(SearchStrategy::dfs()).unwrap();
            let full = explore_full(engine.code(), e.nprocs, &m, 1_000_000).unwrap();
            assert!(report.states_created as usize <= full.states_visited, "{} [{m}]", e.name);
        }
    }
}

// Oracle ----------------------------------------------------------------

/// Every maximal path of the concrete system, without merging states.
fn enumerate_paths(
    m: &Machine,
    s: &ConcreteState,
    depth: usize,
    seen: &mut BTreeSet<ConcreteState>,
    terminals: &mut BTreeMap<(Verdict, ConcreteState), BTreeSet<usize>>,
    budget: &mut usize,
) -> bool {
    if *budget == 0 {
        return false;
    }
    *budget -= 1;
    seen.insert(s.clone());
    let enabled = m.enabled(s);
    if enabled.is_empty() {
        let v = if m.all_exited(s) { Verdict::Terminated } else { Verdict::Deadlock };
        terminals.entry((v, s.clone())).or_default().insert(depth);
        return true;
    }
    for a in enabled {
        match m.apply(s, a).unwrap() {
            Applied::Fault(v) => {
                terminals.entry((v, s.clone())).or_default().insert(depth + 1);
            }
            Applied::Next(t) => {
                if !enumerate_paths(m, &t, depth + 1, seen, terminals, budget) {
                    return false;
                }
            }
        }
    }
    true
}

fn small_code(seed: u64) -> (common::Generated, Code, Model) {
    let mut r = rng(seed);
    let g = common::random_program(&mut r);
    let model = pick_model(&g.program, &mut r);
    let code = lower(&g.program);
    (g, code, model)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Merging revisited states loses no terminal and no path length.
    #[test]
    fn merged_exploration_matches_path_enumeration(seed in any::<u64>()) {
        let (g, code, model) = small_code(seed);
        let m = Machine::new(&code, g.nprocs, &model).unwrap();
        let (mut seen, mut terminals, mut budget) = (BTreeSet::new(), BTreeMap::new(), 20_000);
        let complete = enumerate_paths(&m, &m.initial(), 0, &mut seen, &mut terminals, &mut budget);
        prop_assume!(complete);
        let full = explore_full(&code, g.nprocs, &model, 1_000_000).unwrap();
        prop_assert_eq!(full.states_visited, seen.len());
        let got: BTreeMap<_, _> =
            full.terminals.into_iter().map(|t| ((t.verdict, t.state), t.depths)).collect();
        prop_assert_eq!(got, terminals, "{}", g.source);
    }

    /// Two rendezvous on disjoint process pairs commute.
    #[test]
    fn disjoint_rendezvous_commute(seed in any::<u64>()) {
        let (g, code, model) = small_code(seed);
        let m = Machine::new(&code, g.nprocs, &model).unwrap();
        let mut r = rng(seed ^ 1);
        let mut s = m.initial();
        let ranks = |a: &GlobalAction| -> Vec<usize> {
            match *a {
                GlobalAction::SR { sender, receiver } | GlobalAction::SRstar { sender, receiver } => {
                    vec![sender, receiver]
                }
                GlobalAction::Local(p) => vec![p],
                GlobalAction::B => (0..g.nprocs).collect(),
            }
        };
        for _ in 0..50 {
            let enabled = m.enabled(&s);
            let comms: Vec<_> = enabled.iter().filter(|a| matches!(a, GlobalAction::SR { .. } | GlobalAction::SRstar { .. })).collect();
            for (i, a) in comms.iter().enumerate() {
                for b in &comms[i + 1..] {
                    if ranks(a).iter().any(|x| ranks(b).contains(x)) {
                        continue;
                    }
                    let two = |x: GlobalAction, y: GlobalAction| match m.apply(&s, x).unwrap() {
                        Applied::Next(t) => Some(m.apply(&t, y).unwrap()),
                        Applied::Fault(_) => None,
                    };
                    prop_assert_eq!(two(**a, **b), two(**b, **a));
                }
            }
            let Some(&a) = enabled.choose(&mut r) else { break };
            match m.apply(&s, a).unwrap() {
                Applied::Next(t) => s = t,
                Applied::Fault(_) => break,
            }
        }
    }
}
