#![allow(dead_code)]

use std::fmt::Write as _;

use mpisym::lang::{BinaryOp, UnaryOp};
use mpisym::solver::{Domain, Domains};
use mpisym::symstate::{GlobalState, PathCondition, SymExpr};
use mpisym::{parse_program, Engine, Model, Program};
use rand::seq::SliceRandom;
use rand::Rng;

pub const DEFAULT_SEED: u64 = 0x6d70_6973_796d;

/// Base seed for randomized suites, overridable through `MPISYM_SEED`.
pub fn base_seed() -> u64 {
    std::env::var("MPISYM_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(DEFAULT_SEED)
}

pub struct Generated {
    pub source: String,
    pub program: Program,
    pub nprocs: usize,
}

/// Random small program: 2 to 4 processes, at most 6 communication
/// statements, at most one symbolic input of width at most 8, and no
/// process ever addresses itself.
pub fn random_program(rng: &mut impl Rng) -> Generated {
    let nprocs = rng.gen_range(2..=4);
    let symbolic = rng.gen_bool(0.6);
    let mut src = String::new();
    if symbolic {
        let lo = rng.gen_range(0..=3);
        let width = rng.gen_range(1..=8);
        let _ = writeln!(src, "symbolic\n  sym X : int[{lo}..{}];", lo + width - 1);
    }
    let _ = writeln!(src, "program (nprocs = {nprocs}) {{");
    src.push_str("  v = 0;\n");
    let shared_barrier = rng.gen_bool(0.3);
    let mut g = Gen { rng, nprocs, symbolic, budget: if shared_barrier { 5 } else { 6 } };
    for r in 0..nprocs {
        let kw = if r == 0 { "if" } else { "} else if" };
        let _ = writeln!(src, "  {kw} (rank == {r}) {{");
        let mut stmts = Vec::new();
        g.block(r, 0, &mut stmts);
        for s in stmts {
            let _ = writeln!(src, "    {s}");
        }
    }
    src.push_str("  }\n");
    if shared_barrier {
        src.push_str("  barrier;\n");
    }
    src.push_str("}\n");
    let program = parse_program(&src).unwrap_or_else(|e| panic!("{e}\n{src}"));
    Generated { source: src, program, nprocs }
}

struct Gen<'a, R: Rng> {
    rng: &'a mut R,
    nprocs: usize,
    symbolic: bool,
    budget: usize,
}

impl<R: Rng> Gen<'_, R> {
    fn peer(&mut self, r: usize) -> usize {
        let others: Vec<usize> = (0..self.nprocs).filter(|&q| q != r).collect();
        *others.choose(self.rng).unwrap()
    }

    fn value(&mut self) -> String {
        match self.rng.gen_range(0..4) {
            0 if self.symbolic => "X".into(),
            1 => "rank".into(),
            2 => "v + 1".into(),
            _ => self.rng.gen_range(0..4).to_string(),
        }
    }

    fn cond(&mut self) -> String {
        let c = self.rng.gen_range(0..6);
        if self.symbolic && self.rng.gen_bool(0.7) {
            let op = ["==", "!=", "<", ">="].choose(self.rng).unwrap();
            format!("X {op} {c}")
        } else {
            let op = ["==", "!=", "<"].choose(self.rng).unwrap();
            format!("v {op} {c}")
        }
    }

    fn block(&mut self, r: usize, depth: usize, out: &mut Vec<String>) {
        let len = self.rng.gen_range(0..=3);
        for _ in 0..len {
            let roll = self.rng.gen_range(0..100);
            if self.budget == 0 || roll >= 88 {
                if roll % 5 == 0 {
                    let e = self.cond();
                    out.push(format!("assert({e});"));
                } else {
                    let e = self.value();
                    out.push(format!("v = {e};"));
                }
                continue;
            }
            if roll < 36 {
                self.budget -= 1;
                let (e, d) = (self.value(), self.peer(r));
                out.push(format!("send {e} to {d};"));
            } else if roll < 70 {
                self.budget -= 1;
                if self.rng.gen_bool(0.35) {
                    out.push("recv v from any;".into());
                } else {
                    let s = self.peer(r);
                    out.push(format!("recv v from {s};"));
                }
            } else if roll < 75 {
                self.budget -= 1;
                out.push("barrier;".into());
            } else if depth < 2 {
                let c = self.cond();
                let (mut then_b, mut else_b) = (Vec::new(), Vec::new());
                self.block(r, depth + 1, &mut then_b);
                self.block(r, depth + 1, &mut else_b);
                let mut s = format!("if ({c}) {{ {} }}", then_b.join(" "));
                if !else_b.is_empty() {
                    let _ = write!(s, " else {{ {} }}", else_b.join(" "));
                }
                out.push(s);
            }
        }
    }
}

/// Every assignment of the program's inputs; the empty model when it has none.
pub fn all_models(p: &Program) -> Vec<Model> {
    let mut out = vec![Model::default()];
    for d in &p.decls {
        out = out
            .into_iter()
            .flat_map(|m| {
                (d.lo..=d.hi).map(move |v| {
                    let mut names: Vec<String> = m.iter().map(|(n, _)| n.to_string()).collect();
                    let mut values: Vec<i64> = m.iter().map(|(_, x)| x).collect();
                    names.push(d.name.clone());
                    values.push(v);
                    Model::new(names, values)
                })
            })
            .collect();
    }
    out
}

/// Random path condition over up to three inputs, each of width at most 64.
pub fn random_pc(rng: &mut impl Rng) -> (Domains, PathCondition) {
    let nvars = rng.gen_range(1..=3);
    let domains = Domains(
        (0..nvars)
            .map(|i| {
                let lo = rng.gen_range(-20..=20);
                let width = rng.gen_range(1..=64);
                Domain { name: format!("v{i}"), lo, hi: lo + width - 1 }
            })
            .collect(),
    );
    let n = rng.gen_range(1..=4);
    let conjuncts = (0..n).map(|_| random_bool(rng, &domains, 2)).collect();
    (domains, PathCondition::from_conjuncts(conjuncts))
}

fn random_term(rng: &mut impl Rng, d: &Domains) -> SymExpr {
    let var = |rng: &mut dyn rand::RngCore| {
        let i = rng.gen_range(0..d.len());
        SymExpr::input(i, &d.0[i].name)
    };
    match rng.gen_range(0..5) {
        0 => SymExpr::Int(rng.gen_range(-30..=60)),
        1 | 2 => var(rng),
        3 => {
            let op = *[BinaryOp::Add, BinaryOp::Sub].choose(rng).unwrap();
            SymExpr::binary(op, var(rng), var(rng)).unwrap()
        }
        _ => {
            let k = SymExpr::Int(rng.gen_range(-3..=3));
            let t = SymExpr::binary(BinaryOp::Mul, k, var(rng)).unwrap();
            SymExpr::binary(BinaryOp::Add, t, SymExpr::Int(rng.gen_range(-10..=10))).unwrap()
        }
    }
}

fn random_bool(rng: &mut impl Rng, d: &Domains, depth: usize) -> SymExpr {
    let roll = rng.gen_range(0..10);
    if depth > 0 && roll == 0 {
        let inner = random_bool(rng, d, depth - 1);
        return SymExpr::unary(UnaryOp::Not, inner).unwrap();
    }
    if depth > 0 && roll <= 2 {
        let op = *[BinaryOp::And, BinaryOp::Or].choose(rng).unwrap();
        let (a, b) = (random_bool(rng, d, depth - 1), random_bool(rng, d, depth - 1));
        return SymExpr::binary(op, a, b).unwrap();
    }
    let op = *[BinaryOp::Eq, BinaryOp::Ne, BinaryOp::Lt, BinaryOp::Le, BinaryOp::Gt, BinaryOp::Ge].choose(rng).unwrap();
    let (a, b) = (random_term(rng, d), random_term(rng, d));
    SymExpr::binary(op, a, b).unwrap()
}

/// Lexicographically smallest satisfying assignment by exhaustive
/// enumeration; evaluation failures count as false.
pub fn brute_force(d: &Domains, pc: &PathCondition) -> Option<Vec<i64>> {
    let mut x: Vec<i64> = d.0.iter().map(|v| v.lo).collect();
    loop {
        if pc.holds(&x).unwrap_or(false) {
            return Some(x);
        }
        let mut i = x.len();
        loop {
            if i == 0 {
                return None;
            }
            i -= 1;
            if x[i] < d.0[i].hi {
                x[i] += 1;
                break;
            }
            x[i] = d.0[i].lo;
        }
    }
}

/// Follows one random path from the initial state, handing every state and
/// its successors to `visit`. Stops at a terminal state or after `limit`
/// expansions.
pub fn random_walk(
    engine: &Engine,
    rng: &mut impl Rng,
    limit: usize,
    mut visit: impl FnMut(&GlobalState, &[GlobalState]),
) {
    let mut s = engine.initial_state();
    for _ in 0..limit {
        if s.verdict.is_terminal() || s.all_exited() {
            return;
        }
        let succs = engine.expand(s.clone()).expect("expand");
        visit(&s, &succs);
        match succs.choose(rng) {
            Some(t) => s = t.clone(),
            None => return,
        }
    }
}
