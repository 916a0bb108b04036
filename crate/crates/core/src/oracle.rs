//! Explicit-state exploration of every interleaving of a concrete run.
//!
//! Inputs are fixed, so the only non-determinism left is the order of
//! process actions and the sender picked by each wildcard receive. The
//! explorer visits the whole composed state graph and serves as ground truth
//! for the engine's reduced search.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashMap};
use std::fmt;

use thiserror::Error;

use crate::engine::{Engine, SearchStrategy};
use crate::lang::{BinaryOp, Code, Expr, Op, Program, Source, UnaryOp};
use crate::solver::Model;
use crate::symstate::{EvalError, PathCondition, ProcState, Rank, Value, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Loc {
    At(usize),
    Exited,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConcreteProc {
    pub loc: Loc,
    pub env: BTreeMap<String, i64>,
}

/// Canonical global state: every process's location and variables. A
/// process's status is a function of its location.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ConcreteState {
    pub procs: Vec<ConcreteProc>,
}

impl fmt::Display for ConcreteState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (r, p) in self.procs.iter().enumerate() {
            if r > 0 {
                write!(f, " | ")?;
            }
            match p.loc {
                Loc::At(l) => write!(f, "P{r}@{l}")?,
                Loc::Exited => write!(f, "P{r} exited")?,
            }
            if !p.env.is_empty() {
                let vars: Vec<_> = p.env.iter().map(|(k, v)| format!("{k}={v}")).collect();
                write!(f, " {{{}}}", vars.join(", "))?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GlobalAction {
    /// A non-communication statement, or a communication statement whose
    /// peer rank is invalid (which faults).
    Local(Rank),
    SR {
        sender: Rank,
        receiver: Rank,
    },
    SRstar {
        sender: Rank,
        receiver: Rank,
    },
    B,
}

impl GlobalAction {
    /// `B` weighs 1; any other action weighs one more than the lowest rank
    /// it changes.
    pub fn weight(&self) -> usize {
        match *self {
            GlobalAction::B => 1,
            GlobalAction::Local(i) => i + 1,
            GlobalAction::SR { sender, receiver } | GlobalAction::SRstar { sender, receiver } => {
                sender.min(receiver) + 1
            }
        }
    }

    pub fn is_wildcard(&self) -> bool {
        matches!(self, GlobalAction::SRstar { .. })
    }
}

impl fmt::Display for GlobalAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GlobalAction::Local(r) => write!(f, "local(P{r})"),
            GlobalAction::SR { sender, receiver } => write!(f, "SR(P{sender}, P{receiver})"),
            GlobalAction::SRstar { sender, receiver } => write!(f, "SR*(P{sender}, P{receiver})"),
            GlobalAction::B => write!(f, "B"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("action {0} is not enabled")]
    NotEnabled(GlobalAction),
    #[error("state bound of {0} exceeded")]
    BoundExceeded(usize),
    #[error("model does not assign `{0}`")]
    MissingInput(String),
    #[error("engine: {0}")]
    Engine(String),
}

/// Result of applying an action.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Applied {
    Next(ConcreteState),
    /// The action faulted; the run ends with this verdict.
    Fault(Verdict),
}

/// What a process is about to do, with peers already resolved.
#[derive(Debug, Clone, PartialEq, Eq)]
enum Pending {
    Local,
    Send(Rank),
    Recv(Rank),
    RecvAny,
    Barrier,
}

/// Concrete interpreter over lowered code with inputs fixed.
pub struct Machine<'a> {
    code: &'a Code,
    nprocs: usize,
    inputs: BTreeMap<String, i64>,
}

impl<'a> Machine<'a> {
    pub fn new(code: &'a Code, nprocs: usize, model: &Model) -> Result<Self, OracleError> {
        let mut inputs = BTreeMap::new();
        for d in &code.decls {
            let v = model.get(&d.name).ok_or_else(|| OracleError::MissingInput(d.name.clone()))?;
            inputs.insert(d.name.clone(), v);
        }
        Ok(Machine { code, nprocs, inputs })
    }

    pub fn code(&self) -> &Code {
        self.code
    }

    pub fn initial(&self) -> ConcreteState {
        let loc = if self.code.is_empty() { Loc::Exited } else { Loc::At(0) };
        ConcreteState { procs: vec![ConcreteProc { loc, env: BTreeMap::new() }; self.nprocs] }
    }

    pub fn eval(&self, rank: Rank, env: &BTreeMap<String, i64>, e: &Expr) -> Result<Value, EvalError> {
        let int = |v: Value| match v {
            Value::Int(n) => Ok(n),
            Value::Bool(_) => Err(EvalError::Type("expected integer".into())),
        };
        let boolean = |v: Value| match v {
            Value::Bool(b) => Ok(b),
            Value::Int(_) => Err(EvalError::Type("expected boolean".into())),
        };
        Ok(match e {
            Expr::Int(n) => Value::Int(*n),
            Expr::Char(c) => Value::Int(*c as i64),
            Expr::Rank => Value::Int(rank as i64),
            Expr::NProcs => Value::Int(self.nprocs as i64),
            Expr::Var(v) => Value::Int(*env.get(v).ok_or_else(|| EvalError::Unbound(v.clone()))?),
            Expr::Input(n) => Value::Int(*self.inputs.get(n).ok_or_else(|| EvalError::UndeclaredInput(n.clone()))?),
            Expr::Unary(UnaryOp::Neg, a) => {
                Value::Int(int(self.eval(rank, env, a)?)?.checked_neg().ok_or(EvalError::Overflow)?)
            }
            Expr::Unary(UnaryOp::Not, a) => Value::Bool(!boolean(self.eval(rank, env, a)?)?),
            Expr::Binary(BinaryOp::And, a, b) => {
                Value::Bool(boolean(self.eval(rank, env, a)?)? && boolean(self.eval(rank, env, b)?)?)
            }
            Expr::Binary(BinaryOp::Or, a, b) => {
                Value::Bool(boolean(self.eval(rank, env, a)?)? || boolean(self.eval(rank, env, b)?)?)
            }
            Expr::Binary(op, a, b) => {
                let x = int(self.eval(rank, env, a)?)?;
                let y = int(self.eval(rank, env, b)?)?;
                let arith = |r: Option<i64>| r.map(Value::Int).ok_or(EvalError::Overflow);
                match op {
                    BinaryOp::Add => arith(x.checked_add(y))?,
                    BinaryOp::Sub => arith(x.checked_sub(y))?,
                    BinaryOp::Mul => arith(x.checked_mul(y))?,
                    BinaryOp::Eq => Value::Bool(x == y),
                    BinaryOp::Ne => Value::Bool(x != y),
                    BinaryOp::Lt => Value::Bool(x < y),
                    BinaryOp::Le => Value::Bool(x <= y),
                    BinaryOp::Gt => Value::Bool(x > y),
                    BinaryOp::Ge => Value::Bool(x >= y),
                    BinaryOp::And | BinaryOp::Or => unreachable!(),
                }
            }
        })
    }

    fn peer(&self, rank: Rank, env: &BTreeMap<String, i64>, e: &Expr) -> Option<Rank> {
        match self.eval(rank, env, e) {
            Ok(Value::Int(r)) if r >= 0 && (r as usize) < self.nprocs && r as usize != rank => Some(r as usize),
            _ => None,
        }
    }

    fn pending(&self, s: &ConcreteState, rank: Rank) -> Option<Pending> {
        let p = &s.procs[rank];
        let Loc::At(l) = p.loc else { return None };
        Some(match &self.code.instrs[l].op {
            Op::Send { dest, .. } => match self.peer(rank, &p.env, dest) {
                Some(d) => Pending::Send(d),
                None => Pending::Local,
            },
            Op::Recv { src: Source::Any, .. } => Pending::RecvAny,
            Op::Recv { src: Source::Rank(e), .. } => match self.peer(rank, &p.env, e) {
                Some(r) => Pending::Recv(r),
                None => Pending::Local,
            },
            Op::Barrier => Pending::Barrier,
            _ => Pending::Local,
        })
    }

    /// Every action enabled in `s`, in a fixed order.
    pub fn enabled(&self, s: &ConcreteState) -> Vec<GlobalAction> {
        let pending: Vec<_> = (0..self.nprocs).map(|r| self.pending(s, r)).collect();
        let mut out = Vec::new();
        if pending.iter().all(|p| *p == Some(Pending::Barrier)) {
            out.push(GlobalAction::B);
        }
        for (i, p) in pending.iter().enumerate() {
            match p {
                Some(Pending::Local) => out.push(GlobalAction::Local(i)),
                Some(Pending::Send(j)) => match pending[*j] {
                    Some(Pending::Recv(src)) if src == i => out.push(GlobalAction::SR { sender: i, receiver: *j }),
                    Some(Pending::RecvAny) => out.push(GlobalAction::SRstar { sender: i, receiver: *j }),
                    _ => {}
                },
                _ => {}
            }
        }
        out.sort();
        out
    }

    fn step_to(&self, p: &mut ConcreteProc, target: usize) {
        p.loc = if target >= self.code.end() { Loc::Exited } else { Loc::At(target) };
    }

    fn at(&self, s: &ConcreteState, r: Rank) -> usize {
        match s.procs[r].loc {
            Loc::At(l) => l,
            Loc::Exited => unreachable!("enabled action of an exited process"),
        }
    }

    pub fn apply(&self, s: &ConcreteState, a: GlobalAction) -> Result<Applied, OracleError> {
        if !self.enabled(s).contains(&a) {
            return Err(OracleError::NotEnabled(a));
        }
        let mut t = s.clone();
        let fault = |msg: String| Ok(Applied::Fault(Verdict::Error(msg)));
        match a {
            GlobalAction::B => {
                for r in 0..self.nprocs {
                    let next = self.code.instrs[self.at(s, r)].next;
                    self.step_to(&mut t.procs[r], next);
                }
            }
            GlobalAction::SR { sender, receiver } | GlobalAction::SRstar { sender, receiver } => {
                let (ls, lr) = (self.at(s, sender), self.at(s, receiver));
                let Op::Send { payload, .. } = &self.code.instrs[ls].op else { unreachable!() };
                let Op::Recv { var, .. } = &self.code.instrs[lr].op else { unreachable!() };
                let v = match self.eval(sender, &s.procs[sender].env, payload) {
                    Ok(Value::Int(v)) => v,
                    Ok(Value::Bool(_)) => return fault(format!("P{sender}: boolean payload")),
                    Err(e) => return fault(format!("P{sender}: {e}")),
                };
                t.procs[receiver].env.insert(var.clone(), v);
                self.step_to(&mut t.procs[sender], self.code.instrs[ls].next);
                self.step_to(&mut t.procs[receiver], self.code.instrs[lr].next);
            }
            GlobalAction::Local(r) => {
                let l = self.at(s, r);
                let instr = &self.code.instrs[l];
                let env = &s.procs[r].env;
                match &instr.op {
                    Op::Assign { var, value } => match self.eval(r, env, value) {
                        Ok(Value::Int(v)) => {
                            t.procs[r].env.insert(var.clone(), v);
                            self.step_to(&mut t.procs[r], instr.next);
                        }
                        Ok(Value::Bool(_)) => return fault(format!("P{r}: boolean assigned")),
                        Err(e) => return fault(format!("P{r}: {e}")),
                    },
                    Op::Branch { cond, else_to } => match self.eval(r, env, cond) {
                        Ok(Value::Bool(b)) => self.step_to(&mut t.procs[r], if b { instr.next } else { *else_to }),
                        Ok(Value::Int(_)) => return fault(format!("P{r}: integer condition")),
                        Err(e) => return fault(format!("P{r}: {e}")),
                    },
                    Op::Assert(e) => match self.eval(r, env, e) {
                        Ok(Value::Bool(true)) => self.step_to(&mut t.procs[r], instr.next),
                        Ok(Value::Bool(false)) => return Ok(Applied::Fault(Verdict::AssertFail { rank: r, loc: l })),
                        Ok(Value::Int(_)) => return fault(format!("P{r}: integer assertion")),
                        Err(e) => return fault(format!("P{r}: {e}")),
                    },
                    Op::Exit => t.procs[r].loc = Loc::Exited,
                    Op::Send { .. } | Op::Recv { .. } => return fault(format!("P{r}: invalid peer rank")),
                    Op::Barrier => unreachable!("barrier is not a local action"),
                }
            }
        }
        Ok(Applied::Next(t))
    }

    pub fn all_exited(&self, s: &ConcreteState) -> bool {
        s.procs.iter().all(|p| p.loc == Loc::Exited)
    }
}

/// The reduced action set: `{B}` when the barrier can fire, otherwise the
/// lowest-weight action that is not a wildcard match, otherwise everything.
pub fn ample_of(enabled: &[GlobalAction]) -> Vec<GlobalAction> {
    if enabled.contains(&GlobalAction::B) {
        return vec![GlobalAction::B];
    }
    match enabled.iter().filter(|a| !a.is_wildcard()).min_by_key(|a| (a.weight(), **a)) {
        Some(a) => vec![*a],
        None => enabled.to_vec(),
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Terminal {
    /// The last state reached; for faults, the state in which the faulting
    /// action was taken.
    pub state: ConcreteState,
    pub verdict: Verdict,
    /// Lengths of every path from the initial state.
    pub depths: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleResult {
    /// Sorted by verdict, then state.
    pub terminals: Vec<Terminal>,
    pub states_visited: usize,
    pub transitions: usize,
}

impl OracleResult {
    pub fn deadlocks(&self) -> impl Iterator<Item = &Terminal> {
        self.terminals.iter().filter(|t| t.verdict == Verdict::Deadlock)
    }

    pub fn deadlock_reachable(&self) -> bool {
        self.deadlocks().next().is_some()
    }
}

/// Visits every state reachable from the initial one.
///
/// Each action strictly increases the sum of process locations, so the graph
/// is acyclic and visiting states in increasing order of that sum sees every
/// predecessor of a state before the state itself.
pub fn explore_full(
    code: &Code,
    nprocs: usize,
    model: &Model,
    state_bound: usize,
) -> Result<OracleResult, OracleError> {
    let m = Machine::new(code, nprocs, model)?;
    let potential = |s: &ConcreteState| -> usize {
        s.procs
            .iter()
            .map(|p| match p.loc {
                Loc::At(l) => l,
                Loc::Exited => code.end(),
            })
            .sum()
    };
    let init = m.initial();
    let mut index: HashMap<ConcreteState, usize> = HashMap::new();
    let mut nodes: Vec<(ConcreteState, BTreeSet<usize>)> = Vec::new();
    let mut heap = BinaryHeap::new();
    heap.push(Reverse((potential(&init), 0usize)));
    index.insert(init.clone(), 0);
    nodes.push((init, BTreeSet::from([0])));
    let mut terminals: BTreeMap<(Verdict, ConcreteState), BTreeSet<usize>> = BTreeMap::new();
    let mut transitions = 0;

    while let Some(Reverse((_, id))) = heap.pop() {
        let (s, depths) = nodes[id].clone();
        let enabled = m.enabled(&s);
        if enabled.is_empty() {
            let verdict = if m.all_exited(&s) { Verdict::Terminated } else { Verdict::Deadlock };
            terminals.entry((verdict, s)).or_default().extend(depths);
            continue;
        }
        let next_depths: BTreeSet<usize> = depths.iter().map(|d| d + 1).collect();
        for a in enabled {
            transitions += 1;
            match m.apply(&s, a)? {
                Applied::Fault(v) => {
                    terminals.entry((v, s.clone())).or_default().extend(next_depths.iter().copied());
                }
                Applied::Next(t) => match index.get(&t) {
                    Some(&tid) => nodes[tid].1.extend(next_depths.iter().copied()),
                    None => {
                        if nodes.len() >= state_bound {
                            return Err(OracleError::BoundExceeded(state_bound));
                        }
                        let tid = nodes.len();
                        heap.push(Reverse((potential(&t), tid)));
                        index.insert(t.clone(), tid);
                        nodes.push((t, next_depths.clone()));
                    }
                },
            }
        }
    }

    Ok(OracleResult {
        terminals: terminals
            .into_iter()
            .map(|((verdict, state), depths)| Terminal { state, verdict, depths })
            .collect(),
        states_visited: nodes.len(),
        transitions,
    })
}

/// The canonical state of engine process states under a concrete model.
pub fn concretize(procs: &[ProcState], code: &Code, model: &Model) -> Result<ConcreteState, EvalError> {
    let values = model.values.as_slice();
    let procs = procs
        .iter()
        .map(|p| {
            let loc = if p.is_exited() || p.cursor >= code.end() { Loc::Exited } else { Loc::At(p.cursor) };
            let mut env = BTreeMap::new();
            for (k, v) in &p.env {
                match v.eval(values)? {
                    Value::Int(n) => env.insert(k.clone(), n),
                    Value::Bool(_) => return Err(EvalError::Type(format!("boolean variable `{k}`"))),
                };
            }
            Ok(ConcreteProc { loc, env })
        })
        .collect::<Result<_, _>>()?;
    Ok(ConcreteState { procs })
}

/// An engine deadlock whose trace length is not a path length in the oracle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LengthMismatch {
    pub state: ConcreteState,
    pub engine_len: usize,
    pub oracle_lens: BTreeSet<usize>,
}

/// Comparison of the engine and the oracle under one concrete model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TheoremCheck {
    pub model: Model,
    pub engine_deadlocks: BTreeSet<ConcreteState>,
    pub oracle_deadlocks: BTreeSet<ConcreteState>,
    pub length_mismatches: Vec<LengthMismatch>,
    pub engine_states: u64,
    pub oracle_states: usize,
}

impl TheoremCheck {
    pub fn reachability_agrees(&self) -> bool {
        self.engine_deadlocks.is_empty() == self.oracle_deadlocks.is_empty()
    }

    pub fn only_engine(&self) -> impl Iterator<Item = &ConcreteState> {
        self.engine_deadlocks.difference(&self.oracle_deadlocks)
    }

    pub fn only_oracle(&self) -> impl Iterator<Item = &ConcreteState> {
        self.oracle_deadlocks.difference(&self.engine_deadlocks)
    }

    pub fn holds(&self) -> bool {
        self.reachability_agrees()
            && self.engine_deadlocks == self.oracle_deadlocks
            && self.length_mismatches.is_empty()
    }
}

/// Runs the engine with inputs pinned to `model` and the oracle on the same
/// concrete program, and compares their deadlocked terminals.
pub fn check_theorem(
    p: &Program,
    nprocs: usize,
    model: &Model,
    state_bound: usize,
) -> Result<TheoremCheck, OracleError> {
    let engine = Engine::new(p, nprocs).map_err(|e| OracleError::Engine(e.to_string()))?.pin(model);
    let strategy = SearchStrategy { max_states: Some(state_bound as u64), ..SearchStrategy::dfs() };
    let report = engine.search(strategy).map_err(|e| OracleError::Engine(e.to_string()))?;
    if report.truncated > 0 {
        return Err(OracleError::BoundExceeded(state_bound));
    }
    let oracle = explore_full(engine.code(), nprocs, model, state_bound)?;
    let oracle_lens: BTreeMap<&ConcreteState, &BTreeSet<usize>> =
        oracle.deadlocks().map(|t| (&t.state, &t.depths)).collect();

    let mut engine_deadlocks = BTreeSet::new();
    let mut length_mismatches = Vec::new();
    for path in report.deadlocks() {
        let state = concretize(&path.procs, engine.code(), model).map_err(|e| OracleError::Engine(e.to_string()))?;
        if let Some(lens) = oracle_lens.get(&state) {
            if !lens.contains(&path.trace.len()) {
                length_mismatches.push(LengthMismatch {
                    state: state.clone(),
                    engine_len: path.trace.len(),
                    oracle_lens: (*lens).clone(),
                });
            }
        }
        engine_deadlocks.insert(state);
    }
    Ok(TheoremCheck {
        model: model.clone(),
        engine_deadlocks,
        oracle_deadlocks: oracle.deadlocks().map(|t| t.state.clone()).collect(),
        length_mismatches,
        engine_states: report.states_created,
        oracle_states: oracle.states_visited,
    })
}

/// Up to `k` distinct input models: those of the engine's explored paths
/// first, then further solutions of the input domains.
pub fn sample_models(p: &Program, nprocs: usize, k: usize) -> Result<Vec<Model>, OracleError> {
    let engine = Engine::new(p, nprocs).map_err(|e| OracleError::Engine(e.to_string()))?;
    let report = engine.search(SearchStrategy::dfs()).map_err(|e| OracleError::Engine(e.to_string()))?;
    let mut models: Vec<Model> = Vec::new();
    for rec in &report.paths {
        if models.len() < k && !models.contains(&rec.model) {
            models.push(rec.model.clone());
        }
    }
    if models.len() < k {
        let extra = engine
            .solver()
            .models(&PathCondition::new(), k + models.len())
            .map_err(|e| OracleError::Engine(e.to_string()))?;
        for m in extra {
            if models.len() < k && !models.contains(&m) {
                models.push(m);
            }
        }
    }
    Ok(models)
}
