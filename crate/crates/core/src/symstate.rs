//! Symbolic values, path conditions and execution states.
//!
//! A [`GlobalState`] is a self-contained value: forking is a deep copy (the
//! expression trees inside are immutable and shared through `Arc`), so two
//! forked states never observe each other's updates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::lang::{BinaryOp, Code, Expr, Op, Source, UnaryOp};

pub type Rank = usize;

/// A reference to a declared symbolic input: its declaration index and name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Sym {
    pub id: usize,
    pub name: Arc<str>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Value {
    Int(i64),
    Bool(bool),
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("unbound variable `{0}`")]
    Unbound(String),
    #[error("undeclared symbolic input `{0}`")]
    UndeclaredInput(String),
    #[error("type error: {0}")]
    Type(String),
    #[error("arithmetic overflow")]
    Overflow,
}

/// Integer- or boolean-sorted expression over symbolic inputs, kept in
/// constant-folded form: a tree without [`SymExpr::Input`] leaves is always
/// a single `Int` or `Bool`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum SymExpr {
    Int(i64),
    Bool(bool),
    Input(Sym),
    Unary(UnaryOp, Arc<SymExpr>),
    Binary(BinaryOp, Arc<SymExpr>, Arc<SymExpr>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sort {
    Int,
    Bool,
}

impl SymExpr {
    pub fn input(id: usize, name: &str) -> SymExpr {
        SymExpr::Input(Sym { id, name: name.into() })
    }

    pub fn sort(&self) -> Sort {
        match self {
            SymExpr::Int(_) | SymExpr::Input(_) => Sort::Int,
            SymExpr::Bool(_) => Sort::Bool,
            SymExpr::Unary(UnaryOp::Neg, _) => Sort::Int,
            SymExpr::Unary(UnaryOp::Not, _) => Sort::Bool,
            SymExpr::Binary(op, _, _) if op.is_arithmetic() => Sort::Int,
            SymExpr::Binary(..) => Sort::Bool,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            SymExpr::Int(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            SymExpr::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn is_concrete(&self) -> bool {
        matches!(self, SymExpr::Int(_) | SymExpr::Bool(_))
    }

    pub fn from_value(v: Value) -> SymExpr {
        match v {
            Value::Int(n) => SymExpr::Int(n),
            Value::Bool(b) => SymExpr::Bool(b),
        }
    }

    /// Builds `op e`, folding constants and pushing negation into
    /// comparisons.
    pub fn unary(op: UnaryOp, e: SymExpr) -> Result<SymExpr, EvalError> {
        match (op, e.sort()) {
            (UnaryOp::Neg, Sort::Int) | (UnaryOp::Not, Sort::Bool) => {}
            _ => return Err(EvalError::Type(format!("bad operand for {op:?}"))),
        }
        Ok(match (op, e) {
            (UnaryOp::Neg, SymExpr::Int(n)) => SymExpr::Int(n.checked_neg().ok_or(EvalError::Overflow)?),
            (UnaryOp::Not, SymExpr::Bool(b)) => SymExpr::Bool(!b),
            (UnaryOp::Neg, SymExpr::Unary(UnaryOp::Neg, inner))
            | (UnaryOp::Not, SymExpr::Unary(UnaryOp::Not, inner)) => (*inner).clone(),
            (UnaryOp::Not, SymExpr::Binary(cmp, a, b)) if cmp.is_comparison() => {
                SymExpr::Binary(cmp.negated_comparison().unwrap(), a, b)
            }
            (op, e) => SymExpr::Unary(op, Arc::new(e)),
        })
    }

    /// Builds `a op b`, folding constants and short-circuiting logical
    /// operators with a constant operand.
    pub fn binary(op: BinaryOp, a: SymExpr, b: SymExpr) -> Result<SymExpr, EvalError> {
        let want = if op.is_logical() { Sort::Bool } else { Sort::Int };
        if a.sort() != want || b.sort() != want {
            return Err(EvalError::Type(format!("bad operands for `{}`", op.symbol())));
        }
        if let (SymExpr::Int(x), SymExpr::Int(y)) = (&a, &b) {
            return Ok(SymExpr::from_value(apply_int(op, *x, *y)?));
        }
        Ok(match (op, a, b) {
            (BinaryOp::And, SymExpr::Bool(x), other) | (BinaryOp::And, other, SymExpr::Bool(x)) => {
                if x {
                    other
                } else {
                    SymExpr::Bool(false)
                }
            }
            (BinaryOp::Or, SymExpr::Bool(x), other) | (BinaryOp::Or, other, SymExpr::Bool(x)) => {
                if x {
                    SymExpr::Bool(true)
                } else {
                    other
                }
            }
            (op, a, b) => SymExpr::Binary(op, Arc::new(a), Arc::new(b)),
        })
    }

    /// Evaluates under a full assignment of the inputs, indexed by [`Sym::id`].
    pub fn eval(&self, model: &[i64]) -> Result<Value, EvalError> {
        Ok(match self {
            SymExpr::Int(n) => Value::Int(*n),
            SymExpr::Bool(b) => Value::Bool(*b),
            SymExpr::Input(s) => {
                Value::Int(*model.get(s.id).ok_or_else(|| EvalError::UndeclaredInput(s.name.to_string()))?)
            }
            SymExpr::Unary(op, e) => match (op, e.eval(model)?) {
                (UnaryOp::Neg, Value::Int(n)) => Value::Int(n.checked_neg().ok_or(EvalError::Overflow)?),
                (UnaryOp::Not, Value::Bool(b)) => Value::Bool(!b),
                _ => return Err(EvalError::Type("bad unary operand".into())),
            },
            SymExpr::Binary(op, a, b) => match op {
                // Short-circuit so the sort of an unevaluated side never matters.
                BinaryOp::And => match a.eval(model)? {
                    Value::Bool(false) => Value::Bool(false),
                    Value::Bool(true) => b.eval(model)?,
                    _ => return Err(EvalError::Type("bad && operand".into())),
                },
                BinaryOp::Or => match a.eval(model)? {
                    Value::Bool(true) => Value::Bool(true),
                    Value::Bool(false) => b.eval(model)?,
                    _ => return Err(EvalError::Type("bad || operand".into())),
                },
                _ => match (a.eval(model)?, b.eval(model)?) {
                    (Value::Int(x), Value::Int(y)) => apply_int(*op, x, y)?,
                    _ => return Err(EvalError::Type("bad binary operands".into())),
                },
            },
        })
    }

    /// Inputs referenced by the expression.
    pub fn inputs(&self, out: &mut BTreeSet<usize>) {
        match self {
            SymExpr::Input(s) => {
                out.insert(s.id);
            }
            SymExpr::Unary(_, e) => e.inputs(out),
            SymExpr::Binary(_, a, b) => {
                a.inputs(out);
                b.inputs(out);
            }
            SymExpr::Int(_) | SymExpr::Bool(_) => {}
        }
    }
}

fn apply_int(op: BinaryOp, x: i64, y: i64) -> Result<Value, EvalError> {
    let int = |r: Option<i64>| r.map(Value::Int).ok_or(EvalError::Overflow);
    Ok(match op {
        BinaryOp::Add => int(x.checked_add(y))?,
        BinaryOp::Sub => int(x.checked_sub(y))?,
        BinaryOp::Mul => int(x.checked_mul(y))?,
        BinaryOp::Eq => Value::Bool(x == y),
        BinaryOp::Ne => Value::Bool(x != y),
        BinaryOp::Lt => Value::Bool(x < y),
        BinaryOp::Le => Value::Bool(x <= y),
        BinaryOp::Gt => Value::Bool(x > y),
        BinaryOp::Ge => Value::Bool(x >= y),
        BinaryOp::And | BinaryOp::Or => return Err(EvalError::Type("logical operator on integers".into())),
    })
}

impl std::ops::Not for SymExpr {
    type Output = SymExpr;

    fn not(self) -> SymExpr {
        SymExpr::unary(UnaryOp::Not, self).expect("negating a non-boolean expression")
    }
}

impl fmt::Display for SymExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SymExpr::Int(n) => write!(f, "{n}"),
            SymExpr::Bool(b) => write!(f, "{b}"),
            SymExpr::Input(s) => write!(f, "{}", s.name),
            SymExpr::Unary(UnaryOp::Neg, e) => write!(f, "-{e}"),
            SymExpr::Unary(UnaryOp::Not, e) => write!(f, "!{e}"),
            SymExpr::Binary(op, a, b) => write!(f, "({a} {} {b})", op.symbol()),
        }
    }
}

/// Ordered conjunction of boolean constraints. Append-only along a path.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct PathCondition {
    conjuncts: Vec<SymExpr>,
}

impl PathCondition {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_conjuncts(conjuncts: Vec<SymExpr>) -> Self {
        PathCondition { conjuncts }
    }

    pub fn conjuncts(&self) -> &[SymExpr] {
        &self.conjuncts
    }

    pub fn len(&self) -> usize {
        self.conjuncts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.conjuncts.is_empty()
    }

    pub fn push(&mut self, c: SymExpr) {
        debug_assert_eq!(c.sort(), Sort::Bool);
        self.conjuncts.push(c);
    }

    /// `self ∧ c` as a new condition.
    pub fn and(&self, c: SymExpr) -> PathCondition {
        let mut pc = self.clone();
        pc.push(c);
        pc
    }

    pub fn is_prefix_of(&self, other: &PathCondition) -> bool {
        other.conjuncts.starts_with(&self.conjuncts)
    }

    /// True when every conjunct evaluates to true under `model`.
    pub fn holds(&self, model: &[i64]) -> Result<bool, EvalError> {
        for c in &self.conjuncts {
            if c.eval(model)? != Value::Bool(true) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

impl fmt::Display for PathCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.conjuncts.is_empty() {
            return write!(f, "true");
        }
        for (i, c) in self.conjuncts.iter().enumerate() {
            if i > 0 {
                write!(f, " && ")?;
            }
            write!(f, "{c}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Status {
    Active,
    Inactive,
    Exited,
}

/// The communication a sleeping process is waiting on.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Blocked {
    /// Payload is evaluated when the send is issued; the sender cannot change
    /// it while it waits.
    Send {
        dest: Rank,
        payload: SymExpr,
    },
    Recv {
        src: Rank,
    },
    RecvAny,
    Barrier,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProcState {
    pub rank: Rank,
    /// Index into [`Code::instrs`]; `code.end()` once the process is done.
    pub cursor: usize,
    pub env: BTreeMap<String, SymExpr>,
    pub status: Status,
    pub blocked_on: Option<Blocked>,
}

impl ProcState {
    pub fn is_active(&self) -> bool {
        self.status == Status::Active
    }

    pub fn is_inactive(&self) -> bool {
        self.status == Status::Inactive
    }

    pub fn is_exited(&self) -> bool {
        self.status == Status::Exited
    }
}

/// Where a path ended up.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Verdict {
    Running,
    Terminated,
    Deadlock,
    AssertFail {
        rank: Rank,
        loc: usize,
    },
    /// The path cannot be analysed further (non-constant rank, overflow, ...).
    Error(String),
}

impl Verdict {
    pub fn is_terminal(&self) -> bool {
        !matches!(self, Verdict::Running)
    }

    /// Deadlocks and assertion failures.
    pub fn is_bug(&self) -> bool {
        matches!(self, Verdict::Deadlock | Verdict::AssertFail { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Verdict::Running => "running",
            Verdict::Terminated => "terminated",
            Verdict::Deadlock => "deadlock",
            Verdict::AssertFail { .. } => "assertfail",
            Verdict::Error(_) => "error",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::Running => write!(f, "Running"),
            Verdict::Terminated => write!(f, "Terminated"),
            Verdict::Deadlock => write!(f, "Deadlock"),
            Verdict::AssertFail { rank, loc } => write!(f, "AssertFail(P{rank} @{loc})"),
            Verdict::Error(msg) => write!(f, "Error({msg})"),
        }
    }
}

/// One global action on a path. Every event is exactly one transition of
/// the composed system, so the event count is the path length.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum TraceEvent {
    /// A local statement (assignment, assertion or `exit`) of `rank`.
    Step {
        rank: Rank,
        loc: usize,
    },
    Match {
        sender: Rank,
        receiver: Rank,
        wildcard: bool,
    },
    BarrierRelease {
        epoch: u32,
    },
    BranchChoice {
        rank: Rank,
        loc: usize,
        taken: bool,
    },
}

impl TraceEvent {
    /// Whether `rank` takes part in the event.
    pub fn involves(&self, rank: Rank) -> bool {
        match *self {
            TraceEvent::Step { rank: r, .. } | TraceEvent::BranchChoice { rank: r, .. } => r == rank,
            TraceEvent::Match { sender, receiver, .. } => sender == rank || receiver == rank,
            TraceEvent::BarrierRelease { .. } => true,
        }
    }
}

impl fmt::Display for TraceEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TraceEvent::Step { rank, loc } => write!(f, "step P{rank} @{loc}"),
            TraceEvent::Match { sender, receiver, wildcard } => {
                write!(f, "match P{sender} -> P{receiver}")?;
                if *wildcard {
                    write!(f, " (wildcard)")?;
                }
                Ok(())
            }
            TraceEvent::BarrierRelease { epoch } => write!(f, "barrier #{epoch}"),
            TraceEvent::BranchChoice { rank, loc, taken } => {
                write!(f, "branch P{rank} @{loc} {}", if *taken { "then" } else { "else" })
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TraceEntry {
    /// Global step index of the expansion that produced the event.
    pub at: u64,
    pub event: TraceEvent,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct ScheduleTrace {
    entries: Vec<TraceEntry>,
}

impl ScheduleTrace {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_entries(entries: Vec<TraceEntry>) -> Self {
        ScheduleTrace { entries }
    }

    pub fn push(&mut self, at: u64, event: TraceEvent) {
        debug_assert!(self.entries.last().is_none_or(|e| e.at <= at));
        self.entries.push(TraceEntry { at, event });
    }

    pub fn entries(&self) -> &[TraceEntry] {
        &self.entries
    }

    pub fn events(&self) -> impl Iterator<Item = &TraceEvent> {
        self.entries.iter().map(|e| &e.event)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GlobalState {
    /// Indexed by rank.
    pub procs: Vec<ProcState>,
    pub pc: PathCondition,
    pub next_proc_candidate: Option<Rank>,
    /// Ranks that have not yet reached the open barrier; `None` when no
    /// barrier epoch is open.
    pub barrier_pending: Option<BTreeSet<Rank>>,
    /// Number of barriers released so far on this path.
    pub barrier_epoch: u32,
    pub trace: ScheduleTrace,
    pub verdict: Verdict,
    /// Expansions performed along this path.
    pub steps: u64,
}

impl GlobalState {
    pub fn nprocs(&self) -> usize {
        self.procs.len()
    }

    pub fn ranks_with(&self, status: Status) -> impl Iterator<Item = Rank> + '_ {
        self.procs.iter().filter(move |p| p.status == status).map(|p| p.rank)
    }

    pub fn all_exited(&self) -> bool {
        self.procs.iter().all(ProcState::is_exited)
    }

    pub fn any_active(&self) -> bool {
        self.procs.iter().any(ProcState::is_active)
    }

    pub fn push_event(&mut self, event: TraceEvent) {
        self.trace.push(self.steps, event);
    }
}

/// Initial state: every process active at its first statement, `PC = true`.
pub fn init_state(code: &Code, nprocs: usize) -> GlobalState {
    let procs = (0..nprocs)
        .map(|rank| ProcState {
            rank,
            cursor: 0,
            env: BTreeMap::new(),
            status: if code.is_empty() { Status::Exited } else { Status::Active },
            blocked_on: None,
        })
        .collect();
    GlobalState {
        procs,
        pc: PathCondition::new(),
        next_proc_candidate: None,
        barrier_pending: None,
        barrier_epoch: 0,
        trace: ScheduleTrace::new(),
        verdict: Verdict::Running,
        steps: 0,
    }
}

/// An independent copy of `s`.
pub fn fork(s: &GlobalState) -> GlobalState {
    s.clone()
}

/// Resolves `Expr` references for one process.
pub fn eval_expr(
    ps: &ProcState,
    nprocs: usize,
    inputs: &[crate::lang::SymDecl],
    e: &Expr,
) -> Result<SymExpr, EvalError> {
    Ok(match e {
        Expr::Int(n) => SymExpr::Int(*n),
        Expr::Char(c) => SymExpr::Int(*c as i64),
        Expr::Rank => SymExpr::Int(ps.rank as i64),
        Expr::NProcs => SymExpr::Int(nprocs as i64),
        Expr::Var(v) => ps.env.get(v).cloned().ok_or_else(|| EvalError::Unbound(v.clone()))?,
        Expr::Input(name) => {
            let id =
                inputs.iter().position(|d| &d.name == name).ok_or_else(|| EvalError::UndeclaredInput(name.clone()))?;
            SymExpr::input(id, name)
        }
        Expr::Unary(op, inner) => SymExpr::unary(*op, eval_expr(ps, nprocs, inputs, inner)?)?,
        Expr::Binary(op, a, b) => {
            let a = eval_expr(ps, nprocs, inputs, a)?;
            // Short-circuit: a decided left operand makes the right one
            // irrelevant, even if it could not be evaluated.
            match (op, &a) {
                (BinaryOp::And, SymExpr::Bool(false)) => return Ok(SymExpr::Bool(false)),
                (BinaryOp::Or, SymExpr::Bool(true)) => return Ok(SymExpr::Bool(true)),
                _ => {}
            }
            SymExpr::binary(*op, a, eval_expr(ps, nprocs, inputs, b)?)?
        }
    })
}

/// `PC := PC ∧ c`. Satisfiability is the caller's concern.
pub fn assume(mut s: GlobalState, c: SymExpr) -> GlobalState {
    s.pc.push(c);
    s
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransferError {
    #[error("P{sender} is not sending to P{receiver}")]
    NotSending { sender: Rank, receiver: Rank },
    #[error("P{receiver} is not receiving from P{sender}")]
    NotReceiving { sender: Rank, receiver: Rank },
}

/// Completes a rendezvous: binds the receiver's variable to the sender's
/// payload, advances both and makes both active.
///
/// Both processes must already record the operation in `blocked_on`; the
/// executing side sets it just before calling this.
pub fn match_transfer(
    s: &mut GlobalState,
    code: &Code,
    sender: Rank,
    receiver: Rank,
    wildcard: bool,
) -> Result<(), TransferError> {
    let payload = match &s.procs[sender].blocked_on {
        Some(Blocked::Send { dest, payload }) if *dest == receiver => payload.clone(),
        _ => return Err(TransferError::NotSending { sender, receiver }),
    };
    let ok = match s.procs[receiver].blocked_on {
        Some(Blocked::Recv { src }) => src == sender && !wildcard,
        Some(Blocked::RecvAny) => wildcard,
        _ => false,
    };
    let var = match code.get(s.procs[receiver].cursor).map(|i| &i.op) {
        Some(Op::Recv { var, src }) if ok && matches!(src, Source::Any) == wildcard => var.clone(),
        _ => return Err(TransferError::NotReceiving { sender, receiver }),
    };
    s.procs[receiver].env.insert(var, payload);
    for r in [sender, receiver] {
        s.procs[r].blocked_on = None;
        s.procs[r].status = Status::Active;
    }
    s.push_event(TraceEvent::Match { sender, receiver, wildcard });
    advance(s, code, &[sender, receiver]);
    Ok(())
}

/// Moves each listed process to its next statement; a process moving past
/// the end of the body exits.
pub fn advance(s: &mut GlobalState, code: &Code, ranks: &[Rank]) {
    for &r in ranks {
        let p = &mut s.procs[r];
        debug_assert!(p.cursor < code.end());
        p.cursor = code.instrs[p.cursor].next;
        if p.cursor >= code.end() {
            p.cursor = code.end();
            p.status = Status::Exited;
            p.blocked_on = None;
        }
    }
}

/// Moves a process to `target` (taken branch).
pub fn jump(s: &mut GlobalState, code: &Code, rank: Rank, target: usize) {
    let p = &mut s.procs[rank];
    p.cursor = target;
    if target >= code.end() {
        p.cursor = code.end();
        p.status = Status::Exited;
    }
}
