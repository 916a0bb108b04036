//! Worklist symbolic execution with on-the-fly scheduling.
//!
//! One process runs at a time. It keeps running until it blocks on an
//! unmatched communication; the scheduler then prefers the partner it was
//! waiting for, falling back to the smallest active rank. Wildcard receives
//! are never matched eagerly: their sender is chosen only once every process
//! is blocked, by forking one successor per feasible (receiver, sender) pair.

use std::collections::{BTreeSet, VecDeque};
use std::fmt;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::lang::{BinaryOp, Code, Op, Program, Source};
use crate::solver::{Domains, Model, Solver, SolverError};
use crate::symstate::{
    advance, eval_expr, init_state, jump, match_transfer, Blocked, GlobalState, PathCondition, ProcState, Rank,
    ScheduleTrace, Status, SymExpr, TraceEvent, Verdict,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    #[default]
    Dfs,
    Bfs,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Dfs => "dfs",
            Strategy::Bfs => "bfs",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SearchStrategy {
    pub order: Strategy,
    /// Stop creating states once this many exist.
    pub max_states: Option<u64>,
    /// Abandon paths longer than this many expansions.
    pub max_depth: Option<u64>,
}

impl SearchStrategy {
    pub fn dfs() -> Self {
        SearchStrategy::default()
    }

    pub fn bfs() -> Self {
        SearchStrategy { order: Strategy::Bfs, ..Default::default() }
    }
}

#[derive(Debug)]
pub enum ScheduleOutcome {
    Run(Rank),
    /// One successor per wildcard match, each already carrying its match.
    ForkedWildcard(Vec<GlobalState>),
    Deadlock,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("state is not running")]
    NotRunning,
    #[error("P{0} is not active")]
    NotActive(Rank),
    #[error("process count must be at least 1")]
    NoProcesses,
    #[error(transparent)]
    Solver(#[from] SolverError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PathRecord {
    pub verdict: Verdict,
    pub pc: PathCondition,
    pub model: Model,
    pub trace: ScheduleTrace,
    /// Expansions along the path.
    pub steps: u64,
    /// Process states at the end of the path.
    pub procs: Vec<ProcState>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct VerdictCounts {
    pub terminated: usize,
    pub deadlock: usize,
    pub assertfail: usize,
    pub error: usize,
}

impl VerdictCounts {
    pub fn tally<'a>(verdicts: impl IntoIterator<Item = &'a Verdict>) -> Self {
        let mut c = VerdictCounts::default();
        for v in verdicts {
            match v {
                Verdict::Terminated => c.terminated += 1,
                Verdict::Deadlock => c.deadlock += 1,
                Verdict::AssertFail { .. } => c.assertfail += 1,
                Verdict::Error(_) => c.error += 1,
                Verdict::Running => {}
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.terminated + self.deadlock + self.assertfail + self.error
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalysisReport {
    pub program_hash: String,
    pub nprocs: usize,
    pub strategy: SearchStrategy,
    /// In discovery order.
    pub paths: Vec<PathRecord>,
    pub counts: VerdictCounts,
    /// The initial state plus every additional successor produced by a fork.
    pub states_created: u64,
    /// Expansions performed.
    pub steps: u64,
    pub solver_queries: u64,
    /// Paths abandoned because a bound was hit.
    pub truncated: u64,
    pub elapsed: Duration,
}

impl AnalysisReport {
    pub fn has_bug(&self) -> bool {
        self.paths.iter().any(|p| p.verdict.is_bug())
    }

    pub fn has_error(&self) -> bool {
        self.counts.error > 0
    }

    pub fn deadlocks(&self) -> impl Iterator<Item = &PathRecord> {
        self.paths.iter().filter(|p| p.verdict == Verdict::Deadlock)
    }
}

/// A program lowered for a fixed process count, together with its solver.
pub struct Engine {
    code: Code,
    nprocs: usize,
    solver: Solver,
    assumptions: Vec<SymExpr>,
    hash: String,
    #[cfg(debug_assertions)]
    checker: Solver,
}

impl Engine {
    pub fn new(p: &Program, nprocs: usize) -> Result<Self, EngineError> {
        if nprocs == 0 {
            return Err(EngineError::NoProcesses);
        }
        let code = crate::lang::lower(p);
        let domains = Domains::from_decls(&code.decls);
        Ok(Engine {
            nprocs,
            solver: Solver::new(domains.clone()),
            #[cfg(debug_assertions)]
            checker: Solver::new(domains),
            assumptions: Vec::new(),
            hash: p.hash(),
            code,
        })
    }

    /// Restricts the search to paths whose inputs equal `model`.
    pub fn pin(mut self, model: &Model) -> Self {
        for (name, v) in model.iter() {
            if let Some(id) = self.solver.domains().index_of(name) {
                let c = SymExpr::binary(BinaryOp::Eq, SymExpr::input(id, name), SymExpr::Int(v))
                    .expect("integer comparison");
                self.assumptions.push(c);
            }
        }
        self
    }

    /// Adds an arbitrary initial constraint.
    pub fn assume(mut self, c: SymExpr) -> Self {
        self.assumptions.push(c);
        self
    }

    pub fn code(&self) -> &Code {
        &self.code
    }

    pub fn nprocs(&self) -> usize {
        self.nprocs
    }

    pub fn solver(&self) -> &Solver {
        &self.solver
    }

    pub fn initial_state(&self) -> GlobalState {
        let mut s = init_state(&self.code, self.nprocs);
        for c in &self.assumptions {
            s.pc.push(c.clone());
        }
        s
    }

    /// Decides what to do with a running state.
    pub fn scheduler(&self, s: &mut GlobalState) -> Result<ScheduleOutcome, EngineError> {
        if s.verdict != Verdict::Running || s.all_exited() {
            return Err(EngineError::NotRunning);
        }
        if let Some(c) = s.next_proc_candidate {
            if s.procs[c].is_active() {
                s.next_proc_candidate = None;
                return Ok(ScheduleOutcome::Run(c));
            }
        }
        if let Some(p) = s.ranks_with(Status::Active).next() {
            return Ok(ScheduleOutcome::Run(p));
        }
        let pairs = wildcard_pairs(s);
        if !pairs.is_empty() {
            let mut succs = Vec::with_capacity(pairs.len());
            for (sender, receiver) in pairs {
                let mut t = s.clone();
                match_transfer(&mut t, &self.code, sender, receiver, true).expect("feasible wildcard pair");
                succs.push(t);
            }
            return Ok(ScheduleOutcome::ForkedWildcard(succs));
        }
        Ok(ScheduleOutcome::Deadlock)
    }

    /// Scheduler followed by one statement of the chosen process. Every
    /// returned state has had its step counter advanced.
    pub fn expand(&self, mut s: GlobalState) -> Result<Vec<GlobalState>, EngineError> {
        let mut succs = match self.scheduler(&mut s)? {
            ScheduleOutcome::Run(p) => self.se_step(s, p)?,
            ScheduleOutcome::ForkedWildcard(succs) => succs,
            ScheduleOutcome::Deadlock => {
                s.verdict = Verdict::Deadlock;
                vec![s]
            }
        };
        for t in &mut succs {
            t.steps += 1;
        }
        Ok(succs)
    }

    /// Executes the next statement of active process `p`.
    pub fn se_step(&self, s: GlobalState, p: Rank) -> Result<Vec<GlobalState>, EngineError> {
        if s.verdict != Verdict::Running {
            return Err(EngineError::NotRunning);
        }
        if !s.procs[p].is_active() {
            return Err(EngineError::NotActive(p));
        }
        match self.step_inner(s.clone(), p) {
            Ok(succs) => Ok(succs),
            Err(msg) => {
                let mut s = s;
                s.verdict = Verdict::Error(msg);
                Ok(vec![s])
            }
        }
    }

    fn eval(&self, s: &GlobalState, p: Rank, e: &crate::lang::Expr) -> Result<SymExpr, String> {
        eval_expr(&s.procs[p], self.nprocs, &self.code.decls, e).map_err(|e| format!("P{p}: {e}"))
    }

    fn sat(&self, pc: &PathCondition) -> Result<bool, String> {
        self.solver.is_sat(pc).map_err(|e| e.to_string())
    }

    /// Resolves a peer rank expression to a single valid rank.
    fn peer(&self, s: &GlobalState, p: Rank, e: &crate::lang::Expr, what: &str) -> Result<Rank, String> {
        let v = self.eval(s, p, e)?;
        let r = match v.as_int() {
            Some(r) => r,
            None => self
                .solver
                .check_entailed_constant(&s.pc, &v)
                .map_err(|e| e.to_string())?
                .ok_or_else(|| format!("P{p}: {what} rank `{v}` is not constant on this path"))?,
        };
        if r < 0 || r >= self.nprocs as i64 {
            return Err(format!("P{p}: {what} rank {r} is out of range"));
        }
        if r as usize == p {
            return Err(format!("P{p}: {what} rank is the process itself"));
        }
        Ok(r as usize)
    }

    fn step_inner(&self, mut s: GlobalState, p: Rank) -> Result<Vec<GlobalState>, String> {
        let loc = s.procs[p].cursor;
        let instr = &self.code.instrs[loc];
        match &instr.op {
            Op::Assign { var, value } => {
                let v = self.eval(&s, p, value)?;
                s.procs[p].env.insert(var.clone(), v);
                s.push_event(TraceEvent::Step { rank: p, loc });
                advance(&mut s, &self.code, &[p]);
                Ok(vec![s])
            }
            Op::Branch { cond, else_to } => {
                let c = self.eval(&s, p, cond)?;
                let (then_to, else_to) = (instr.next, *else_to);
                let take = |mut t: GlobalState, taken: bool| {
                    t.push_event(TraceEvent::BranchChoice { rank: p, loc, taken });
                    jump(&mut t, &self.code, p, if taken { then_to } else { else_to });
                    t
                };
                if let Some(b) = c.as_bool() {
                    return Ok(vec![take(s, b)]);
                }
                let mut out = Vec::with_capacity(2);
                for (taken, side) in [(true, c.clone()), (false, !c)] {
                    let pc = s.pc.and(side);
                    if self.sat(&pc)? {
                        let mut t = s.clone();
                        t.pc = pc;
                        out.push(take(t, taken));
                    }
                }
                Ok(out)
            }
            Op::Assert(e) => {
                let c = self.eval(&s, p, e)?;
                s.push_event(TraceEvent::Step { rank: p, loc });
                let fail = |mut t: GlobalState| {
                    t.verdict = Verdict::AssertFail { rank: p, loc };
                    t
                };
                match c.as_bool() {
                    Some(true) => {
                        advance(&mut s, &self.code, &[p]);
                        Ok(vec![s])
                    }
                    Some(false) => Ok(vec![fail(s)]),
                    None => {
                        let mut out = Vec::with_capacity(2);
                        let pass_pc = s.pc.and(c.clone());
                        if self.sat(&pass_pc)? {
                            let mut t = s.clone();
                            t.pc = pass_pc;
                            advance(&mut t, &self.code, &[p]);
                            out.push(t);
                        }
                        let fail_pc = s.pc.and(!c);
                        if self.sat(&fail_pc)? {
                            let mut t = s;
                            t.pc = fail_pc;
                            out.push(fail(t));
                        }
                        Ok(out)
                    }
                }
            }
            Op::Exit => {
                s.push_event(TraceEvent::Step { rank: p, loc });
                let proc = &mut s.procs[p];
                proc.cursor = self.code.end();
                proc.status = Status::Exited;
                Ok(vec![s])
            }
            Op::Send { payload, dest } => {
                let dest = self.peer(&s, p, dest, "destination")?;
                let payload = self.eval(&s, p, payload)?;
                s.procs[p].blocked_on = Some(Blocked::Send { dest, payload });
                let q = &s.procs[dest];
                if q.is_inactive() && q.blocked_on == Some(Blocked::Recv { src: p }) {
                    match_transfer(&mut s, &self.code, p, dest, false).map_err(|e| e.to_string())?;
                } else {
                    s.procs[p].status = Status::Inactive;
                    s.next_proc_candidate = Some(dest);
                }
                Ok(vec![s])
            }
            Op::Recv { src: Source::Any, .. } => {
                let proc = &mut s.procs[p];
                proc.blocked_on = Some(Blocked::RecvAny);
                proc.status = Status::Inactive;
                Ok(vec![s])
            }
            Op::Recv { src: Source::Rank(src), .. } => {
                let src = self.peer(&s, p, src, "source")?;
                s.procs[p].blocked_on = Some(Blocked::Recv { src });
                let q = &s.procs[src];
                let sending = matches!(&q.blocked_on, Some(Blocked::Send { dest, .. }) if *dest == p);
                if q.is_inactive() && sending {
                    match_transfer(&mut s, &self.code, src, p, false).map_err(|e| e.to_string())?;
                } else {
                    s.procs[p].status = Status::Inactive;
                    s.next_proc_candidate = Some(src);
                }
                Ok(vec![s])
            }
            Op::Barrier => {
                let pending = match s.barrier_pending.take() {
                    // Every rank takes part; an exited process never arrives.
                    None => (0..self.nprocs).filter(|&r| r != p).collect::<BTreeSet<_>>(),
                    Some(mut pending) => {
                        pending.remove(&p);
                        pending
                    }
                };
                if pending.is_empty() {
                    let all: Vec<Rank> = (0..self.nprocs).collect();
                    for proc in &mut s.procs {
                        proc.blocked_on = None;
                        proc.status = Status::Active;
                    }
                    let epoch = s.barrier_epoch;
                    s.push_event(TraceEvent::BarrierRelease { epoch });
                    s.barrier_epoch += 1;
                    advance(&mut s, &self.code, &all);
                } else {
                    let proc = &mut s.procs[p];
                    proc.blocked_on = Some(Blocked::Barrier);
                    proc.status = Status::Inactive;
                    s.barrier_pending = Some(pending);
                }
                Ok(vec![s])
            }
        }
    }

    /// Explores every path from the initial state.
    pub fn search(&self, strategy: SearchStrategy) -> Result<AnalysisReport, EngineError> {
        let start = Instant::now();
        let queries_before = self.solver.queries();
        let mut work = VecDeque::new();
        work.push_back(self.initial_state());
        let mut paths = Vec::new();
        let mut states_created = 1u64;
        let mut steps = 0u64;
        let mut truncated = 0u64;

        while let Some(s) = match strategy.order {
            Strategy::Dfs => work.pop_back(),
            Strategy::Bfs => work.pop_front(),
        } {
            if s.verdict == Verdict::Running && s.all_exited() {
                let mut s = s;
                s.verdict = Verdict::Terminated;
                paths.push(self.record(s)?);
                continue;
            }
            if s.verdict.is_terminal() {
                paths.push(self.record(s)?);
                continue;
            }
            if strategy.max_depth.is_some_and(|d| s.steps >= d) {
                truncated += 1;
                continue;
            }
            if strategy.max_states.is_some_and(|m| states_created >= m) {
                truncated += 1 + work.len() as u64;
                break;
            }
            let succs = self.expand(s)?;
            steps += 1;
            states_created += succs.len().saturating_sub(1) as u64;
            #[cfg(debug_assertions)]
            for t in &succs {
                debug_assert!(self.checker.is_sat(&t.pc).unwrap_or(false), "unsatisfiable state enqueued: {}", t.pc);
            }
            match strategy.order {
                Strategy::Dfs => work.extend(succs.into_iter().rev()),
                Strategy::Bfs => work.extend(succs),
            }
        }

        let counts = VerdictCounts::tally(paths.iter().map(|p: &PathRecord| &p.verdict));
        Ok(AnalysisReport {
            program_hash: self.hash.clone(),
            nprocs: self.nprocs,
            strategy,
            paths,
            counts,
            states_created,
            steps,
            solver_queries: self.solver.queries() - queries_before,
            truncated,
            elapsed: start.elapsed(),
        })
    }

    fn record(&self, s: GlobalState) -> Result<PathRecord, EngineError> {
        let model = self.solver.get_model(&s.pc)?;
        debug_assert!(s.pc.holds(&model.values).unwrap_or(false));
        Ok(PathRecord { verdict: s.verdict, pc: s.pc, model, trace: s.trace, steps: s.steps, procs: s.procs })
    }
}

/// Feasible wildcard matches: receivers ascending, then senders ascending.
pub fn wildcard_pairs(s: &GlobalState) -> Vec<(Rank, Rank)> {
    let mut pairs = Vec::new();
    for r in s.procs.iter().filter(|p| p.is_inactive() && p.blocked_on == Some(Blocked::RecvAny)) {
        for q in &s.procs {
            if q.is_inactive() && matches!(&q.blocked_on, Some(Blocked::Send { dest, .. }) if *dest == r.rank) {
                pairs.push((q.rank, r.rank));
            }
        }
    }
    pairs
}

/// Terminated, Deadlock or Running, read off the process states.
pub fn classify(s: &GlobalState) -> Verdict {
    if s.verdict.is_terminal() {
        return s.verdict.clone();
    }
    if s.all_exited() {
        Verdict::Terminated
    } else if !s.any_active() && wildcard_pairs(s).is_empty() {
        Verdict::Deadlock
    } else {
        Verdict::Running
    }
}

/// Explores `p` with `nprocs` processes.
pub fn search(p: &Program, nprocs: usize, strategy: SearchStrategy) -> Result<AnalysisReport, EngineError> {
    Engine::new(p, nprocs)?.search(strategy)
}
