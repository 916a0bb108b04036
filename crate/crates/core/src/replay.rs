//! Portable test cases and their deterministic re-execution.
//!
//! A test case stores the input model and the schedule of one explored path.
//! Replay runs the program concretely and drives the schedule from the
//! recorded events instead of a scheduler, checking at each event that the
//! recorded action is actually possible.

use std::fmt::{self, Write as _};
use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use crate::engine::PathRecord;
use crate::lang::{lower, Op, Program};
use crate::oracle::{Applied, ConcreteState, GlobalAction, Loc, Machine, OracleError};
use crate::solver::Model;
use crate::symstate::{ScheduleTrace, TraceEntry, TraceEvent, Value, Verdict};

pub const HEADER: &str = "mpisym-testcase v1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TestCase {
    pub program_hash: String,
    pub nprocs: usize,
    pub model: Model,
    pub trace: ScheduleTrace,
    pub verdict: Verdict,
}

pub fn save_testcase(rec: &PathRecord, p: &Program, nprocs: usize) -> TestCase {
    TestCase {
        program_hash: p.hash(),
        nprocs,
        model: rec.model.clone(),
        trace: rec.trace.clone(),
        verdict: rec.verdict.clone(),
    }
}

/// File name for the `index`-th path of a run.
pub fn file_name(index: usize) -> String {
    format!("path-{index:03}.testcase")
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("line {line}: {message}")]
    Format { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn format_err(line: usize, message: impl Into<String>) -> LoadError {
    LoadError::Format { line, message: message.into() }
}

impl TestCase {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{HEADER}");
        let _ = writeln!(out, "program {}", self.program_hash);
        let _ = writeln!(out, "nprocs {}", self.nprocs);
        out.push_str("INPUT\n");
        for (name, v) in self.model.iter() {
            let _ = writeln!(out, "{name}={v}");
        }
        out.push_str("TRACE\n");
        for e in self.trace.entries() {
            let _ = writeln!(out, "{}", encode_entry(e));
        }
        out.push_str("VERDICT\n");
        let _ = writeln!(out, "{}", encode_verdict(&self.verdict));
        out
    }

    pub fn parse(text: &str) -> Result<TestCase, LoadError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |what: &str| lines.next().ok_or_else(|| format_err(0, format!("missing {what}")));

        let (n, header) = next("header")?;
        if header != HEADER {
            return Err(format_err(n, format!("expected `{HEADER}`")));
        }
        let (n, line) = next("program hash")?;
        let program_hash =
            line.strip_prefix("program ").ok_or_else(|| format_err(n, "expected `program <hash>`"))?.to_string();
        let (n, line) = next("process count")?;
        let nprocs = line
            .strip_prefix("nprocs ")
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| format_err(n, "expected `nprocs <N>`"))?;
        let (n, line) = next("INPUT")?;
        if line != "INPUT" {
            return Err(format_err(n, "expected INPUT"));
        }

        let (mut names, mut values) = (Vec::new(), Vec::new());
        let mut entries = Vec::new();
        let mut in_trace = false;
        loop {
            let (n, line) = next("VERDICT")?;
            if line == "TRACE" && !in_trace {
                in_trace = true;
                continue;
            }
            if line == "VERDICT" {
                if !in_trace {
                    return Err(format_err(n, "expected TRACE before VERDICT"));
                }
                break;
            }
            if !in_trace {
                let (name, v) = line.split_once('=').ok_or_else(|| format_err(n, "expected NAME=VALUE"))?;
                names.push(name.to_string());
                values.push(v.parse().map_err(|_| format_err(n, "bad input value"))?);
            } else {
                entries.push(parse_event(line).ok_or_else(|| format_err(n, format!("bad trace event `{line}`")))?);
            }
        }
        let (n, line) = next("verdict")?;
        let verdict = parse_verdict(line).ok_or_else(|| format_err(n, format!("bad verdict `{line}`")))?;
        if let Some((n, extra)) = lines.find(|(_, l)| !l.is_empty()) {
            return Err(format_err(n, format!("unexpected `{extra}`")));
        }
        Ok(TestCase {
            program_hash,
            nprocs,
            model: Model::new(names, values),
            trace: ScheduleTrace::from_entries(entries),
            verdict,
        })
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        fs::write(path, self.to_text())
    }

    pub fn load(path: &Path) -> Result<TestCase, LoadError> {
        TestCase::parse(&fs::read_to_string(path)?)
    }
}

/// One trace entry as a line: `<at> step <rank> <loc>`,
/// `<at> branch <rank> <loc> true|false`, `<at> match <sender> <receiver>
/// exact|wildcard` or `<at> barrier <epoch>`.
pub fn encode_entry(e: &TraceEntry) -> String {
    let at = e.at;
    match &e.event {
        TraceEvent::Step { rank, loc } => format!("{at} step {rank} {loc}"),
        TraceEvent::BranchChoice { rank, loc, taken } => format!("{at} branch {rank} {loc} {taken}"),
        TraceEvent::Match { sender, receiver, wildcard } => {
            format!("{at} match {sender} {receiver} {}", if *wildcard { "wildcard" } else { "exact" })
        }
        TraceEvent::BarrierRelease { epoch } => format!("{at} barrier {epoch}"),
    }
}

/// `terminated`, `deadlock`, `assertfail <rank> <loc>` or `error <message>`.
pub fn encode_verdict(v: &Verdict) -> String {
    match v {
        Verdict::AssertFail { rank, loc } => format!("assertfail {rank} {loc}"),
        Verdict::Error(msg) => format!("error {}", msg.replace('\n', " ")),
        v => v.name().to_string(),
    }
}

fn parse_event(line: &str) -> Option<TraceEntry> {
    let f: Vec<&str> = line.split(' ').collect();
    let num = |i: usize| f.get(i)?.parse::<usize>().ok();
    let at = f.first()?.parse().ok()?;
    let event = match (f.get(1).copied()?, f.len()) {
        ("step", 4) => TraceEvent::Step { rank: num(2)?, loc: num(3)? },
        ("branch", 5) => TraceEvent::BranchChoice { rank: num(2)?, loc: num(3)?, taken: f[4].parse().ok()? },
        ("match", 5) => TraceEvent::Match {
            sender: num(2)?,
            receiver: num(3)?,
            wildcard: match f[4] {
                "wildcard" => true,
                "exact" => false,
                _ => return None,
            },
        },
        ("barrier", 3) => TraceEvent::BarrierRelease { epoch: f[2].parse().ok()? },
        _ => return None,
    };
    Some(TraceEntry { at, event })
}

fn parse_verdict(line: &str) -> Option<Verdict> {
    let mut f = line.splitn(2, ' ');
    Some(match (f.next()?, f.next()) {
        ("terminated", None) => Verdict::Terminated,
        ("deadlock", None) => Verdict::Deadlock,
        ("assertfail", Some(rest)) => {
            let (r, l) = rest.split_once(' ')?;
            Verdict::AssertFail { rank: r.parse().ok()?, loc: l.parse().ok()? }
        }
        ("error", Some(msg)) => Verdict::Error(msg.to_string()),
        _ => return None,
    })
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("program hash {found} does not match the test case ({expected})")]
    HashMismatch { expected: String, found: String },
    #[error(transparent)]
    Machine(#[from] OracleError),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Divergence {
    /// Index of the first event that could not be followed.
    pub index: usize,
    pub expected: String,
    pub observed: String,
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "event {}: expected {}, observed {}", self.index, self.expected, self.observed)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayResult {
    /// The verdict reached, or `None` if the run stopped before an end state.
    pub verdict: Option<Verdict>,
    pub expected: Verdict,
    pub divergence: Option<Divergence>,
    pub final_state: ConcreteState,
}

impl ReplayResult {
    pub fn reproduced(&self) -> bool {
        self.divergence.is_none() && self.verdict.as_ref().is_some_and(|v| same_verdict(v, &self.expected))
    }
}

/// Error messages are not compared; the kinds are.
fn same_verdict(a: &Verdict, b: &Verdict) -> bool {
    match (a, b) {
        (Verdict::Error(_), Verdict::Error(_)) => true,
        _ => a == b,
    }
}

pub fn replay(p: &Program, tc: &TestCase) -> Result<ReplayResult, ReplayError> {
    let found = p.hash();
    if found != tc.program_hash {
        return Err(ReplayError::HashMismatch { expected: tc.program_hash.clone(), found });
    }
    let code = lower(p);
    let m = Machine::new(&code, tc.nprocs, &tc.model)?;
    let mut s = m.initial();
    let events: Vec<&TraceEvent> = tc.trace.events().collect();
    let diverge = |s: ConcreteState, index: usize, expected: String, observed: String| ReplayResult {
        verdict: None,
        expected: tc.verdict.clone(),
        divergence: Some(Divergence { index, expected, observed }),
        final_state: s,
    };

    for (k, ev) in events.iter().enumerate() {
        let enabled = m.enabled(&s);
        let action = match **ev {
            TraceEvent::Step { rank, loc } | TraceEvent::BranchChoice { rank, loc, .. } => {
                let here = s.procs.get(rank).map(|p| p.loc.clone());
                if here != Some(Loc::At(loc)) {
                    let observed = match here {
                        Some(Loc::At(l)) => format!("P{rank} at {l}"),
                        Some(Loc::Exited) => format!("P{rank} exited"),
                        None => format!("no process P{rank}"),
                    };
                    return Ok(diverge(s, k, ev.to_string(), observed));
                }
                let op = &code.instrs[loc].op;
                let is_branch = matches!(op, Op::Branch { .. });
                if is_branch != matches!(ev, TraceEvent::BranchChoice { .. }) || op.is_communication() {
                    return Ok(diverge(s, k, ev.to_string(), format!("P{rank} at {}", describe(op))));
                }
                if let (TraceEvent::BranchChoice { taken, .. }, Op::Branch { cond, .. }) = (ev, op) {
                    let observed = m.eval(rank, &s.procs[rank].env, cond);
                    if observed != Ok(Value::Bool(*taken)) {
                        let observed = match observed {
                            Ok(v) => format!("condition {v}"),
                            Err(e) => e.to_string(),
                        };
                        return Ok(diverge(s, k, ev.to_string(), observed));
                    }
                }
                GlobalAction::Local(rank)
            }
            TraceEvent::Match { sender, receiver, wildcard } => {
                if wildcard {
                    GlobalAction::SRstar { sender, receiver }
                } else {
                    GlobalAction::SR { sender, receiver }
                }
            }
            TraceEvent::BarrierRelease { .. } => GlobalAction::B,
        };
        if !enabled.contains(&action) {
            let observed: Vec<String> = enabled.iter().map(ToString::to_string).collect();
            return Ok(diverge(s, k, ev.to_string(), format!("enabled {{{}}}", observed.join(", "))));
        }
        match m.apply(&s, action)? {
            Applied::Next(t) => s = t,
            Applied::Fault(v) => {
                if k + 1 < events.len() {
                    return Ok(diverge(s, k + 1, events[k + 1].to_string(), format!("run ended with {v}")));
                }
                return Ok(ReplayResult {
                    verdict: Some(v),
                    expected: tc.verdict.clone(),
                    divergence: None,
                    final_state: s,
                });
            }
        }
    }

    let enabled = m.enabled(&s);
    let verdict = if m.all_exited(&s) {
        Some(Verdict::Terminated)
    } else if enabled.is_empty() {
        Some(Verdict::Deadlock)
    } else {
        // A path that ended in an analysis error stops just before the
        // faulting statement.
        enabled.iter().filter(|a| matches!(a, GlobalAction::Local(_))).find_map(|a| match m.apply(&s, *a) {
            Ok(Applied::Fault(v @ Verdict::Error(_))) => Some(v),
            _ => None,
        })
    };
    Ok(ReplayResult { verdict, expected: tc.verdict.clone(), divergence: None, final_state: s })
}

fn describe(op: &Op) -> &'static str {
    match op {
        Op::Assign { .. } => "an assignment",
        Op::Branch { .. } => "a branch",
        Op::Send { .. } => "a send",
        Op::Recv { .. } => "a receive",
        Op::Barrier => "a barrier",
        Op::Assert(_) => "an assertion",
        Op::Exit => "an exit",
    }
}
