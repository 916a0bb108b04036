//! Text rendering of analysis results.

use std::fmt::Write as _;

use crate::engine::{AnalysisReport, PathRecord, VerdictCounts};
use crate::oracle::TheoremCheck;
use crate::replay::{encode_entry, encode_verdict};
use crate::symstate::{Blocked, ProcState, Status, Verdict};

/// Number of trailing events shown in a detail block.
pub const TRACE_TAIL: usize = 8;

pub const REPORT_HEADER: &str = "mpisym-report v1";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RenderOptions {
    /// Detail blocks for deadlock and assertion-failure paths.
    pub detail: bool,
    /// Show whole traces in detail blocks instead of the tail.
    pub full_trace: bool,
}

/// Nonzero verdict counts, e.g. `paths=3 terminated=2 deadlock=1`.
pub fn summary_line(c: &VerdictCounts) -> String {
    let mut s = format!("paths={}", c.total());
    for (name, n) in
        [("terminated", c.terminated), ("deadlock", c.deadlock), ("assertfail", c.assertfail), ("error", c.error)]
    {
        if n > 0 {
            let _ = write!(s, " {name}={n}");
        }
    }
    s
}

pub fn render(r: &AnalysisReport, opts: RenderOptions) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{}", summary_line(&r.counts));
    let _ = writeln!(
        out,
        "states={} steps={} solver_queries={}{}",
        r.states_created,
        r.steps,
        r.solver_queries,
        if r.truncated > 0 { format!(" truncated={}", r.truncated) } else { String::new() }
    );
    for (i, p) in r.paths.iter().enumerate() {
        let _ =
            writeln!(out, "  #{i} {:<11} pc: {}  model: {}  events={}", p.verdict.name(), p.pc, p.model, p.trace.len());
    }
    if opts.detail {
        for (i, p) in r.paths.iter().enumerate().filter(|(_, p)| p.verdict.is_bug()) {
            out.push('\n');
            detail_block(&mut out, i, p, opts.full_trace);
        }
    }
    let _ = writeln!(out, "time: {:.3}ms", r.elapsed.as_secs_f64() * 1e3);
    out
}

fn detail_block(out: &mut String, index: usize, p: &PathRecord, full: bool) {
    let _ = writeln!(out, "path #{index}: {}", p.verdict);
    let _ = writeln!(out, "  pc: {}", p.pc);
    let _ = writeln!(out, "  model: {}", p.model);
    let _ = writeln!(out, "  processes:");
    for proc in &p.procs {
        let _ = writeln!(out, "    {}", describe_proc(proc));
    }
    let entries = p.trace.entries();
    let skip = if full { 0 } else { entries.len().saturating_sub(TRACE_TAIL) };
    if skip > 0 {
        let _ = writeln!(out, "  trace (last {} of {}):", entries.len() - skip, entries.len());
    } else {
        let _ = writeln!(out, "  trace ({} events):", entries.len());
    }
    for e in &entries[skip..] {
        let _ = writeln!(out, "    [{}] {}", e.at, e.event);
    }
}

pub fn describe_proc(p: &ProcState) -> String {
    let r = p.rank;
    match (p.status, &p.blocked_on) {
        (Status::Exited, _) => format!("P{r} exited"),
        (Status::Active, _) => format!("P{r} @{} active", p.cursor),
        (Status::Inactive, Some(b)) => format!(
            "P{r} @{} blocked on {}",
            p.cursor,
            match b {
                Blocked::Send { dest, payload } => format!("send {payload} to P{dest}"),
                Blocked::Recv { src } => format!("recv from P{src}"),
                Blocked::RecvAny => "recv from any".to_string(),
                Blocked::Barrier => "barrier".to_string(),
            }
        ),
        (Status::Inactive, None) => format!("P{r} @{} inactive", p.cursor),
    }
}

pub fn render_compare(v: &TheoremCheck) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "THEOREM-CHECK {} model: {}", if v.holds() { "PASS" } else { "FAIL" }, v.model);
    let _ = writeln!(
        out,
        "  deadlocked terminals: engine={} oracle={}",
        v.engine_deadlocks.len(),
        v.oracle_deadlocks.len()
    );
    let _ = writeln!(out, "  states: engine={} oracle={}", v.engine_states, v.oracle_states);
    if !v.reachability_agrees() {
        let yn = |b: bool| if b { "yes" } else { "no" };
        let _ = writeln!(
            out,
            "  deadlock reachable: engine={} oracle={}",
            yn(!v.engine_deadlocks.is_empty()),
            yn(!v.oracle_deadlocks.is_empty())
        );
    }
    for s in v.only_engine() {
        let _ = writeln!(out, "  only in engine: {s}");
    }
    for s in v.only_oracle() {
        let _ = writeln!(out, "  only in oracle: {s}");
    }
    for m in &v.length_mismatches {
        let lens: Vec<String> = m.oracle_lens.iter().map(ToString::to_string).collect();
        let _ = writeln!(out, "  path length: {} engine={} oracle={{{}}}", m.state, m.engine_len, lens.join(", "));
    }
    out
}

/// Stable machine-readable form of a report; wall time is omitted.
pub fn serialize(r: &AnalysisReport) -> String {
    let mut out = String::new();
    let c = &r.counts;
    let _ = writeln!(out, "{REPORT_HEADER}");
    let _ = writeln!(out, "program {}", r.program_hash);
    let _ = writeln!(out, "nprocs {}", r.nprocs);
    let _ = writeln!(out, "strategy {}", r.strategy.order);
    let _ = writeln!(
        out,
        "counts paths={} terminated={} deadlock={} assertfail={} error={}",
        c.total(),
        c.terminated,
        c.deadlock,
        c.assertfail,
        c.error
    );
    let _ = writeln!(out, "states_created {}", r.states_created);
    let _ = writeln!(out, "steps {}", r.steps);
    let _ = writeln!(out, "solver_queries {}", r.solver_queries);
    let _ = writeln!(out, "truncated {}", r.truncated);
    for (i, p) in r.paths.iter().enumerate() {
        let _ = writeln!(out, "path {i}");
        let _ = writeln!(out, "verdict {}", encode_verdict(&p.verdict));
        for c in p.pc.conjuncts() {
            let _ = writeln!(out, "pc {c}");
        }
        let _ = writeln!(out, "model{}", p.model.iter().map(|(n, v)| format!(" {n}={v}")).collect::<String>());
        let _ = writeln!(out, "trace {}", p.trace.len());
        for e in p.trace.entries() {
            let _ = writeln!(out, "{}", encode_entry(e));
        }
        let _ = writeln!(out, "end");
    }
    out
}

/// Short label for a verdict in tables.
pub fn verdict_label(v: &Verdict) -> &'static str {
    match v {
        Verdict::Deadlock => "DEADLOCK",
        Verdict::AssertFail { .. } => "ASSERTFAIL",
        Verdict::Error(_) => "ERROR",
        Verdict::Terminated => "ok",
        Verdict::Running => "running",
    }
}
