use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use mpisym::corpus::{load_corpus, load_corpus_dir, run_entry, CorpusError};
use mpisym::oracle::{check_theorem, sample_models, OracleError};
use mpisym::replay::{file_name, replay, save_testcase, ReplayError, TestCase};
use mpisym::report::{render, render_compare, serialize, RenderOptions};
use mpisym::{parse_program, validate, Engine, Model, Program, SearchStrategy, Strategy};

const EXIT_ERROR: u8 = 1;
const EXIT_FOUND: u8 = 2;
const EXIT_BOUND: u8 = 3;
const DEFAULT_ORACLE_BOUND: u64 = 1_000_000;

#[derive(Parser)]
#[command(name = "mpisym", version, about = "Symbolic deadlock detection for message-passing programs")]
struct Cli {
    /// More output: -v adds detail blocks, -vv full traces.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Explore every path of a program and report deadlocks.
    Analyze {
        /// Program source file.
        program: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[command(flatten)]
        search: SearchArgs,
        /// Write report.txt and one test case per path into this directory.
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Re-execute a saved test case.
    Replay {
        /// Program source file.
        program: PathBuf,
        /// Test case written by `analyze --out`.
        testcase: PathBuf,
    },
    /// Check the engine against the full-interleaving oracle.
    Compare {
        /// Program source file.
        program: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Check the first K distinct input models instead of --set.
        #[arg(long, value_name = "K")]
        enumerate_models: Option<usize>,
        /// State bound for both sides.
        #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
        max_states: Option<u64>,
    },
    /// Analyse every corpus entry and compare with its manifest.
    Corpus {
        /// Corpus directory; the bundled corpus when omitted.
        dir: Option<PathBuf>,
        #[command(flatten)]
        search: SearchArgs,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Process count; defaults to the program's own.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    nprocs: Option<u64>,
    /// Fix a symbolic input, e.g. --set X=97.
    #[arg(long = "set", value_name = "NAME=VALUE", value_parser = parse_assignment)]
    set: Vec<(String, i64)>,
}

#[derive(Args)]
struct SearchArgs {
    /// Worklist order.
    #[arg(long, value_enum, default_value_t = StrategyArg::Dfs)]
    strategy: StrategyArg,
    /// Stop after creating this many states.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    max_states: Option<u64>,
    /// Cut off paths longer than this many steps.
    #[arg(long, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    max_depth: Option<u64>,
}

impl SearchArgs {
    fn strategy(&self) -> SearchStrategy {
        SearchStrategy {
            order: match self.strategy {
                StrategyArg::Dfs => Strategy::Dfs,
                StrategyArg::Bfs => Strategy::Bfs,
            },
            max_states: self.max_states,
            max_depth: self.max_depth,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Dfs,
    Bfs,
}

fn parse_assignment(s: &str) -> Result<(String, i64), String> {
    let (name, value) = s.split_once('=').ok_or("expected NAME=VALUE")?;
    let value = value.trim();
    let value = match value.strip_prefix('\'').and_then(|v| v.strip_suffix('\'')) {
        Some(c) if c.chars().count() == 1 => c.chars().next().unwrap() as i64,
        _ => value.parse().map_err(|_| format!("`{value}` is not an integer"))?,
    };
    Ok((name.trim().to_string(), value))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_ERROR } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    let opts = RenderOptions { detail: cli.verbose >= 1, full_trace: cli.verbose >= 2 };
    match cli.command {
        Command::Analyze { program, run, search, out } => analyze(&program, &run, &search, out.as_deref(), opts),
        Command::Replay { program, testcase } => cmd_replay(&program, &testcase),
        Command::Compare { program, run, enumerate_models, max_states } => {
            compare(&program, &run, enumerate_models, max_states.unwrap_or(DEFAULT_ORACLE_BOUND))
        }
        Command::Corpus { dir, search } => corpus(dir.as_deref(), &search),
    }
}

fn load_program(path: &Path) -> Result<Program> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    parse_program(&text).map_err(|e| anyhow::anyhow!("{}:{e}", path.display()))
}

/// Parses, picks the process count and validates.
fn prepare(path: &Path, run: &RunArgs) -> Result<(Program, usize)> {
    let p = load_program(path)?;
    let nprocs = run.nprocs.map(|n| n as usize).unwrap_or_else(|| p.default_nprocs());
    let report = validate(&p, nprocs);
    if !report.is_ok() {
        for f in &report.findings {
            eprintln!("{}:{f}", path.display());
        }
        bail!("{} finding(s) in {}", report.findings.len(), path.display());
    }
    Ok((p, nprocs))
}

/// The `--set` assignments as a model, checked against the declarations.
fn assignments(p: &Program, set: &[(String, i64)], complete: bool) -> Result<Model> {
    let mut seen = BTreeSet::new();
    for (name, v) in set {
        let Some(d) = p.decl(name) else { bail!("`{name}` is not a declared symbolic input") };
        if *v < d.lo || *v > d.hi {
            bail!("{name}={v} is outside the domain {}..{}", d.lo, d.hi);
        }
        if !seen.insert(name.as_str()) {
            bail!("`{name}` is set twice");
        }
    }
    let mut names = Vec::new();
    let mut values = Vec::new();
    for d in &p.decls {
        match set.iter().find(|(n, _)| *n == d.name) {
            Some((_, v)) => {
                names.push(d.name.clone());
                values.push(*v);
            }
            None if complete => bail!("no value given for symbolic input `{}`", d.name),
            None => {}
        }
    }
    Ok(Model::new(names, values))
}

fn analyze(path: &Path, run: &RunArgs, search: &SearchArgs, out: Option<&Path>, opts: RenderOptions) -> Result<u8> {
    let (p, nprocs) = prepare(path, run)?;
    let pinned = assignments(&p, &run.set, false)?;
    let engine = Engine::new(&p, nprocs)?.pin(&pinned);
    let report = engine.search(search.strategy())?;
    print!("{}", render(&report, opts));
    if report.truncated > 0 {
        eprintln!("warning: {} path(s) cut off by search bounds", report.truncated);
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
        fs::write(dir.join("report.txt"), serialize(&report))?;
        for (i, rec) in report.paths.iter().enumerate() {
            save_testcase(rec, &p, nprocs).save(&dir.join(file_name(i)))?;
        }
        println!("wrote {} test case(s) to {}", report.paths.len(), dir.display());
    }
    Ok(if report.has_bug() {
        EXIT_FOUND
    } else if report.has_error() {
        EXIT_ERROR
    } else {
        0
    })
}

fn cmd_replay(program: &Path, testcase: &Path) -> Result<u8> {
    let p = load_program(program)?;
    let tc = TestCase::load(testcase).with_context(|| format!("cannot load {}", testcase.display()))?;
    let r = match replay(&p, &tc) {
        Ok(r) => r,
        Err(e @ ReplayError::HashMismatch { .. }) => bail!("{e}"),
        Err(e) => return Err(e.into()),
    };
    if let Some(d) = &r.divergence {
        println!("divergence at {d}");
    }
    match (&r.verdict, r.reproduced()) {
        (Some(v), true) => {
            println!("{v} reproduced");
            Ok(0)
        }
        (Some(v), false) => {
            println!("expected {}, got {v}", tc.verdict);
            Ok(EXIT_FOUND)
        }
        (None, _) => {
            println!("expected {}, run did not reach an end state", tc.verdict);
            Ok(EXIT_FOUND)
        }
    }
}

fn compare(path: &Path, run: &RunArgs, enumerate: Option<usize>, bound: u64) -> Result<u8> {
    let (p, nprocs) = prepare(path, run)?;
    let models = if let Some(k) = enumerate {
        if !run.set.is_empty() {
            bail!("--set and --enumerate-models are mutually exclusive");
        }
        sample_models(&p, nprocs, k)?
    } else if p.decls.is_empty() || !run.set.is_empty() {
        vec![assignments(&p, &run.set, true)?]
    } else {
        bail!("the program has symbolic inputs; give --set NAME=VALUE or --enumerate-models K");
    };
    let mut all_pass = true;
    for m in &models {
        match check_theorem(&p, nprocs, m, bound as usize) {
            Ok(v) => {
                print!("{}", render_compare(&v));
                all_pass &= v.holds();
            }
            Err(OracleError::BoundExceeded(n)) => {
                eprintln!("error: state bound of {n} exceeded for model {m}");
                return Ok(EXIT_BOUND);
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok(if all_pass { 0 } else { EXIT_FOUND })
}

/// The first `k` distinct models attached to engine paths, topped up with
/// further solver models when there are fewer paths than `k`.
fn corpus(dir: Option<&Path>, search: &SearchArgs) -> Result<u8> {
    let entries = match dir {
        Some(d) => load_corpus_dir(d),
        None => load_corpus(),
    };
    let entries = match entries {
        Ok(e) => e,
        Err(CorpusError::Empty) => bail!("corpus is empty"),
        Err(e) => return Err(e.into()),
    };
    let yn = |b: bool| if b { "yes" } else { "no" };
    let mut mismatches = 0;
    println!("{:<22} {:>2}  {:<14} {:<14} {:>5} {:>9}  result", "entry", "n", "expected", "observed", "paths", "time");
    for e in &entries {
        let out = run_entry(e, search.strategy());
        let expected = format!("dl={} af={}", yn(e.expected.deadlock), yn(e.expected.assertfail));
        let (observed, paths) = match &out.result {
            Ok(r) => (
                format!("dl={} af={}", yn(r.counts.deadlock > 0), yn(r.counts.assertfail > 0)),
                r.paths.len().to_string(),
            ),
            Err(msg) => {
                eprintln!("{}: {msg}", e.name);
                ("error".to_string(), "-".to_string())
            }
        };
        let ok = out.matches();
        mismatches += usize::from(!ok);
        println!(
            "{:<22} {:>2}  {:<14} {:<14} {:>5} {:>7.1}ms  {}",
            e.name,
            e.nprocs,
            expected,
            observed,
            paths,
            out.elapsed.as_secs_f64() * 1e3,
            if ok { "match" } else { "MISMATCH" }
        );
    }
    println!("{} entries, {} mismatch(es)", entries.len(), mismatches);
    Ok(if mismatches == 0 { 0 } else { EXIT_FOUND })
}
