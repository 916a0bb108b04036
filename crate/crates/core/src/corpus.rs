//! Bundled example programs with their expected verdicts.
//!
//! A corpus directory holds `<name>.mpisym` sources and a `manifest` with one
//! line per entry: `name nprocs deadlock=yes|no assertfail=yes|no notes...`.
//! Lines starting with `#` are comments.

use std::fs;
use std::io;
use std::path::Path;
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::engine::{search, AnalysisReport, EngineError, SearchStrategy};
use crate::lang::{parse_program, validate, ParseError, Program};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Expectation {
    pub deadlock: bool,
    pub assertfail: bool,
    pub notes: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CorpusEntry {
    pub name: String,
    pub source: String,
    pub nprocs: usize,
    pub expected: Expectation,
}

impl CorpusEntry {
    pub fn program(&self) -> Result<Program, ParseError> {
        parse_program(&self.source)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("no source for corpus entry `{0}`")]
    MissingSource(String),
    #[error("corpus has no entries")]
    Empty,
    #[error(transparent)]
    Io(#[from] io::Error),
}

const MANIFEST: &str = include_str!("../corpus/manifest");

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../corpus/", $name, ".mpisym")))),*]
    };
}

const SOURCES: &[(&str, &str)] = bundled![
    "fig1-motivating",
    "fig4a-blind",
    "fig4b-eager",
    "fig6-multi-wildcard",
    "barrier-deadlock",
    "head-to-head",
    "rr-deadlock",
    "recv-any-deadlock",
    "cond-bcast",
    "collect-misorder",
    "waitall-multi-recv",
    "basic-deadlock",
    "ctrl-pipeline",
    "ctrl-exchange",
    "assert-guard",
];

/// The bundled corpus, in manifest order.
pub fn load_corpus() -> Result<Vec<CorpusEntry>, CorpusError> {
    build(MANIFEST, |name| {
        SOURCES
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, src)| src.to_string())
            .ok_or_else(|| CorpusError::MissingSource(name.into()))
    })
}

/// Reads a corpus directory laid out like the bundled one.
pub fn load_corpus_dir(dir: &Path) -> Result<Vec<CorpusEntry>, CorpusError> {
    let manifest = match fs::read_to_string(dir.join("manifest")) {
        Ok(m) => m,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(CorpusError::Empty),
        Err(e) => return Err(e.into()),
    };
    build(&manifest, |name| {
        fs::read_to_string(dir.join(format!("{name}.mpisym"))).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => CorpusError::MissingSource(name.into()),
            _ => e.into(),
        })
    })
}

fn build(
    manifest: &str,
    mut source: impl FnMut(&str) -> Result<String, CorpusError>,
) -> Result<Vec<CorpusEntry>, CorpusError> {
    let entries = parse_manifest(manifest)?
        .into_iter()
        .map(|(name, nprocs, expected)| Ok(CorpusEntry { source: source(&name)?, name, nprocs, expected }))
        .collect::<Result<Vec<_>, CorpusError>>()?;
    if entries.is_empty() {
        return Err(CorpusError::Empty);
    }
    Ok(entries)
}

pub fn parse_manifest(text: &str) -> Result<Vec<(String, usize, Expectation)>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: &str| CorpusError::Manifest { line: i + 1, message: message.into() };
        let mut fields = line.splitn(5, ' ');
        let name = fields.next().ok_or_else(|| err("missing name"))?.to_string();
        let nprocs = fields
            .next()
            .and_then(|n| n.parse().ok())
            .filter(|&n: &usize| n > 0)
            .ok_or_else(|| err("bad process count"))?;
        let flag = |field: Option<&str>, key: &str| -> Result<bool, CorpusError> {
            match field.and_then(|f| f.strip_prefix(key)).and_then(|f| f.strip_prefix('=')) {
                Some("yes") => Ok(true),
                Some("no") => Ok(false),
                _ => Err(err(&format!("expected `{key}=yes|no`"))),
            }
        };
        let deadlock = flag(fields.next(), "deadlock")?;
        let assertfail = flag(fields.next(), "assertfail")?;
        let notes = fields.next().unwrap_or("").to_string();
        out.push((name, nprocs, Expectation { deadlock, assertfail, notes }));
    }
    Ok(out)
}

/// The outcome of analysing one entry.
#[derive(Debug)]
pub struct EntryOutcome {
    pub name: String,
    pub expected: Expectation,
    /// `Err` when the entry does not parse, validate or analyse.
    pub result: Result<AnalysisReport, String>,
    pub elapsed: Duration,
}

impl EntryOutcome {
    pub fn deadlock_found(&self) -> Option<bool> {
        self.result.as_ref().ok().map(|r| r.counts.deadlock > 0)
    }

    pub fn assertfail_found(&self) -> Option<bool> {
        self.result.as_ref().ok().map(|r| r.counts.assertfail > 0)
    }

    pub fn matches(&self) -> bool {
        self.deadlock_found() == Some(self.expected.deadlock)
            && self.assertfail_found() == Some(self.expected.assertfail)
    }
}

pub fn run_entry(e: &CorpusEntry, strategy: SearchStrategy) -> EntryOutcome {
    let start = Instant::now();
    let result = (|| {
        let p = e.program().map_err(|err| err.to_string())?;
        let report = validate(&p, e.nprocs);
        if !report.is_ok() {
            return Err(report.to_string().trim_end().to_string());
        }
        search(&p, e.nprocs, strategy).map_err(|err: EngineError| err.to_string())
    })();
    EntryOutcome { name: e.name.clone(), expected: e.expected.clone(), result, elapsed: start.elapsed() }
}
