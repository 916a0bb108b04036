//! Symbolic execution and deadlock detection for a small language of
//! synchronous message-passing programs.
//!
//! The pipeline is: [`lang`] parses and lowers a program, [`engine`] explores
//! every input class and wildcard match choice with on-the-fly scheduling,
//! [`oracle`] enumerates all interleavings of a concrete run as ground truth,
//! [`replay`] re-executes recorded paths and [`report`] renders results.

pub mod corpus;
pub mod engine;
pub mod lang;
pub mod oracle;
pub mod replay;
pub mod report;
pub mod solver;
pub mod symstate;

pub use engine::{search, AnalysisReport, Engine, PathRecord, SearchStrategy, Strategy};
pub use lang::{parse_program, pretty_print, validate, Program};
pub use solver::{Model, Solver};
pub use symstate::{Rank, Verdict};
