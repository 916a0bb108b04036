//! Byte-for-byte checks of the report and test-case formats. Set
//! `MPISYM_BLESS=1` to rewrite the expected files.

use std::fs;
use std::path::PathBuf;

use mpisym::corpus::load_corpus;
use mpisym::replay::{replay, save_testcase, TestCase};
use mpisym::report::serialize;
use mpisym::symstate::Verdict;
use mpisym::{search, Program, SearchStrategy};

fn golden(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name);
    if std::env::var_os("MPISYM_BLESS").is_some() {
        fs::write(&path, actual).unwrap();
        return;
    }
    let expected = fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(actual, expected, "{name} differs; rerun with MPISYM_BLESS=1 to accept");
}

fn entry(name: &str) -> (Program, usize) {
    let e = load_corpus().unwrap().into_iter().find(|e| e.name == name).unwrap();
    (e.program().unwrap(), e.nprocs)
}

#[test]
fn motivating_report() {
    let (p, n) = entry("fig1-motivating");
    golden("fig1-motivating.report", &serialize(&search(&p, n, SearchStrategy::dfs()).unwrap()));
}

#[test]
fn eager_report_bfs() {
    let (p, n) = entry("fig4b-eager");
    golden("fig4b-eager-bfs.report", &serialize(&search(&p, n, SearchStrategy::bfs()).unwrap()));
}

#[test]
fn motivating_deadlock_testcase() {
    let (p, n) = entry("fig1-motivating");
    let r = search(&p, n, SearchStrategy::dfs()).unwrap();
    let rec = r.paths.iter().find(|p| p.verdict == Verdict::Deadlock).unwrap();
    let text = save_testcase(rec, &p, n).to_text();
    golden("fig1-motivating-deadlock.testcase", &text);
    let tc = TestCase::parse(&text).unwrap();
    assert!(replay(&p, &tc).unwrap().reproduced());
}

#[test]
fn assertion_testcase() {
    let (p, n) = entry("assert-guard");
    let r = search(&p, n, SearchStrategy::dfs()).unwrap();
    let rec = r.paths.iter().find(|p| matches!(p.verdict, Verdict::AssertFail { .. })).unwrap();
    golden("assert-guard-fail.testcase", &save_testcase(rec, &p, n).to_text());
}
