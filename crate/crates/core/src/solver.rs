//! Bounded-domain constraint solver.
//!
//! Inputs range over small inclusive integer intervals. Atomic bounds such
//! as `X < 5` narrow each interval first; the remaining product is searched
//! by backtracking in declaration order with values ascending, so the first
//! model found is the lexicographically smallest one.

use std::cell::Cell;
use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

use crate::lang::{BinaryOp, SymDecl};
use crate::symstate::{EvalError, PathCondition, SymExpr, Value};

/// Upper bound on candidate assignments examined by one query.
pub const DEFAULT_BUDGET: u64 = 1 << 28;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Domain {
    pub name: String,
    pub lo: i64,
    pub hi: i64,
}

impl Domain {
    pub fn width(&self) -> u64 {
        (self.hi as i128 - self.lo as i128 + 1).max(0) as u64
    }
}

/// Domains indexed by input declaration order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Domains(pub Vec<Domain>);

impl Domains {
    pub fn from_decls(decls: &[SymDecl]) -> Self {
        Domains(decls.iter().map(|d| Domain { name: d.name.clone(), lo: d.lo, hi: d.hi }).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.0.iter().position(|d| d.name == name)
    }
}

/// A concrete value for every declared input.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Model {
    pub names: Vec<String>,
    pub values: Vec<i64>,
}

impl Model {
    pub fn new(names: Vec<String>, values: Vec<i64>) -> Self {
        assert_eq!(names.len(), values.len());
        Model { names, values }
    }

    pub fn get(&self, name: &str) -> Option<i64> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, i64)> {
        self.names.iter().map(String::as_str).zip(self.values.iter().copied())
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.values.is_empty() {
            return write!(f, "(none)");
        }
        for (i, (n, v)) in self.iter().enumerate() {
            if i > 0 {
                write!(f, " ")?;
            }
            write!(f, "{n}={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SolverError {
    #[error("undeclared symbolic input `{0}`")]
    Undeclared(String),
    #[error("path condition is unsatisfiable")]
    Unsat,
    #[error("search budget of {0} assignments exhausted")]
    Budget(u64),
    #[error("ill-typed constraint: {0}")]
    Eval(EvalError),
}

pub struct Solver {
    domains: Domains,
    budget: u64,
    queries: Cell<u64>,
}

impl Solver {
    pub fn new(domains: Domains) -> Self {
        Solver { domains, budget: DEFAULT_BUDGET, queries: Cell::new(0) }
    }

    pub fn with_budget(mut self, budget: u64) -> Self {
        self.budget = budget;
        self
    }

    pub fn domains(&self) -> &Domains {
        &self.domains
    }

    /// Number of queries answered so far.
    pub fn queries(&self) -> u64 {
        self.queries.get()
    }

    pub fn is_sat(&self, pc: &PathCondition) -> Result<bool, SolverError> {
        Ok(self.first_model(pc.conjuncts())?.is_some())
    }

    /// The lexicographically smallest model of `pc`.
    pub fn get_model(&self, pc: &PathCondition) -> Result<Model, SolverError> {
        let values = self.first_model(pc.conjuncts())?.ok_or(SolverError::Unsat)?;
        Ok(self.model(values))
    }

    /// `Some(v)` iff `e` evaluates to `v` under every model of `pc`.
    pub fn check_entailed_constant(&self, pc: &PathCondition, e: &SymExpr) -> Result<Option<i64>, SolverError> {
        if let Some(v) = e.as_int() {
            if !self.is_sat(pc)? {
                return Err(SolverError::Unsat);
            }
            return Ok(Some(v));
        }
        let values = self.first_model(pc.conjuncts())?.ok_or(SolverError::Unsat)?;
        let v = match e.eval(&values).map_err(SolverError::Eval)? {
            Value::Int(v) => v,
            Value::Bool(_) => return Err(SolverError::Eval(EvalError::Type("expected integer".into()))),
        };
        let other = SymExpr::binary(BinaryOp::Ne, e.clone(), SymExpr::Int(v)).map_err(SolverError::Eval)?;
        Ok(if self.is_sat(&pc.and(other))? { None } else { Some(v) })
    }

    /// Up to `limit` distinct models of `pc`, in lexicographic order.
    pub fn models(&self, pc: &PathCondition, limit: usize) -> Result<Vec<Model>, SolverError> {
        let mut out = Vec::new();
        let mut pc = pc.clone();
        while out.len() < limit {
            let Some(values) = self.first_model(pc.conjuncts())? else { break };
            pc.push(self.exclude(&values)?);
            out.push(self.model(values));
        }
        Ok(out)
    }

    fn exclude(&self, values: &[i64]) -> Result<SymExpr, SolverError> {
        let mut acc = SymExpr::Bool(false);
        for (id, (d, v)) in self.domains.0.iter().zip(values).enumerate() {
            let ne = SymExpr::binary(BinaryOp::Ne, SymExpr::input(id, &d.name), SymExpr::Int(*v));
            acc = SymExpr::binary(BinaryOp::Or, acc, ne.map_err(SolverError::Eval)?).map_err(SolverError::Eval)?;
        }
        Ok(acc)
    }

    fn model(&self, values: Vec<i64>) -> Model {
        Model::new(self.domains.0.iter().map(|d| d.name.clone()).collect(), values)
    }

    fn first_model(&self, conjuncts: &[SymExpr]) -> Result<Option<Vec<i64>>, SolverError> {
        self.queries.set(self.queries.get() + 1);
        let n = self.domains.len();
        let mut flat = Vec::new();
        for c in conjuncts {
            flatten(c, &mut flat);
        }

        let mut lo: Vec<i64> = self.domains.0.iter().map(|d| d.lo).collect();
        let mut hi: Vec<i64> = self.domains.0.iter().map(|d| d.hi).collect();
        // Conjuncts grouped by the highest input they mention.
        let mut by_var: Vec<Vec<&SymExpr>> = vec![Vec::new(); n];
        let mut used = vec![false; n];
        for c in &flat {
            match c {
                SymExpr::Bool(true) => continue,
                SymExpr::Bool(false) => return Ok(None),
                _ => {}
            }
            let mut ids = BTreeSet::new();
            c.inputs(&mut ids);
            if let Some(&bad) = ids.iter().find(|&&id| id >= n) {
                return Err(SolverError::Undeclared(input_name(c, bad)));
            }
            if let Some((id, op, k)) = atomic_bound(c) {
                narrow(&mut lo[id], &mut hi[id], op, k);
            }
            for &id in &ids {
                used[id] = true;
            }
            match ids.last() {
                Some(&top) => by_var[top].push(c),
                None => {
                    if !holds_all(&[c], &[])? {
                        return Ok(None);
                    }
                }
            }
        }
        if (0..n).any(|i| lo[i] > hi[i]) {
            return Ok(None);
        }

        let mut values = lo.clone();
        let mut spent = 0u64;
        let bounds = Bounds { lo: &lo, hi: &hi, used: &used };
        let found = self.search(0, &by_var, &bounds, &mut values, &mut spent)?;
        Ok(found.then_some(values))
    }

    fn search(
        &self,
        var: usize,
        by_var: &[Vec<&SymExpr>],
        b: &Bounds<'_>,
        values: &mut Vec<i64>,
        spent: &mut u64,
    ) -> Result<bool, SolverError> {
        if var == values.len() {
            return Ok(true);
        }
        // An input no constraint mentions stays at its lower bound.
        if !b.used[var] {
            values[var] = b.lo[var];
            return self.search(var + 1, by_var, b, values, spent);
        }
        let mut v = b.lo[var];
        loop {
            *spent += 1;
            if *spent > self.budget {
                return Err(SolverError::Budget(self.budget));
            }
            values[var] = v;
            if holds_all(&by_var[var], values)? && self.search(var + 1, by_var, b, values, spent)? {
                return Ok(true);
            }
            if v == b.hi[var] {
                return Ok(false);
            }
            v += 1;
        }
    }
}

struct Bounds<'a> {
    lo: &'a [i64],
    hi: &'a [i64],
    used: &'a [bool],
}

fn holds_all(cs: &[&SymExpr], values: &[i64]) -> Result<bool, SolverError> {
    for c in cs {
        match c.eval(values) {
            Ok(Value::Bool(true)) => {}
            Ok(Value::Bool(false)) | Err(EvalError::Overflow) => return Ok(false),
            Ok(Value::Int(_)) => return Err(SolverError::Eval(EvalError::Type("integer constraint".into()))),
            Err(e) => return Err(SolverError::Eval(e)),
        }
    }
    Ok(true)
}

fn flatten<'a>(c: &'a SymExpr, out: &mut Vec<&'a SymExpr>) {
    match c {
        SymExpr::Binary(BinaryOp::And, a, b) => {
            flatten(a, out);
            flatten(b, out);
        }
        _ => out.push(c),
    }
}

fn input_name(c: &SymExpr, id: usize) -> String {
    match c {
        SymExpr::Input(s) if s.id == id => s.name.to_string(),
        SymExpr::Unary(_, e) => input_name(e, id),
        SymExpr::Binary(_, a, b) => {
            let n = input_name(a, id);
            if n.is_empty() {
                input_name(b, id)
            } else {
                n
            }
        }
        _ => String::new(),
    }
}

/// Recognises `X op k` and `k op X`.
fn atomic_bound(c: &SymExpr) -> Option<(usize, BinaryOp, i64)> {
    let SymExpr::Binary(op, a, b) = c else { return None };
    if !op.is_comparison() {
        return None;
    }
    match (&**a, &**b) {
        (SymExpr::Input(s), SymExpr::Int(k)) => Some((s.id, *op, *k)),
        (SymExpr::Int(k), SymExpr::Input(s)) => Some((s.id, op.flipped_comparison()?, *k)),
        _ => None,
    }
}

fn narrow(lo: &mut i64, hi: &mut i64, op: BinaryOp, k: i64) {
    match op {
        BinaryOp::Eq => {
            *lo = (*lo).max(k);
            *hi = (*hi).min(k);
        }
        BinaryOp::Ne => {
            if *lo == k && *lo < *hi {
                *lo += 1;
            } else if *hi == k && *lo < *hi {
                *hi -= 1;
            } else if *lo == k && *hi == k {
                // Empty; any lo > hi works.
                *lo = 1;
                *hi = 0;
            }
        }
        BinaryOp::Lt => match k.checked_sub(1) {
            Some(m) => *hi = (*hi).min(m),
            None => {
                *lo = 1;
                *hi = 0;
            }
        },
        BinaryOp::Le => *hi = (*hi).min(k),
        BinaryOp::Gt => match k.checked_add(1) {
            Some(m) => *lo = (*lo).max(m),
            None => {
                *lo = 1;
                *hi = 0;
            }
        },
        BinaryOp::Ge => *lo = (*lo).max(k),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn byte(names: &[&str]) -> Solver {
        Solver::new(Domains(names.iter().map(|n| Domain { name: n.to_string(), lo: 0, hi: 255 }).collect()))
    }

    fn var(id: usize, name: &str) -> SymExpr {
        SymExpr::input(id, name)
    }

    fn cmp(op: BinaryOp, a: SymExpr, b: SymExpr) -> SymExpr {
        SymExpr::binary(op, a, b).unwrap()
    }

    fn pc(cs: Vec<SymExpr>) -> PathCondition {
        PathCondition::from_conjuncts(cs)
    }

    #[test]
    fn is_sat_examples() {
        let s = byte(&["X"]);
        let x = || var(0, "X");
        assert!(s.is_sat(&pc(vec![cmp(BinaryOp::Eq, x(), SymExpr::Int(97))])).unwrap());
        assert!(!s
            .is_sat(&pc(vec![cmp(BinaryOp::Eq, x(), SymExpr::Int(97)), cmp(BinaryOp::Ne, x(), SymExpr::Int(97)),]))
            .unwrap());
    }

    #[test]
    fn sum_and_order_matches_enumeration() {
        let s = byte(&["X", "Y"]);
        let (x, y) = (var(0, "X"), var(1, "Y"));
        let sum = cmp(BinaryOp::Add, x.clone(), y.clone());
        let p = pc(vec![cmp(BinaryOp::Eq, sum, SymExpr::Int(5)), cmp(BinaryOp::Gt, x, y)]);
        let mut expected = None;
        'outer: for a in 0..=255i64 {
            for b in 0..=255i64 {
                if a + b == 5 && a > b {
                    expected = Some(vec![a, b]);
                    break 'outer;
                }
            }
        }
        let m = s.get_model(&p).unwrap();
        assert_eq!(Some(m.values.clone()), expected);
        assert_eq!(m.values, vec![3, 2]);
        assert!(p.holds(&m.values).unwrap());
    }

    #[test]
    fn get_model_examples() {
        let s = byte(&["X"]);
        let x = || var(0, "X");
        assert_eq!(s.get_model(&PathCondition::new()).unwrap().values, vec![0]);
        assert_eq!(s.get_model(&pc(vec![cmp(BinaryOp::Eq, x(), SymExpr::Int(97))])).unwrap().values, vec![97]);
        let p = pc(vec![cmp(BinaryOp::Ne, x(), SymExpr::Int(0)), cmp(BinaryOp::Lt, x(), SymExpr::Int(5))]);
        assert_eq!(s.get_model(&p).unwrap().values, vec![1]);
        let unsat = pc(vec![cmp(BinaryOp::Lt, x(), SymExpr::Int(0))]);
        assert_eq!(s.get_model(&unsat), Err(SolverError::Unsat));
    }

    #[test]
    fn entailed_constant_examples() {
        let s = byte(&["X"]);
        let x = || var(0, "X");
        let p = pc(vec![cmp(BinaryOp::Eq, x(), SymExpr::Int(3))]);
        let e = cmp(BinaryOp::Add, x(), SymExpr::Int(1));
        assert_eq!(s.check_entailed_constant(&p, &e).unwrap(), Some(4));
        assert_eq!(s.check_entailed_constant(&PathCondition::new(), &x()).unwrap(), None);
        let p = pc(vec![cmp(BinaryOp::Lt, x(), SymExpr::Int(2)), cmp(BinaryOp::Gt, x(), SymExpr::Int(0))]);
        assert_eq!(s.check_entailed_constant(&p, &x()).unwrap(), Some(1));
        let unsat = pc(vec![SymExpr::Bool(false)]);
        assert_eq!(s.check_entailed_constant(&unsat, &x()), Err(SolverError::Unsat));
    }

    #[test]
    fn undeclared_and_budget() {
        let s = byte(&["X"]);
        let y = var(1, "Y");
        let p = pc(vec![cmp(BinaryOp::Eq, y, SymExpr::Int(1))]);
        assert_eq!(s.is_sat(&p), Err(SolverError::Undeclared("Y".into())));

        let s = byte(&["X", "Y"]).with_budget(100);
        let p = pc(vec![cmp(BinaryOp::Eq, cmp(BinaryOp::Mul, var(0, "X"), var(1, "Y")), SymExpr::Int(-1))]);
        assert_eq!(s.is_sat(&p), Err(SolverError::Budget(100)));
    }

    #[test]
    fn model_enumeration_and_queries() {
        let s = byte(&["X"]);
        let p = pc(vec![cmp(BinaryOp::Lt, var(0, "X"), SymExpr::Int(3))]);
        let ms = s.models(&p, 5).unwrap();
        assert_eq!(ms.iter().map(|m| m.values[0]).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(s.queries() >= 4);
        assert_eq!(ms[2].to_string(), "X=2");
    }

    #[test]
    fn unreferenced_inputs_take_lower_bound() {
        let s = Solver::new(Domains(vec![
            Domain { name: "A".into(), lo: 3, hi: 9 },
            Domain { name: "B".into(), lo: -2, hi: 2 },
        ]));
        let p = pc(vec![cmp(BinaryOp::Eq, var(1, "B"), SymExpr::Int(1))]);
        assert_eq!(s.get_model(&p).unwrap().values, vec![3, 1]);
    }
}
