//! Static checks run before analysis.

use std::collections::BTreeSet;
use std::fmt;

use super::{BinaryOp, Block, Expr, Program, Source, Span, StmtKind, UnaryOp};

/// Largest accepted `hi - lo + 1` for a symbolic input.
pub const DEFAULT_MAX_DOMAIN_WIDTH: u64 = 1 << 16;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FindingKind {
    OutOfRangeRank { value: i64, nprocs: usize },
    EmptyDomain { name: String },
    DomainTooWide { name: String, width: u64 },
    UseBeforeAssign { var: String },
    AssignToInput { name: String },
    Type { message: String },
    InvalidNprocs,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Finding {
    pub span: Span,
    pub kind: FindingKind,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ", self.span)?;
        match &self.kind {
            FindingKind::OutOfRangeRank { value, nprocs } => {
                write!(f, "rank {value} is out of range for {nprocs} processes")
            }
            FindingKind::EmptyDomain { name } => write!(f, "symbolic input `{name}` has an empty domain"),
            FindingKind::DomainTooWide { name, width } => {
                write!(f, "symbolic input `{name}` has domain width {width}, above the limit")
            }
            FindingKind::UseBeforeAssign { var } => {
                write!(f, "variable `{var}` may be used before it is assigned")
            }
            FindingKind::AssignToInput { name } => {
                write!(f, "symbolic input `{name}` cannot be assigned")
            }
            FindingKind::Type { message } => write!(f, "type error: {message}"),
            FindingKind::InvalidNprocs => write!(f, "process count must be at least 1"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.findings.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for finding in &self.findings {
            writeln!(f, "{finding}")?;
        }
        Ok(())
    }
}

/// Checks `p` for running with `nprocs` processes.
pub fn validate(p: &Program, nprocs: usize) -> ValidationReport {
    let mut v = Validator { nprocs, p, findings: Vec::new() };
    if nprocs == 0 {
        v.push(Span::default(), FindingKind::InvalidNprocs);
    }
    for d in &p.decls {
        if d.lo > d.hi {
            v.push(d.span, FindingKind::EmptyDomain { name: d.name.clone() });
        } else {
            let width = (d.hi as i128 - d.lo as i128 + 1) as u64;
            if width > DEFAULT_MAX_DOMAIN_WIDTH {
                v.push(d.span, FindingKind::DomainTooWide { name: d.name.clone(), width });
            }
        }
    }
    v.block(&p.body, Some(BTreeSet::new()));
    ValidationReport { findings: v.findings }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
enum Ty {
    Int,
    Bool,
}

struct Validator<'a> {
    nprocs: usize,
    p: &'a Program,
    findings: Vec<Finding>,
}

/// Definitely-assigned variables; `None` past an `exit` (unreachable).
type Assigned = Option<BTreeSet<String>>;

impl Validator<'_> {
    fn push(&mut self, span: Span, kind: FindingKind) {
        self.findings.push(Finding { span, kind });
    }

    fn block(&mut self, b: &Block, mut assigned: Assigned) -> Assigned {
        for s in &b.stmts {
            let span = s.span;
            match &s.kind {
                StmtKind::Assign { var, value } => {
                    self.expr_expect(value, Ty::Int, span, &assigned);
                    self.assign(var, span, &mut assigned);
                }
                StmtKind::If { cond, then_block, else_block } => {
                    self.expr_expect(cond, Ty::Bool, span, &assigned);
                    let t = self.block(then_block, assigned.clone());
                    let e = match else_block {
                        Some(e) => self.block(e, assigned.clone()),
                        None => assigned.clone(),
                    };
                    assigned = match (t, e) {
                        (Some(t), Some(e)) => Some(t.intersection(&e).cloned().collect()),
                        (None, other) | (other, None) => other,
                    };
                }
                StmtKind::Send { payload, dest } => {
                    self.expr_expect(payload, Ty::Int, span, &assigned);
                    self.rank_expr(dest, span, &assigned);
                }
                StmtKind::Recv { var, src } => {
                    if let Source::Rank(e) = src {
                        self.rank_expr(e, span, &assigned);
                    }
                    self.assign(var, span, &mut assigned);
                }
                StmtKind::Barrier => {}
                StmtKind::Assert(e) => self.expr_expect(e, Ty::Bool, span, &assigned),
                StmtKind::Exit => assigned = None,
                StmtKind::Repeat { count, body } => {
                    let after = self.block(body, assigned.clone());
                    if *count > 0 {
                        assigned = after;
                    }
                }
                StmtKind::Seq(inner) => assigned = self.block(inner, assigned),
            }
        }
        assigned
    }

    fn assign(&mut self, var: &str, span: Span, assigned: &mut Assigned) {
        if self.p.decl(var).is_some() {
            self.push(span, FindingKind::AssignToInput { name: var.to_string() });
        }
        if let Some(set) = assigned {
            set.insert(var.to_string());
        }
    }

    fn rank_expr(&mut self, e: &Expr, span: Span, assigned: &Assigned) {
        self.expr_expect(e, Ty::Int, span, assigned);
        if let Some(value) = fold_literal(e, self.nprocs) {
            if value < 0 || value >= self.nprocs as i64 {
                self.push(span, FindingKind::OutOfRangeRank { value, nprocs: self.nprocs });
            }
        }
    }

    fn expr_expect(&mut self, e: &Expr, want: Ty, span: Span, assigned: &Assigned) {
        if let Some(got) = self.expr(e, span, assigned) {
            if got != want {
                self.push(
                    span,
                    FindingKind::Type {
                        message: format!("expected {want:?} expression, found {got:?}").to_lowercase(),
                    },
                );
            }
        }
    }

    /// Infers the type of `e`, recording findings; `None` after an error.
    fn expr(&mut self, e: &Expr, span: Span, assigned: &Assigned) -> Option<Ty> {
        match e {
            Expr::Int(_) | Expr::Char(_) | Expr::Rank | Expr::NProcs => Some(Ty::Int),
            Expr::Input(name) => {
                if self.p.decl(name).is_none() {
                    self.push(span, FindingKind::UseBeforeAssign { var: name.clone() });
                }
                Some(Ty::Int)
            }
            Expr::Var(name) => {
                if let Some(set) = assigned {
                    if !set.contains(name) {
                        self.push(span, FindingKind::UseBeforeAssign { var: name.clone() });
                    }
                }
                Some(Ty::Int)
            }
            Expr::Unary(op, inner) => {
                let want = match op {
                    UnaryOp::Neg => Ty::Int,
                    UnaryOp::Not => Ty::Bool,
                };
                let got = self.expr(inner, span, assigned)?;
                if got != want {
                    self.type_error(span, format!("operand of `{}` must be {want:?}", unary_symbol(*op)));
                    return None;
                }
                Some(want)
            }
            Expr::Binary(op, a, b) => {
                let ta = self.expr(a, span, assigned);
                let tb = self.expr(b, span, assigned);
                let (ta, tb) = (ta?, tb?);
                let operand = if op.is_logical() { Ty::Bool } else { Ty::Int };
                if ta != operand || tb != operand {
                    self.type_error(span, format!("operands of `{}` must be {operand:?}", op.symbol()));
                    return None;
                }
                Some(if op.is_arithmetic() { Ty::Int } else { Ty::Bool })
            }
        }
    }

    fn type_error(&mut self, span: Span, message: String) {
        self.push(span, FindingKind::Type { message: message.to_lowercase() });
    }
}

fn unary_symbol(op: UnaryOp) -> &'static str {
    match op {
        UnaryOp::Neg => "-",
        UnaryOp::Not => "!",
    }
}

/// Value of an integer expression built only from literals and `nprocs`.
fn fold_literal(e: &Expr, nprocs: usize) -> Option<i64> {
    match e {
        Expr::Int(n) => Some(*n),
        Expr::Char(c) => Some(*c as i64),
        Expr::NProcs => Some(nprocs as i64),
        Expr::Unary(UnaryOp::Neg, inner) => fold_literal(inner, nprocs)?.checked_neg(),
        Expr::Binary(op, a, b) => {
            let (a, b) = (fold_literal(a, nprocs)?, fold_literal(b, nprocs)?);
            match op {
                BinaryOp::Add => a.checked_add(b),
                BinaryOp::Sub => a.checked_sub(b),
                BinaryOp::Mul => a.checked_mul(b),
                _ => None,
            }
        }
        _ => None,
    }
}
