//! The mini message-passing language: AST, parser, printer, validation and
//! lowering to a flat instruction list.
//!
//! A program is a single rank-dispatched body executed by every process
//! (SPMD). Processes communicate only through synchronous `send`/`recv`
//! (rendezvous) and an all-process `barrier`.

mod lexer;
mod lower;
mod parser;
mod pretty;
mod validate;

use std::fmt;

pub use lower::{lower, Code, Instr, Op};
pub use parser::{parse_program, ParseError};
pub use pretty::pretty_print;
pub use validate::{validate, Finding, FindingKind, ValidationReport, DEFAULT_MAX_DOMAIN_WIDTH};

use sha2::{Digest, Sha256};

/// Source position of a statement or declaration (1-based).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Span {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

/// `sym NAME : int[lo..hi];`
#[derive(Debug, Clone)]
pub struct SymDecl {
    pub name: String,
    pub lo: i64,
    pub hi: i64,
    pub span: Span,
}

impl PartialEq for SymDecl {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name && self.lo == other.lo && self.hi == other.hi
    }
}

impl Eq for SymDecl {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Program {
    /// `program (nprocs = N)`; `None` when the header omits it.
    pub nprocs_default: Option<usize>,
    pub decls: Vec<SymDecl>,
    pub body: Block,
}

impl Program {
    pub fn decl(&self, name: &str) -> Option<&SymDecl> {
        self.decls.iter().find(|d| d.name == name)
    }

    /// Default process count used when the caller gives none.
    pub fn default_nprocs(&self) -> usize {
        self.nprocs_default.unwrap_or(1)
    }

    /// Hex digest of the canonical pretty-printed form. Whitespace and
    /// comments in the original source do not affect it.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(pretty_print(self).as_bytes());
        hex::encode(&digest[..16])
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Block {
    pub stmts: Vec<Stmt>,
}

impl Block {
    pub fn new(stmts: Vec<Stmt>) -> Self {
        Block { stmts }
    }

    pub fn is_empty(&self) -> bool {
        self.stmts.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct Stmt {
    pub kind: StmtKind,
    pub span: Span,
}

impl Stmt {
    pub fn new(kind: StmtKind) -> Self {
        Stmt { kind, span: Span::default() }
    }
}

// Structural equality: spans are ignored so that a re-parsed program compares
// equal to the original.
impl PartialEq for Stmt {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Eq for Stmt {}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StmtKind {
    Assign {
        var: String,
        value: Expr,
    },
    If {
        cond: Expr,
        then_block: Block,
        else_block: Option<Block>,
    },
    Send {
        payload: Expr,
        dest: Expr,
    },
    Recv {
        var: String,
        src: Source,
    },
    Barrier,
    Assert(Expr),
    Exit,
    /// `repeat k { ... }`, unrolled at lowering time.
    Repeat {
        count: u32,
        body: Block,
    },
    /// A bare nested `{ ... }` block.
    Seq(Block),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    Rank(Expr),
    Any,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnaryOp {
    Neg,
    Not,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    And,
    Or,
}

impl BinaryOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinaryOp::Add => "+",
            BinaryOp::Sub => "-",
            BinaryOp::Mul => "*",
            BinaryOp::Eq => "==",
            BinaryOp::Ne => "!=",
            BinaryOp::Lt => "<",
            BinaryOp::Le => "<=",
            BinaryOp::Gt => ">",
            BinaryOp::Ge => ">=",
            BinaryOp::And => "&&",
            BinaryOp::Or => "||",
        }
    }

    /// Binding strength; higher binds tighter.
    pub fn precedence(self) -> u8 {
        match self {
            BinaryOp::Or => 1,
            BinaryOp::And => 2,
            BinaryOp::Eq | BinaryOp::Ne => 3,
            BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge => 4,
            BinaryOp::Add | BinaryOp::Sub => 5,
            BinaryOp::Mul => 6,
        }
    }

    pub fn is_comparison(self) -> bool {
        matches!(self, BinaryOp::Eq | BinaryOp::Ne | BinaryOp::Lt | BinaryOp::Le | BinaryOp::Gt | BinaryOp::Ge)
    }

    pub fn is_logical(self) -> bool {
        matches!(self, BinaryOp::And | BinaryOp::Or)
    }

    pub fn is_arithmetic(self) -> bool {
        matches!(self, BinaryOp::Add | BinaryOp::Sub | BinaryOp::Mul)
    }

    /// The comparison testing the opposite outcome (`<` for `>=`, ...).
    pub fn negated_comparison(self) -> Option<BinaryOp> {
        Some(match self {
            BinaryOp::Eq => BinaryOp::Ne,
            BinaryOp::Ne => BinaryOp::Eq,
            BinaryOp::Lt => BinaryOp::Ge,
            BinaryOp::Le => BinaryOp::Gt,
            BinaryOp::Gt => BinaryOp::Le,
            BinaryOp::Ge => BinaryOp::Lt,
            _ => return None,
        })
    }

    /// The comparison with operands swapped (`a < b` iff `b > a`).
    pub fn flipped_comparison(self) -> Option<BinaryOp> {
        Some(match self {
            BinaryOp::Eq => BinaryOp::Eq,
            BinaryOp::Ne => BinaryOp::Ne,
            BinaryOp::Lt => BinaryOp::Gt,
            BinaryOp::Le => BinaryOp::Ge,
            BinaryOp::Gt => BinaryOp::Lt,
            BinaryOp::Ge => BinaryOp::Le,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Expr {
    Int(i64),
    /// Character literal; evaluates to its code point.
    Char(char),
    /// Reference to a declared symbolic input.
    Input(String),
    /// Reference to a process-local variable.
    Var(String),
    Rank,
    NProcs,
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
}

impl Expr {
    pub fn binary(op: BinaryOp, lhs: Expr, rhs: Expr) -> Expr {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn unary(op: UnaryOp, e: Expr) -> Expr {
        Expr::Unary(op, Box::new(e))
    }

    pub fn var(name: &str) -> Expr {
        Expr::Var(name.to_string())
    }

    /// Calls `f` on every local variable the expression reads.
    pub fn for_each_var(&self, f: &mut impl FnMut(&str)) {
        match self {
            Expr::Var(v) => f(v),
            Expr::Unary(_, e) => e.for_each_var(f),
            Expr::Binary(_, a, b) => {
                a.for_each_var(f);
                b.for_each_var(f);
            }
            _ => {}
        }
    }
}

/// Words that cannot be used as variable or input names.
pub const RESERVED: &[&str] = &[
    "symbolic", "sym", "int", "program", "nprocs", "rank", "if", "else", "send", "to", "recv", "from", "any",
    "barrier", "assert", "exit", "repeat",
];

pub fn is_reserved(name: &str) -> bool {
    RESERVED.contains(&name)
}
