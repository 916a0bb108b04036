use std::fmt::Write;

use super::{Block, Expr, Program, Source, StmtKind, UnaryOp};

/// Canonical source form. Re-parsing the output yields a structurally equal
/// program.
pub fn pretty_print(p: &Program) -> String {
    let mut out = String::new();
    if !p.decls.is_empty() {
        out.push_str("symbolic\n");
        for d in &p.decls {
            let _ = writeln!(out, "  sym {} : int[{}..{}];", d.name, d.lo, d.hi);
        }
    }
    out.push_str("program ");
    if let Some(n) = p.nprocs_default {
        let _ = write!(out, "(nprocs = {n}) ");
    }
    write_block(&mut out, &p.body, 0);
    out.push('\n');
    out
}

fn indent(out: &mut String, level: usize) {
    for _ in 0..level {
        out.push_str("  ");
    }
}

fn write_block(out: &mut String, b: &Block, level: usize) {
    if b.is_empty() {
        out.push_str("{}");
        return;
    }
    out.push_str("{\n");
    for s in &b.stmts {
        indent(out, level + 1);
        write_stmt(out, &s.kind, level + 1);
        out.push('\n');
    }
    indent(out, level);
    out.push('}');
}

fn write_stmt(out: &mut String, s: &StmtKind, level: usize) {
    match s {
        StmtKind::Assign { var, value } => {
            let _ = write!(out, "{var} = {};", expr_to_string(value));
        }
        StmtKind::If { cond, then_block, else_block } => {
            let _ = write!(out, "if ({}) ", expr_to_string(cond));
            write_block(out, then_block, level);
            if let Some(e) = else_block {
                out.push_str(" else ");
                match e.stmts.as_slice() {
                    [only] if matches!(only.kind, StmtKind::If { .. }) => write_stmt(out, &only.kind, level),
                    _ => write_block(out, e, level),
                }
            }
        }
        StmtKind::Send { payload, dest } => {
            let _ = write!(out, "send {} to {};", expr_to_string(payload), expr_to_string(dest));
        }
        StmtKind::Recv { var, src } => match src {
            Source::Any => {
                let _ = write!(out, "recv {var} from any;");
            }
            Source::Rank(e) => {
                let _ = write!(out, "recv {var} from {};", expr_to_string(e));
            }
        },
        StmtKind::Barrier => out.push_str("barrier;"),
        StmtKind::Assert(e) => {
            let _ = write!(out, "assert({});", expr_to_string(e));
        }
        StmtKind::Exit => out.push_str("exit;"),
        StmtKind::Repeat { count, body } => {
            let _ = write!(out, "repeat {count} ");
            write_block(out, body, level);
        }
        StmtKind::Seq(b) => write_block(out, b, level),
    }
}

/// Renders an expression with the minimal parentheses needed to re-parse it
/// to the same tree.
pub fn expr_to_string(e: &Expr) -> String {
    let mut s = String::new();
    write_expr(&mut s, e, 0, false);
    s
}

fn write_expr(out: &mut String, e: &Expr, parent_prec: u8, right_operand: bool) {
    match e {
        Expr::Int(n) => {
            let _ = write!(out, "{n}");
        }
        Expr::Char(c) => {
            let _ = write!(out, "'{c}'");
        }
        Expr::Input(name) | Expr::Var(name) => out.push_str(name),
        Expr::Rank => out.push_str("rank"),
        Expr::NProcs => out.push_str("nprocs"),
        Expr::Unary(op, inner) => {
            out.push(match op {
                UnaryOp::Neg => '-',
                UnaryOp::Not => '!',
            });
            if matches!(**inner, Expr::Binary(..)) {
                out.push('(');
                write_expr(out, inner, 0, false);
                out.push(')');
            } else {
                write_expr(out, inner, u8::MAX, false);
            }
        }
        Expr::Binary(op, lhs, rhs) => {
            let prec = op.precedence();
            let parens = prec < parent_prec || (prec == parent_prec && right_operand);
            if parens {
                out.push('(');
            }
            write_expr(out, lhs, prec, false);
            let _ = write!(out, " {} ", op.symbol());
            write_expr(out, rhs, prec, true);
            if parens {
                out.push(')');
            }
        }
    }
}
