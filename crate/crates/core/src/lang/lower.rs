//! Lowering of the structured body to a flat instruction list.
//!
//! Every control transfer points strictly forward, so a process cursor only
//! ever increases; `instrs.len()` is the end-of-body position. `repeat k`
//! is unrolled and nested blocks are flattened.

use super::{Block, Expr, Program, Source, Span, StmtKind, SymDecl};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Assign {
        var: String,
        value: Expr,
    },
    /// Jumps to `Instr::next` when `cond` holds, otherwise to `else_to`.
    Branch {
        cond: Expr,
        else_to: usize,
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
}

impl Op {
    /// Send, receive and barrier block until a partner is ready.
    pub fn is_communication(&self) -> bool {
        matches!(self, Op::Send { .. } | Op::Recv { .. } | Op::Barrier)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instr {
    pub op: Op,
    pub next: usize,
    pub span: Span,
}

/// A lowered program; shared read-only by every process.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Code {
    pub instrs: Vec<Instr>,
    pub decls: Vec<SymDecl>,
}

impl Code {
    pub fn len(&self) -> usize {
        self.instrs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instrs.is_empty()
    }

    pub fn end(&self) -> usize {
        self.instrs.len()
    }

    pub fn get(&self, loc: usize) -> Option<&Instr> {
        self.instrs.get(loc)
    }
}

pub fn lower(p: &Program) -> Code {
    let mut instrs = Vec::new();
    emit_block(&mut instrs, &p.body);
    Code { instrs, decls: p.decls.clone() }
}

fn push(instrs: &mut Vec<Instr>, op: Op, span: Span) {
    let next = instrs.len() + 1;
    instrs.push(Instr { op, next, span });
}

fn emit_block(instrs: &mut Vec<Instr>, b: &Block) {
    for s in &b.stmts {
        let span = s.span;
        match &s.kind {
            StmtKind::Assign { var, value } => {
                push(instrs, Op::Assign { var: var.clone(), value: value.clone() }, span)
            }
            StmtKind::Send { payload, dest } => {
                push(instrs, Op::Send { payload: payload.clone(), dest: dest.clone() }, span)
            }
            StmtKind::Recv { var, src } => push(instrs, Op::Recv { var: var.clone(), src: src.clone() }, span),
            StmtKind::Barrier => push(instrs, Op::Barrier, span),
            StmtKind::Assert(e) => push(instrs, Op::Assert(e.clone()), span),
            StmtKind::Exit => push(instrs, Op::Exit, span),
            StmtKind::Repeat { count, body } => {
                for _ in 0..*count {
                    emit_block(instrs, body);
                }
            }
            StmtKind::Seq(inner) => emit_block(instrs, inner),
            StmtKind::If { cond, then_block, else_block } => {
                let branch = instrs.len();
                push(instrs, Op::Branch { cond: cond.clone(), else_to: 0 }, span);
                emit_block(instrs, then_block);
                let then_end = instrs.len();
                if let Some(e) = else_block {
                    emit_block(instrs, e);
                }
                let else_end = instrs.len();
                // Fall-through exits of the then-block skip the else-block.
                for ins in &mut instrs[branch + 1..then_end] {
                    if ins.next == then_end {
                        ins.next = else_end;
                    }
                    if let Op::Branch { else_to, .. } = &mut ins.op {
                        if *else_to == then_end {
                            *else_to = else_end;
                        }
                    }
                }
                let ins = &mut instrs[branch];
                if then_end == branch + 1 {
                    ins.next = else_end;
                }
                ins.op = Op::Branch { cond: cond.clone(), else_to: then_end };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lang::parse_program;

    fn code(src: &str) -> Code {
        lower(&parse_program(src).unwrap())
    }

    fn targets(c: &Code) -> Vec<(usize, Option<usize>)> {
        c.instrs
            .iter()
            .map(|i| match i.op {
                Op::Branch { else_to, .. } => (i.next, Some(else_to)),
                _ => (i.next, None),
            })
            .collect()
    }

    #[test]
    fn if_else_layout() {
        // 0: branch  1: a=1  2: a=2  3: barrier
        let c = code("program { if (rank == 0) { a = 1; } else { a = 2; } barrier; }");
        assert_eq!(targets(&c), vec![(1, Some(2)), (3, None), (3, None), (4, None)]);
    }

    #[test]
    fn nested_if_at_end_of_then_block() {
        // 0: if r==0  1: if r==1  2: a=1  3: a=2 (else)  4: barrier
        let c = code("program { if (rank == 0) { if (rank == 1) { a = 1; } } else { a = 2; } barrier; }");
        assert_eq!(targets(&c), vec![(1, Some(3)), (2, Some(4)), (4, None), (4, None), (5, None)]);
    }

    #[test]
    fn empty_branches() {
        let c = code("program { if (rank == 0) { } else { a = 2; } if (rank == 1) { } barrier; }");
        assert_eq!(targets(&c), vec![(2, Some(1)), (2, None), (3, Some(3)), (4, None)]);
    }

    #[test]
    fn repeat_unrolls() {
        let c = code("program { repeat 3 { barrier; } }");
        assert_eq!(c.len(), 3);
        assert!(c.instrs.iter().all(|i| i.op == Op::Barrier));
    }

    #[test]
    fn control_flow_is_forward() {
        let c = code(include_str!("../../corpus/fig1-motivating.mpisym"));
        for (at, (next, else_to)) in targets(&c).into_iter().enumerate() {
            assert!(next > at && next <= c.end());
            if let Some(e) = else_to {
                assert!(e > at && e <= c.end());
            }
        }
    }
}
