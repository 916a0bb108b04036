//! Recursive descent parser for the DSL.

use std::collections::HashSet;

use thiserror::Error;

use super::lexer::{tokenize, Tok, Token};
use super::{is_reserved, BinaryOp, Block, Expr, Program, Source, Span, Stmt, StmtKind, SymDecl, UnaryOp};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("{span}: syntax error: {message}")]
    Syntax { span: Span, message: String },
    #[error("{span}: duplicate symbolic declaration `{name}`")]
    DuplicateDecl { span: Span, name: String },
    #[error("{span}: `{name}` is a reserved word")]
    ReservedName { span: Span, name: String },
}

impl ParseError {
    pub fn span(&self) -> Span {
        match self {
            ParseError::Syntax { span, .. }
            | ParseError::DuplicateDecl { span, .. }
            | ParseError::ReservedName { span, .. } => *span,
        }
    }
}

pub type ParseResult<T> = Result<T, ParseError>;

/// Parses a complete source file.
pub fn parse_program(text: &str) -> ParseResult<Program> {
    let tokens = tokenize(text)?;
    Parser { tokens, pos: 0, inputs: HashSet::new() }.program()
}

struct Parser {
    tokens: Vec<Token>,
    pos: usize,
    inputs: HashSet<String>,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].tok
    }

    fn span(&self) -> Span {
        self.tokens[self.pos].span
    }

    fn advance(&mut self) -> Token {
        let t = self.tokens[self.pos].clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn is_kw(&self, kw: &str) -> bool {
        matches!(self.peek(), Tok::Ident(s) if s == kw)
    }

    fn eat(&mut self, tok: &Tok) -> bool {
        if self.peek() == tok {
            self.advance();
            true
        } else {
            false
        }
    }

    fn error<T>(&self, expected: &str) -> ParseResult<T> {
        Err(ParseError::Syntax {
            span: self.span(),
            message: format!("expected {expected}, found {}", self.peek().describe()),
        })
    }

    fn expect(&mut self, tok: Tok, what: &str) -> ParseResult<()> {
        if self.eat(&tok) {
            Ok(())
        } else {
            self.error(what)
        }
    }

    fn expect_kw(&mut self, kw: &str) -> ParseResult<()> {
        if self.is_kw(kw) {
            self.advance();
            Ok(())
        } else {
            self.error(&format!("`{kw}`"))
        }
    }

    /// An identifier usable as a name (not a reserved word).
    fn name(&mut self) -> ParseResult<(String, Span)> {
        let span = self.span();
        match self.peek().clone() {
            Tok::Ident(s) if is_reserved(&s) => Err(ParseError::ReservedName { span, name: s }),
            Tok::Ident(s) => {
                self.advance();
                Ok((s, span))
            }
            _ => self.error("identifier"),
        }
    }

    fn int_literal(&mut self) -> ParseResult<i64> {
        let negative = self.eat(&Tok::Minus);
        match *self.peek() {
            Tok::Int(n) => {
                self.advance();
                Ok(if negative { -n } else { n })
            }
            _ => self.error("integer literal"),
        }
    }

    fn program(mut self) -> ParseResult<Program> {
        let mut decls: Vec<SymDecl> = Vec::new();
        if self.is_kw("symbolic") {
            self.advance();
            while self.is_kw("sym") {
                let decl = self.decl()?;
                if !self.inputs.insert(decl.name.clone()) {
                    return Err(ParseError::DuplicateDecl { span: decl.span, name: decl.name });
                }
                decls.push(decl);
            }
        }
        self.expect_kw("program")?;
        let mut nprocs_default = None;
        if self.eat(&Tok::LParen) {
            self.expect_kw("nprocs")?;
            self.expect(Tok::Assign, "`=`")?;
            let span = self.span();
            let n = self.int_literal()?;
            if n < 1 {
                return Err(ParseError::Syntax { span, message: "nprocs must be at least 1".into() });
            }
            nprocs_default = Some(n as usize);
            self.expect(Tok::RParen, "`)`")?;
        }
        let body = self.block()?;
        if *self.peek() != Tok::Eof {
            return self.error("end of input");
        }
        Ok(Program { nprocs_default, decls, body })
    }

    fn decl(&mut self) -> ParseResult<SymDecl> {
        let span = self.span();
        self.expect_kw("sym")?;
        let (name, _) = self.name()?;
        self.expect(Tok::Colon, "`:`")?;
        self.expect_kw("int")?;
        self.expect(Tok::LBracket, "`[`")?;
        let lo = self.int_literal()?;
        self.expect(Tok::DotDot, "`..`")?;
        let hi = self.int_literal()?;
        self.expect(Tok::RBracket, "`]`")?;
        self.expect(Tok::Semi, "`;`")?;
        Ok(SymDecl { name, lo, hi, span })
    }

    fn block(&mut self) -> ParseResult<Block> {
        self.expect(Tok::LBrace, "`{`")?;
        let mut stmts = Vec::new();
        while *self.peek() != Tok::RBrace {
            if *self.peek() == Tok::Eof {
                return self.error("`}`");
            }
            stmts.push(self.stmt()?);
        }
        self.advance();
        Ok(Block { stmts })
    }

    fn stmt(&mut self) -> ParseResult<Stmt> {
        let span = self.span();
        let kind = match self.peek().clone() {
            Tok::LBrace => StmtKind::Seq(self.block()?),
            Tok::Ident(kw) => match kw.as_str() {
                "if" => return self.if_stmt(),
                "send" => {
                    self.advance();
                    let payload = self.expr()?;
                    self.expect_kw("to")?;
                    let dest = self.expr()?;
                    self.expect(Tok::Semi, "`;`")?;
                    StmtKind::Send { payload, dest }
                }
                "recv" => {
                    self.advance();
                    let (var, _) = self.name()?;
                    self.expect_kw("from")?;
                    let src = if self.is_kw("any") {
                        self.advance();
                        Source::Any
                    } else {
                        Source::Rank(self.expr()?)
                    };
                    self.expect(Tok::Semi, "`;`")?;
                    StmtKind::Recv { var, src }
                }
                "barrier" => {
                    self.advance();
                    self.expect(Tok::Semi, "`;`")?;
                    StmtKind::Barrier
                }
                "assert" => {
                    self.advance();
                    self.expect(Tok::LParen, "`(`")?;
                    let e = self.expr()?;
                    self.expect(Tok::RParen, "`)`")?;
                    self.expect(Tok::Semi, "`;`")?;
                    StmtKind::Assert(e)
                }
                "exit" => {
                    self.advance();
                    self.expect(Tok::Semi, "`;`")?;
                    StmtKind::Exit
                }
                "repeat" => {
                    self.advance();
                    let count_span = self.span();
                    let count = match *self.peek() {
                        Tok::Int(n) if n >= 0 && n <= u32::MAX as i64 => {
                            self.advance();
                            n as u32
                        }
                        _ => {
                            return Err(ParseError::Syntax {
                                span: count_span,
                                message: "expected repeat count".into(),
                            })
                        }
                    };
                    StmtKind::Repeat { count, body: self.block()? }
                }
                _ => {
                    let (var, _) = self.name()?;
                    self.expect(Tok::Assign, "`=`")?;
                    let value = self.expr()?;
                    self.expect(Tok::Semi, "`;`")?;
                    StmtKind::Assign { var, value }
                }
            },
            _ => return self.error("statement"),
        };
        Ok(Stmt { kind, span })
    }

    fn if_stmt(&mut self) -> ParseResult<Stmt> {
        let span = self.span();
        self.expect_kw("if")?;
        self.expect(Tok::LParen, "`(`")?;
        let cond = self.expr()?;
        self.expect(Tok::RParen, "`)`")?;
        let then_block = self.block()?;
        let else_block = if self.is_kw("else") {
            self.advance();
            if self.is_kw("if") {
                Some(Block { stmts: vec![self.if_stmt()?] })
            } else {
                Some(self.block()?)
            }
        } else {
            None
        };
        Ok(Stmt { kind: StmtKind::If { cond, then_block, else_block }, span })
    }

    fn expr(&mut self) -> ParseResult<Expr> {
        self.binary(1)
    }

    fn binary_op(&self) -> Option<BinaryOp> {
        Some(match self.peek() {
            Tok::OrOr => BinaryOp::Or,
            Tok::AndAnd => BinaryOp::And,
            Tok::EqEq => BinaryOp::Eq,
            Tok::Ne => BinaryOp::Ne,
            Tok::Lt => BinaryOp::Lt,
            Tok::Le => BinaryOp::Le,
            Tok::Gt => BinaryOp::Gt,
            Tok::Ge => BinaryOp::Ge,
            Tok::Plus => BinaryOp::Add,
            Tok::Minus => BinaryOp::Sub,
            Tok::Star => BinaryOp::Mul,
            _ => return None,
        })
    }

    /// Precedence climbing; all binary operators are left-associative.
    fn binary(&mut self, min_prec: u8) -> ParseResult<Expr> {
        let mut lhs = self.unary()?;
        while let Some(op) = self.binary_op() {
            if op.precedence() < min_prec {
                break;
            }
            self.advance();
            let rhs = self.binary(op.precedence() + 1)?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> ParseResult<Expr> {
        if self.eat(&Tok::Minus) {
            return Ok(Expr::unary(UnaryOp::Neg, self.unary()?));
        }
        if self.eat(&Tok::Bang) {
            return Ok(Expr::unary(UnaryOp::Not, self.unary()?));
        }
        self.primary()
    }

    fn primary(&mut self) -> ParseResult<Expr> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.advance();
                Ok(Expr::Int(n))
            }
            Tok::Char(c) => {
                self.advance();
                Ok(Expr::Char(c))
            }
            Tok::LParen => {
                self.advance();
                let e = self.expr()?;
                self.expect(Tok::RParen, "`)`")?;
                Ok(e)
            }
            Tok::Ident(s) if s == "rank" => {
                self.advance();
                Ok(Expr::Rank)
            }
            Tok::Ident(s) if s == "nprocs" => {
                self.advance();
                Ok(Expr::NProcs)
            }
            Tok::Ident(_) => {
                let (name, _) = self.name()?;
                if self.inputs.contains(&name) {
                    Ok(Expr::Input(name))
                } else {
                    Ok(Expr::Var(name))
                }
            }
            _ => self.error("expression"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FIG1: &str = include_str!("../../corpus/fig1-motivating.mpisym");

    #[test]
    fn parses_motivating_example() {
        let p = parse_program(FIG1).unwrap();
        assert_eq!(p.nprocs_default, Some(3));
        assert_eq!(p.decls.len(), 1);
        assert_eq!((p.decls[0].lo, p.decls[0].hi), (0, 255));

        // Three-way rank dispatch as nested if/else.
        let StmtKind::If { cond, else_block, .. } = &p.body.stmts[0].kind else {
            panic!("expected rank dispatch");
        };
        assert_eq!(*cond, Expr::binary(BinaryOp::Eq, Expr::Rank, Expr::Int(0)));
        let StmtKind::If { then_block: rank1, else_block: rank2, .. } = &else_block.as_ref().unwrap().stmts[0].kind
        else {
            panic!("expected rank 1 branch");
        };
        assert!(rank2.is_some());
        let mut wildcards = 0;
        count_wildcards(rank1, &mut wildcards);
        assert_eq!(wildcards, 1);
    }

    fn count_wildcards(b: &Block, n: &mut usize) {
        for s in &b.stmts {
            match &s.kind {
                StmtKind::Recv { src: Source::Any, .. } => *n += 1,
                StmtKind::If { then_block, else_block, .. } => {
                    count_wildcards(then_block, n);
                    if let Some(e) = else_block {
                        count_wildcards(e, n);
                    }
                }
                StmtKind::Seq(b) | StmtKind::Repeat { body: b, .. } => count_wildcards(b, n),
                _ => {}
            }
        }
    }

    #[test]
    fn empty_program() {
        let p = parse_program("program {}").unwrap();
        assert!(p.body.is_empty());
        assert!(p.decls.is_empty());
        assert_eq!(p.nprocs_default, None);
    }

    #[test]
    fn expression_destination() {
        let p = parse_program("program (nprocs = 2) { send 1 to (rank+1); }").unwrap();
        let StmtKind::Send { dest, .. } = &p.body.stmts[0].kind else { panic!() };
        assert_eq!(*dest, Expr::binary(BinaryOp::Add, Expr::Rank, Expr::Int(1)));
    }

    #[test]
    fn precedence_and_associativity() {
        let p = parse_program("program { x = 1 + 2 * 3 - 4; b = x < 3 && x != 2 || !(x == 1); }").unwrap();
        let StmtKind::Assign { value, .. } = &p.body.stmts[0].kind else { panic!() };
        let expected = Expr::binary(
            BinaryOp::Sub,
            Expr::binary(BinaryOp::Add, Expr::Int(1), Expr::binary(BinaryOp::Mul, Expr::Int(2), Expr::Int(3))),
            Expr::Int(4),
        );
        assert_eq!(*value, expected);
        let StmtKind::Assign { value, .. } = &p.body.stmts[1].kind else { panic!() };
        assert!(matches!(value, Expr::Binary(BinaryOp::Or, _, _)));
    }

    #[test]
    fn statement_spans() {
        let p = parse_program("program {\n  barrier;\n  exit;\n}").unwrap();
        assert_eq!(p.body.stmts[0].span, Span { line: 2, col: 3 });
        assert_eq!(p.body.stmts[1].span, Span { line: 3, col: 3 });
    }

    #[test]
    fn syntax_error_has_location() {
        let err = parse_program("program {\n  send 1 1;\n}").unwrap_err();
        assert_eq!(err.span(), Span { line: 2, col: 10 });
        assert!(err.to_string().contains("`to`"), "{err}");
    }

    #[test]
    fn duplicate_declaration() {
        let err = parse_program("symbolic sym X : int[0..1]; sym X : int[0..2]; program {}").unwrap_err();
        assert!(matches!(err, ParseError::DuplicateDecl { ref name, .. } if name == "X"));
    }

    #[test]
    fn reserved_names() {
        let err = parse_program("symbolic sym rank : int[0..1]; program {}").unwrap_err();
        assert!(matches!(err, ParseError::ReservedName { .. }));
        let err = parse_program("program { recv any from 0; }").unwrap_err();
        assert!(matches!(err, ParseError::ReservedName { .. }));
        let err = parse_program("program { nprocs = 3; }").unwrap_err();
        assert!(matches!(err, ParseError::ReservedName { .. }));
    }

    #[test]
    fn negative_domains_and_repeat() {
        let p = parse_program("symbolic sym D : int[-3..3]; program { repeat 2 { barrier; } }").unwrap();
        assert_eq!((p.decls[0].lo, p.decls[0].hi), (-3, 3));
        assert!(matches!(p.body.stmts[0].kind, StmtKind::Repeat { count: 2, .. }));
    }

    #[test]
    fn inputs_resolve_by_declaration() {
        let p = parse_program("symbolic sym X : int[0..9]; program { y = X + z; }").unwrap();
        let StmtKind::Assign { value, .. } = &p.body.stmts[0].kind else { panic!() };
        assert_eq!(*value, Expr::binary(BinaryOp::Add, Expr::Input("X".into()), Expr::var("z")));
    }
}
