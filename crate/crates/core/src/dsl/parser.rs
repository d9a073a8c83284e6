//! Recursive descent parser producing an unvalidated [`Ast`].
//!
//! ```text
//! program := stmt*
//! stmt    := "fn" Ident "(" Ident ")" ";"
//!          | "let" "diff" "[" Ident "," Ident "]" "=" expr ";"
//!          | "let" Ident "(" Ident ":" Number ")" "=" ["-"] Number ";"
//!          | "plot" "(" axis ("," axis)* ")" ";"
//!          | "out" Ident "(" Ident ")" ";"
//! axis    := Ident ":" Ident "(" Ident ")"
//! expr    := term (("+" | "-") term)*
//! term    := unary ("*" unary)*
//! unary   := "-" unary | primary
//! primary := Number | Ident | "(" expr ")"
//! ```
//!
//! The independent variable is fixed by the first statement that names one;
//! every later statement must use the same name.

use thiserror::Error;

use super::ast::{Ast, AxisRef, Expr, Spanned, Stmt};
use super::lexer::{Token, TokenKind};
use super::Pos;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: expected {expected}, found {found}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub expected: String,
    pub found: String,
}

impl ParseError {
    pub fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            column: self.column,
        }
    }
}

type PResult<T> = Result<T, ParseError>;

struct Parser<'t> {
    tokens: &'t [Token],
    pos: usize,
    time_var: Option<String>,
    /// Collects variable references while parsing one expression.
    refs: Vec<Spanned<String>>,
}

/// Parses a token stream into an unvalidated program.
pub fn parse(tokens: &[Token]) -> Result<Ast, ParseError> {
    let mut p = Parser {
        tokens,
        pos: 0,
        time_var: None,
        refs: Vec::new(),
    };
    let mut statements = Vec::new();
    while p.peek().is_some() {
        statements.push(p.statement()?);
    }
    Ok(Ast {
        time_var: p.time_var,
        statements,
    })
}

/// Parses a standalone expression (used by tests and tooling).
pub fn parse_expr(tokens: &[Token]) -> Result<Expr, ParseError> {
    let mut p = Parser {
        tokens,
        pos: 0,
        time_var: None,
        refs: Vec::new(),
    };
    let e = p.expr()?;
    if p.peek().is_some() {
        return Err(p.unexpected("end of input"));
    }
    Ok(e)
}

impl<'t> Parser<'t> {
    fn peek(&self) -> Option<&'t Token> {
        self.tokens.get(self.pos)
    }

    fn peek_kind(&self) -> Option<TokenKind> {
        self.peek().map(|t| t.kind)
    }

    /// Position used for errors at end of input: the last token, or 1:1.
    fn eof_pos(&self) -> Pos {
        self.tokens.last().map_or(Pos { line: 1, column: 1 }, Token::pos)
    }

    fn unexpected(&self, expected: impl Into<String>) -> ParseError {
        let (pos, found) = match self.peek() {
            Some(tok) => (tok.pos(), format!("`{}`", tok.lexeme)),
            None => (self.eof_pos(), "end of input".to_string()),
        };
        ParseError {
            line: pos.line,
            column: pos.column,
            expected: expected.into(),
            found,
        }
    }

    fn expect(&mut self, kind: TokenKind) -> PResult<&'t Token> {
        match self.peek() {
            Some(tok) if tok.kind == kind => {
                self.pos += 1;
                Ok(tok)
            }
            _ => Err(self.unexpected(kind.to_string())),
        }
    }

    fn eat(&mut self, kind: TokenKind) -> bool {
        if self.peek_kind() == Some(kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn ident(&mut self) -> PResult<Spanned<String>> {
        let tok = self.expect(TokenKind::Ident)?;
        Ok(Spanned::new(tok.lexeme.clone(), tok.pos()))
    }

    /// Reads the independent variable and checks it against the one already
    /// in use.
    fn time_var(&mut self) -> PResult<String> {
        let tok = match self.peek() {
            Some(tok) if tok.kind == TokenKind::Ident => tok,
            _ => return Err(self.unexpected("independent variable")),
        };
        match &self.time_var {
            Some(t) if *t != tok.lexeme => {
                return Err(self.unexpected(format!("independent variable `{t}`")));
            }
            Some(_) => {}
            None => self.time_var = Some(tok.lexeme.clone()),
        }
        self.pos += 1;
        Ok(tok.lexeme.clone())
    }

    fn statement(&mut self) -> PResult<Stmt> {
        match self.peek_kind() {
            Some(TokenKind::Fn) => self.function(),
            Some(TokenKind::Let) => {
                self.pos += 1;
                if self.peek_kind() == Some(TokenKind::Diff) {
                    self.derivative()
                } else {
                    self.initial()
                }
            }
            Some(TokenKind::Plot) => self.plot(),
            Some(TokenKind::Out) => self.output(),
            _ => Err(self.unexpected("statement")),
        }
    }

    fn function(&mut self) -> PResult<Stmt> {
        self.expect(TokenKind::Fn)?;
        let name = self.ident()?;
        self.expect(TokenKind::LParen)?;
        let time_var = self.time_var()?;
        self.expect(TokenKind::RParen)?;
        self.expect(TokenKind::Semicolon)?;
        Ok(Stmt::Function { name, time_var })
    }

    fn derivative(&mut self) -> PResult<Stmt> {
        self.expect(TokenKind::Diff)?;
        self.expect(TokenKind::LBracket)?;
        let state = self.ident()?;
        self.expect(TokenKind::Comma)?;
        self.time_var()?;
        self.expect(TokenKind::RBracket)?;
        self.expect(TokenKind::Eq)?;
        self.refs.clear();
        let rhs = self.expr()?;
        self.expect(TokenKind::Semicolon)?;
        Ok(Stmt::Derivative {
            state,
            rhs,
            refs: std::mem::take(&mut self.refs),
        })
    }

    fn initial(&mut self) -> PResult<Stmt> {
        let state = self.ident()?;
        self.expect(TokenKind::LParen)?;
        self.time_var()?;
        self.expect(TokenKind::Colon)?;
        let time_tok = self.expect(TokenKind::Number)?;
        let time = Spanned::new(time_tok.number().unwrap_or(f64::NAN), time_tok.pos());
        self.expect(TokenKind::RParen)?;
        self.expect(TokenKind::Eq)?;
        let negative = self.eat(TokenKind::Minus);
        let magnitude = self.expect(TokenKind::Number)?.number().unwrap_or(f64::NAN);
        self.expect(TokenKind::Semicolon)?;
        Ok(Stmt::Initial {
            state,
            time,
            value: if negative { -magnitude } else { magnitude },
        })
    }

    fn plot(&mut self) -> PResult<Stmt> {
        let pos = self.expect(TokenKind::Plot)?.pos();
        self.expect(TokenKind::LParen)?;
        let mut axes = vec![self.axis()?];
        while self.eat(TokenKind::Comma) {
            axes.push(self.axis()?);
        }
        self.expect(TokenKind::RParen)?;
        self.expect(TokenKind::Semicolon)?;
        Ok(Stmt::Plot { pos, axes })
    }

    fn axis(&mut self) -> PResult<AxisRef> {
        let label = self.ident()?;
        self.expect(TokenKind::Colon)?;
        let state = self.ident()?;
        self.expect(TokenKind::LParen)?;
        self.time_var()?;
        self.expect(TokenKind::RParen)?;
        Ok(AxisRef { label, state })
    }

    fn output(&mut self) -> PResult<Stmt> {
        self.expect(TokenKind::Out)?;
        let state = self.ident()?;
        self.expect(TokenKind::LParen)?;
        self.time_var()?;
        self.expect(TokenKind::RParen)?;
        self.expect(TokenKind::Semicolon)?;
        Ok(Stmt::Output { state })
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(TokenKind::Plus) {
                lhs = Expr::add(lhs, self.term()?);
            } else if self.eat(TokenKind::Minus) {
                lhs = Expr::sub(lhs, self.term()?);
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> PResult<Expr> {
        let mut lhs = self.unary()?;
        while self.eat(TokenKind::Star) {
            lhs = Expr::mul(lhs, self.unary()?);
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> PResult<Expr> {
        if self.eat(TokenKind::Minus) {
            Ok(Expr::neg(self.unary()?))
        } else {
            self.primary()
        }
    }

    fn primary(&mut self) -> PResult<Expr> {
        match self.peek() {
            Some(tok) if tok.kind == TokenKind::Number => {
                self.pos += 1;
                Ok(Expr::Const(tok.number().unwrap_or(f64::NAN)))
            }
            Some(tok) if tok.kind == TokenKind::Ident => {
                self.pos += 1;
                self.refs.push(Spanned::new(tok.lexeme.clone(), tok.pos()));
                Ok(Expr::Var(tok.lexeme.clone()))
            }
            Some(tok) if tok.kind == TokenKind::LParen => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(TokenKind::RParen)?;
                Ok(e)
            }
            _ => Err(self.unexpected("expression")),
        }
    }
}
