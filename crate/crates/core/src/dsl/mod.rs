//! Front end for the ODE description language.
//!
//! A program declares state functions with `fn`, gives each one derivative
//! with `let diff[...]` and one initial value with `let X(t: 0) = ...`, and
//! names the signals to record with `out` and `plot`:
//!
//! ```text
//! fn X(t);
//! let diff[X, t] = -X;
//! let X(t: 0) = 1;
//! out X(t);
//! ```

mod ast;
mod lexer;
mod parser;
mod validate;

use std::fmt;

use thiserror::Error;

pub use ast::{Ast, AxisRef, Expr, Plot, PlotAxis, Program, Spanned, StateDef, Stmt};
pub use lexer::{tokenize, LexError, Token, TokenKind};
pub use parser::{parse, parse_expr, ParseError};
pub use validate::{validate, ValidateError, ValidateErrorKind};

/// 1-based source position.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Pos {
    pub line: usize,
    pub column: usize,
}

impl Default for Pos {
    fn default() -> Self {
        Pos { line: 1, column: 1 }
    }
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DslError {
    #[error("lex error at {0}")]
    Lex(#[from] LexError),
    #[error("parse error at {0}")]
    Parse(#[from] ParseError),
    #[error("invalid program at {0}")]
    Validate(#[from] ValidateError),
}

impl DslError {
    pub fn pos(&self) -> Pos {
        match self {
            DslError::Lex(e) => e.pos(),
            DslError::Parse(e) => e.pos(),
            DslError::Validate(e) => e.pos(),
        }
    }
}

/// Tokenizes, parses and validates a complete source text.
pub fn parse_program(source: &str) -> Result<Program, DslError> {
    let tokens = tokenize(source)?;
    let ast = parse(&tokens)?;
    Ok(validate(&ast)?)
}
