//! Tokenizer for the ODE description language.

use std::fmt;

use thiserror::Error;

use super::Pos;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Ident,
    Number,
    Fn,
    Let,
    Diff,
    Plot,
    Out,
    LParen,
    RParen,
    LBracket,
    RBracket,
    Comma,
    Colon,
    Semicolon,
    Eq,
    Plus,
    Minus,
    Star,
}

impl TokenKind {
    fn keyword(word: &str) -> Option<TokenKind> {
        Some(match word {
            "fn" => TokenKind::Fn,
            "let" => TokenKind::Let,
            "diff" => TokenKind::Diff,
            "plot" => TokenKind::Plot,
            "out" => TokenKind::Out,
            _ => return None,
        })
    }

    fn punct(c: char) -> Option<TokenKind> {
        Some(match c {
            '(' => TokenKind::LParen,
            ')' => TokenKind::RParen,
            '[' => TokenKind::LBracket,
            ']' => TokenKind::RBracket,
            ',' => TokenKind::Comma,
            ':' => TokenKind::Colon,
            ';' => TokenKind::Semicolon,
            '=' => TokenKind::Eq,
            '+' => TokenKind::Plus,
            '-' => TokenKind::Minus,
            '*' => TokenKind::Star,
            _ => return None,
        })
    }

    pub fn is_keyword(self) -> bool {
        matches!(
            self,
            TokenKind::Fn | TokenKind::Let | TokenKind::Diff | TokenKind::Plot | TokenKind::Out
        )
    }
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TokenKind::Ident => "identifier",
            TokenKind::Number => "number",
            TokenKind::Fn => "`fn`",
            TokenKind::Let => "`let`",
            TokenKind::Diff => "`diff`",
            TokenKind::Plot => "`plot`",
            TokenKind::Out => "`out`",
            TokenKind::LParen => "`(`",
            TokenKind::RParen => "`)`",
            TokenKind::LBracket => "`[`",
            TokenKind::RBracket => "`]`",
            TokenKind::Comma => "`,`",
            TokenKind::Colon => "`:`",
            TokenKind::Semicolon => "`;`",
            TokenKind::Eq => "`=`",
            TokenKind::Plus => "`+`",
            TokenKind::Minus => "`-`",
            TokenKind::Star => "`*`",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub lexeme: String,
    pub line: usize,
    pub column: usize,
}

impl Token {
    pub fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            column: self.column,
        }
    }

    /// Numeric value of a `Number` token.
    pub fn number(&self) -> Option<f64> {
        match self.kind {
            TokenKind::Number => self.lexeme.parse().ok(),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{column}: {message}")]
pub struct LexError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

impl LexError {
    pub fn pos(&self) -> Pos {
        Pos {
            line: self.line,
            column: self.column,
        }
    }
}

struct Cursor<'a> {
    chars: std::iter::Peekable<std::str::CharIndices<'a>>,
    src: &'a str,
    line: usize,
    column: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Cursor {
            chars: src.char_indices().peekable(),
            src,
            line: 1,
            column: 1,
        }
    }

    fn peek(&mut self) -> Option<char> {
        self.chars.peek().map(|&(_, c)| c)
    }

    fn offset(&mut self) -> usize {
        self.chars.peek().map_or(self.src.len(), |&(i, _)| i)
    }

    fn bump(&mut self) -> Option<char> {
        let (_, c) = self.chars.next()?;
        if c == '\n' {
            self.line += 1;
            self.column = 1;
        } else {
            self.column += 1;
        }
        Some(c)
    }

    fn eat_while(&mut self, pred: impl Fn(char) -> bool) {
        while self.peek().is_some_and(&pred) {
            self.bump();
        }
    }

    fn error(&self, message: impl Into<String>) -> LexError {
        LexError {
            line: self.line,
            column: self.column,
            message: message.into(),
        }
    }
}

fn is_ident_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_ident_continue(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

/// Splits `source` into tokens. Whitespace and `#` comments are discarded.
pub fn tokenize(source: &str) -> Result<Vec<Token>, LexError> {
    let mut cur = Cursor::new(source);
    let mut tokens = Vec::new();

    while let Some(c) = cur.peek() {
        let (line, column) = (cur.line, cur.column);
        let start = cur.offset();

        if c.is_whitespace() {
            cur.bump();
            continue;
        }
        if c == '#' {
            cur.eat_while(|c| c != '\n');
            continue;
        }

        let kind = if is_ident_start(c) {
            cur.eat_while(is_ident_continue);
            let word = &source[start..cur.offset()];
            TokenKind::keyword(word).unwrap_or(TokenKind::Ident)
        } else if c.is_ascii_digit() {
            cur.eat_while(|c| c.is_ascii_digit());
            if cur.peek() == Some('.') {
                cur.bump();
                if !cur.peek().is_some_and(|c| c.is_ascii_digit()) {
                    return Err(cur.error("expected digit after decimal point"));
                }
                cur.eat_while(|c| c.is_ascii_digit());
            }
            if matches!(cur.peek(), Some('e' | 'E')) {
                return Err(cur.error("exponent notation is not supported"));
            }
            let lexeme = &source[start..cur.offset()];
            if !lexeme.parse::<f64>().is_ok_and(f64::is_finite) {
                return Err(LexError {
                    line,
                    column,
                    message: format!("number `{lexeme}` is out of range"),
                });
            }
            TokenKind::Number
        } else if let Some(kind) = TokenKind::punct(c) {
            cur.bump();
            kind
        } else {
            return Err(cur.error(format!("unexpected character {c:?}")));
        };

        tokens.push(Token {
            kind,
            lexeme: source[start..cur.offset()].to_string(),
            line,
            column,
        });
    }

    Ok(tokens)
}
