//! Tokenizer shared by the schema DDL, the rule language and the command language.
//!
//! Identifiers are runs of Unicode letters, digits and underscores. Keywords are
//! not reserved here: every parser matches them contextually and
//! case-insensitively, so `Temps` and `TEMPS` lex identically.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// A location in source text. Lines and columns are 1-based, columns count chars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize)]
pub struct Position {
    pub offset: usize,
    pub line: usize,
    pub column: usize,
}

impl fmt::Display for Position {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.column)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TokenKind {
    Ident(String),
    /// Numeric literal, kept as written so callers decide how to interpret it.
    Number(String),
    /// Single-quoted string literal with `''` as the escaped quote.
    Str(String),
    Arrow,
    Punct(char),
    Eof,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Ident(s) => write!(f, "`{s}`"),
            TokenKind::Number(s) => write!(f, "number {s}"),
            TokenKind::Str(s) => write!(f, "string '{s}'"),
            TokenKind::Arrow => f.write_str("`->`"),
            TokenKind::Punct(c) => write!(f, "`{c}`"),
            TokenKind::Eof => f.write_str("end of input"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Token {
    pub kind: TokenKind,
    pub pos: Position,
}

impl Token {
    pub fn is_keyword(&self, kw: &str) -> bool {
        matches!(&self.kind, TokenKind::Ident(s) if s.eq_ignore_ascii_case(kw))
    }

    pub fn ident(&self) -> Option<&str> {
        match &self.kind {
            TokenKind::Ident(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("unexpected {lexeme:?} at {pos}")]
pub struct LexError {
    pub pos: Position,
    pub lexeme: String,
}

const PUNCT: &[char] = &['(', ')', '[', ']', '.', ',', ';', ':', '-', '=', '<', '>', '!', '*'];

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

/// Splits `src` into tokens, always terminated by an `Eof` token.
///
/// `--` starts a comment running to end of line. A `-` directly followed by a
/// digit starts a signed number; any other `-` is punctuation.
pub fn tokenize(src: &str) -> Result<Vec<Token>, LexError> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    let mut line = 1;
    let mut column = 1;

    // Advances over chars[i..j], keeping line/column in sync.
    let advance = |from: usize, to: usize, line: &mut usize, column: &mut usize| {
        for &(_, c) in &chars[from..to] {
            if c == '\n' {
                *line += 1;
                *column = 1;
            } else {
                *column += 1;
            }
        }
    };

    while i < chars.len() {
        let (offset, c) = chars[i];
        let pos = Position { offset, line, column };
        let peek = chars.get(i + 1).map(|&(_, c)| c);

        let end = if c.is_whitespace() {
            i + 1
        } else if c == '-' && peek == Some('-') {
            let mut j = i;
            while j < chars.len() && chars[j].1 != '\n' {
                j += 1;
            }
            j
        } else if c == '-' && peek == Some('>') {
            tokens.push(Token { kind: TokenKind::Arrow, pos });
            i + 2
        } else if c.is_ascii_digit() || (c == '-' && peek.is_some_and(|p| p.is_ascii_digit())) {
            let mut j = i + 1;
            while j < chars.len() && chars[j].1.is_ascii_digit() {
                j += 1;
            }
            if j + 1 < chars.len() && chars[j].1 == '.' && chars[j + 1].1.is_ascii_digit() {
                j += 1;
                while j < chars.len() && chars[j].1.is_ascii_digit() {
                    j += 1;
                }
            }
            // A number glued to letters ("12abc") is one malformed lexeme.
            if j < chars.len() && is_ident_char(chars[j].1) && !chars[j].1.is_ascii_digit() {
                let mut k = j;
                while k < chars.len() && is_ident_char(chars[k].1) {
                    k += 1;
                }
                return Err(LexError { pos, lexeme: slice(src, &chars, i, k) });
            }
            tokens.push(Token { kind: TokenKind::Number(slice(src, &chars, i, j)), pos });
            j
        } else if is_ident_char(c) {
            let mut j = i + 1;
            while j < chars.len() && is_ident_char(chars[j].1) {
                j += 1;
            }
            tokens.push(Token { kind: TokenKind::Ident(slice(src, &chars, i, j)), pos });
            j
        } else if c == '\'' {
            let mut value = String::new();
            let mut j = i + 1;
            loop {
                match chars.get(j) {
                    None => return Err(LexError { pos, lexeme: slice(src, &chars, i, j) }),
                    Some(&(_, '\'')) if chars.get(j + 1).map(|p| p.1) == Some('\'') => {
                        value.push('\'');
                        j += 2;
                    }
                    Some(&(_, '\'')) => break,
                    Some(&(_, ch)) => {
                        value.push(ch);
                        j += 1;
                    }
                }
            }
            tokens.push(Token { kind: TokenKind::Str(value), pos });
            j + 1
        } else if PUNCT.contains(&c) {
            tokens.push(Token { kind: TokenKind::Punct(c), pos });
            i + 1
        } else {
            return Err(LexError { pos, lexeme: c.to_string() });
        };
        advance(i, end, &mut line, &mut column);
        i = end;
    }

    let offset = src.len();
    tokens.push(Token { kind: TokenKind::Eof, pos: Position { offset, line, column } });
    Ok(tokens)
}

fn slice(src: &str, chars: &[(usize, char)], from: usize, to: usize) -> String {
    let start = chars[from].0;
    let end = chars.get(to).map_or(src.len(), |&(o, _)| o);
    src[start..end].to_string()
}

/// Cursor over a token vector with the helpers every parser here needs.
#[derive(Debug)]
pub struct Cursor {
    tokens: Vec<Token>,
    at: usize,
}

impl Cursor {
    pub fn new(tokens: Vec<Token>) -> Self {
        Self { tokens, at: 0 }
    }

    pub fn peek(&self) -> &Token {
        &self.tokens[self.at.min(self.tokens.len() - 1)]
    }

    pub fn peek_nth(&self, n: usize) -> &Token {
        &self.tokens[(self.at + n).min(self.tokens.len() - 1)]
    }

    pub fn advance(&mut self) -> Token {
        let tok = self.peek().clone();
        if self.at < self.tokens.len() {
            self.at += 1;
        }
        tok
    }

    pub fn at_eof(&self) -> bool {
        self.peek().kind == TokenKind::Eof
    }

    pub fn eat_keyword(&mut self, kw: &str) -> bool {
        if self.peek().is_keyword(kw) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    pub fn eat_punct(&mut self, c: char) -> bool {
        if self.peek().kind == TokenKind::Punct(c) {
            self.at += 1;
            true
        } else {
            false
        }
    }
}
