use std::ops::Range;

use super::TriviaKind;
use crate::grammar::Terminal;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LexKind {
    Keyword,
    Terminal(Terminal),
    /// A character no terminal accepts, or an unterminated block comment.
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Lexeme {
    Token { kind: LexKind, span: Range<usize> },
    Trivia { kind: TriviaKind, span: Range<usize> },
}

impl Lexeme {
    pub fn span(&self) -> &Range<usize> {
        match self {
            Lexeme::Token { span, .. } | Lexeme::Trivia { span, .. } => span,
        }
    }
}

/// Splits `source` into tokens and trivia using the hardwired terminals
/// (ID, INT, STRING, WS, SL_COMMENT, ML_COMMENT) plus the given keywords.
///
/// Longest match wins; a keyword wins a tie with ID. Lexing never fails:
/// unlexable input becomes [`LexKind::Unknown`] tokens.
pub fn lex<'k>(source: &str, keywords: impl IntoIterator<Item = &'k str>) -> Vec<Lexeme> {
    let keywords: Vec<&str> = keywords.into_iter().collect();
    let bytes = source.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let rest = &source[i..];
        let b = bytes[i];
        if b == b'\n' || rest.starts_with("\r\n") {
            let len = if b == b'\n' { 1 } else { 2 };
            out.push(Lexeme::Trivia { kind: TriviaKind::Newline, span: i..i + len });
            i += len;
            continue;
        }
        if is_space(b) {
            let len = rest
                .bytes()
                .enumerate()
                .take_while(|&(k, c)| is_space(c) && !(c == b'\r' && bytes.get(i + k + 1) == Some(&b'\n')))
                .count();
            out.push(Lexeme::Trivia { kind: TriviaKind::Whitespace, span: i..i + len });
            i += len;
            continue;
        }
        if rest.starts_with("//") {
            let mut len = rest.find('\n').unwrap_or(rest.len());
            if rest[..len].ends_with('\r') {
                len -= 1;
            }
            out.push(Lexeme::Trivia { kind: TriviaKind::LineComment, span: i..i + len });
            i += len;
            continue;
        }
        if let Some(body) = rest.strip_prefix("/*") {
            match body.find("*/") {
                Some(end) => {
                    let len = end + 4;
                    out.push(Lexeme::Trivia { kind: TriviaKind::BlockComment, span: i..i + len });
                    i += len;
                }
                None => {
                    out.push(Lexeme::Token { kind: LexKind::Unknown, span: i..bytes.len() });
                    i = bytes.len();
                }
            }
            continue;
        }

        let keyword_len = keywords
            .iter()
            .filter(|k| rest.starts_with(**k))
            .map(|k| k.len())
            .max()
            .unwrap_or(0);
        let (terminal, terminal_len) = match_terminal(rest);
        let (kind, len) = if keyword_len > 0 && keyword_len >= terminal_len {
            (LexKind::Keyword, keyword_len)
        } else if let Some(t) = terminal {
            (LexKind::Terminal(t), terminal_len)
        } else {
            (LexKind::Unknown, rest.chars().next().map_or(1, char::len_utf8))
        };
        out.push(Lexeme::Token { kind, span: i..i + len });
        i += len;
    }
    out
}

fn is_space(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\x0c' | b'\r')
}

fn match_terminal(rest: &str) -> (Option<Terminal>, usize) {
    let bytes = rest.as_bytes();
    let ident_start = |b: u8| b == b'_' || b.is_ascii_alphabetic();
    let ident_part = |b: &u8| *b == b'_' || b.is_ascii_alphanumeric();
    match bytes[0] {
        b'^' if bytes.len() > 1 && ident_start(bytes[1]) => {
            (Some(Terminal::Id), 2 + bytes[2..].iter().take_while(|b| ident_part(b)).count())
        }
        b if ident_start(b) => (Some(Terminal::Id), 1 + bytes[1..].iter().take_while(|b| ident_part(b)).count()),
        b if b.is_ascii_digit() => (Some(Terminal::Int), bytes.iter().take_while(|b| b.is_ascii_digit()).count()),
        q @ (b'"' | b'\'') => {
            let mut k = 1;
            while k < bytes.len() {
                match bytes[k] {
                    b'\\' => k += 2,
                    c if c == q => return (Some(Terminal::String), k + 1),
                    _ => k += 1,
                }
            }
            (None, 0)
        }
        _ => (None, 0),
    }
}
