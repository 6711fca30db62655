//! Lossless concrete syntax trees for DSL instances.
//!
//! Every byte of the source ends up either in a token's text or in one of
//! its trivia lists, so [`CstDocument::render`] reproduces the input exactly.
//! Trivia on the same line after a token (up to and including the newline)
//! is that token's trailing trivia; everything else leads the next token.
//! The last token additionally absorbs all end-of-file trivia.

pub mod comments;
mod lexer;
mod parser;
mod validate;

use std::fmt;
use std::ops::Range;

use serde::Serialize;
use thiserror::Error;

use crate::grammar::{AssignOp, Grammar, GrammarPath, Terminal};

pub use lexer::{lex, LexKind, Lexeme};
pub use parser::{parse_instance, parse_instance_with, ParseOptions, DEFAULT_BACKTRACK_BUDGET};
pub use validate::{validate, validate_with, ValidationError, ValidationReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TriviaKind {
    Whitespace,
    Newline,
    LineComment,
    BlockComment,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trivia {
    pub kind: TriviaKind,
    pub text: String,
}

impl Trivia {
    pub fn new(kind: TriviaKind, text: impl Into<String>) -> Self {
        Trivia { kind, text: text.into() }
    }

    pub fn is_comment(&self) -> bool {
        matches!(self.kind, TriviaKind::LineComment | TriviaKind::BlockComment)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Keyword,
    Terminal(Terminal),
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Keyword => f.write_str("keyword"),
            TokenKind::Terminal(t) => write!(f, "{t}"),
        }
    }
}

/// Stable identity of a token within one document lineage. Tokens created by
/// a migration get fresh ids above every id of the parsed document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct TokenId(pub u32);

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub id: TokenId,
    pub kind: TokenKind,
    pub text: String,
    pub leading: Vec<Trivia>,
    pub trailing: Vec<Trivia>,
    /// Byte range of `text` in [`CstDocument::source`].
    pub span: Range<usize>,
}

impl Token {
    pub fn comments(&self) -> impl Iterator<Item = &Trivia> {
        self.leading.iter().chain(&self.trailing).filter(|t| t.is_comment())
    }
}

/// Where in the rule body a child came from: the index path of the grammar
/// element that produced it, and one iteration counter per repetition on
/// that path (outermost first).
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Origin {
    pub path: GrammarPath,
    pub iterations: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CstElement {
    Node(CstNode),
    Token(Token),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CstChild {
    pub element: CstElement,
    pub origin: Origin,
    pub feature: Option<String>,
    pub op: Option<AssignOp>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CstNode {
    pub rule: String,
    pub children: Vec<CstChild>,
}

impl CstNode {
    pub fn tokens(&self) -> Vec<&Token> {
        let mut out = Vec::new();
        self.collect_tokens(&mut out);
        out
    }

    fn collect_tokens<'a>(&'a self, out: &mut Vec<&'a Token>) {
        for child in &self.children {
            match &child.element {
                CstElement::Token(t) => out.push(t),
                CstElement::Node(n) => n.collect_tokens(out),
            }
        }
    }

    pub fn first_token(&self) -> Option<&Token> {
        self.children.iter().find_map(|c| match &c.element {
            CstElement::Token(t) => Some(t),
            CstElement::Node(n) => n.first_token(),
        })
    }

    pub fn last_token(&self) -> Option<&Token> {
        self.children.iter().rev().find_map(|c| match &c.element {
            CstElement::Token(t) => Some(t),
            CstElement::Node(n) => n.last_token(),
        })
    }

    /// All nodes of the given rule, in document order (this node included).
    pub fn nodes_of_rule<'a>(&'a self, rule: &str) -> Vec<&'a CstNode> {
        let mut out = Vec::new();
        self.walk_nodes(&mut |n| {
            if n.rule == rule {
                out.push(n);
            }
        });
        out
    }

    pub fn walk_nodes<'a>(&'a self, f: &mut impl FnMut(&'a CstNode)) {
        f(self);
        for child in &self.children {
            if let CstElement::Node(n) = &child.element {
                n.walk_nodes(f);
            }
        }
    }
}

impl CstChild {
    pub fn last_token(&self) -> Option<&Token> {
        match &self.element {
            CstElement::Token(t) => Some(t),
            CstElement::Node(n) => n.last_token(),
        }
    }

    pub fn first_token(&self) -> Option<&Token> {
        match &self.element {
            CstElement::Token(t) => Some(t),
            CstElement::Node(n) => n.first_token(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CstDocument {
    pub root: CstNode,
    pub source: String,
    pub grammar_name: String,
    /// Trivia of a document without any token (comments-only files).
    pub dangling: Vec<Trivia>,
}

impl CstDocument {
    /// Concatenation of every token's leading trivia, text and trailing trivia.
    pub fn render(&self) -> String {
        let mut out = String::with_capacity(self.source.len() + 16);
        for t in &self.dangling {
            out.push_str(&t.text);
        }
        for tok in self.root.tokens() {
            for t in &tok.leading {
                out.push_str(&t.text);
            }
            out.push_str(&tok.text);
            for t in &tok.trailing {
                out.push_str(&t.text);
            }
        }
        out
    }

    pub fn tokens(&self) -> Vec<&Token> {
        self.root.tokens()
    }

    /// 1-based line of a byte offset in `source`.
    pub fn line_of(&self, offset: usize) -> usize {
        line_of(&self.source, offset)
    }

    /// Every comment trivia text in document order.
    pub fn comments(&self) -> Vec<&str> {
        let mut out: Vec<&str> = self
            .dangling
            .iter()
            .filter(|t| t.is_comment())
            .map(|t| t.text.as_str())
            .collect();
        for tok in self.root.tokens() {
            out.extend(tok.comments().map(|t| t.text.as_str()));
        }
        out
    }
}

pub(crate) fn line_of(text: &str, offset: usize) -> usize {
    text.as_bytes()[..offset.min(text.len())].iter().filter(|&&b| b == b'\n').count() + 1
}

pub(crate) fn col_of(text: &str, offset: usize) -> usize {
    let offset = offset.min(text.len());
    let start = text[..offset].rfind('\n').map_or(0, |i| i + 1);
    text[start..offset].chars().count() + 1
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CstError {
    #[error("parse error at {line}:{col}: expected {}, found {found}", .expected.join(" or "))]
    Parse {
        line: usize,
        col: usize,
        expected: Vec<String>,
        found: String,
    },
    #[error("backtracking budget of {budget} steps exceeded")]
    AmbiguityLimitExceeded { budget: usize },
    #[error("left recursion through rule `{0}`")]
    LeftRecursion(String),
}

/// Parses and renders in one step; used by tests and the losslessness check.
pub fn roundtrip(source: &str, grammar: &Grammar) -> Result<String, CstError> {
    parse_instance(source, grammar).map(|d| d.render())
}
