//! The supported subset of the Xtext grammar language.
//!
//! A [`Grammar`] is an ordered list of parser rules plus the opaque header
//! text found before the first rule. Rule bodies are [`GrammarExpr`] trees in
//! which every sequence is an explicit [`GrammarExpr::Group`]: the body of a
//! rule, each option of an alternative and each parenthesized expression are
//! groups, even when they hold a single item. Index paths into a body are
//! therefore stable between two grammar versions, which the diff and the
//! migration engine rely on.

mod analysis;
mod parser;
mod printer;

use std::collections::BTreeSet;
use std::fmt;

use serde::{Serialize, Serializer};
use thiserror::Error;

pub use analysis::{accepts_superset, first_set, reachable_via_alternatives, FirstSet, TokenMatcher};
pub use parser::parse_grammar;

/// Index path of an element inside a rule body.
///
/// Each step selects a group item, an alternative option, or (step `0`) the
/// operand of an assignment / the inner expression of a repetition.
pub type GrammarPath = Vec<u32>;

/// Terminals every grammar gets for free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Terminal {
    #[serde(rename = "ID")]
    Id,
    #[serde(rename = "INT")]
    Int,
    #[serde(rename = "STRING")]
    String,
}

impl Terminal {
    pub fn from_name(name: &str) -> Option<Terminal> {
        match name {
            "ID" => Some(Terminal::Id),
            "INT" => Some(Terminal::Int),
            "STRING" => Some(Terminal::String),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Terminal::Id => "ID",
            Terminal::Int => "INT",
            Terminal::String => "STRING",
        }
    }
}

impl fmt::Display for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum AssignOp {
    #[serde(rename = "=")]
    Set,
    #[serde(rename = "+=")]
    Add,
    #[serde(rename = "?=")]
    Flag,
}

impl AssignOp {
    pub fn as_str(self) -> &'static str {
        match self {
            AssignOp::Set => "=",
            AssignOp::Add => "+=",
            AssignOp::Flag => "?=",
        }
    }
}

impl fmt::Display for AssignOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Cardinality suffix of a repeated element. `One` never appears inside a
/// grammar tree; it only describes the absence of a suffix in diffs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Cardinality {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "?")]
    Optional,
    #[serde(rename = "*")]
    ZeroOrMore,
    #[serde(rename = "+")]
    OneOrMore,
}

impl Cardinality {
    pub fn as_str(self) -> &'static str {
        match self {
            Cardinality::One => "",
            Cardinality::Optional => "?",
            Cardinality::ZeroOrMore => "*",
            Cardinality::OneOrMore => "+",
        }
    }

    /// Whether `count` repetitions are allowed.
    pub fn admits(self, count: usize) -> bool {
        match self {
            Cardinality::One => count == 1,
            Cardinality::Optional => count <= 1,
            Cardinality::ZeroOrMore => true,
            Cardinality::OneOrMore => count >= 1,
        }
    }

    /// Whether every repetition count admitted by `self` is admitted by `other`.
    pub fn is_within(self, other: Cardinality) -> bool {
        let min_ok = match self {
            Cardinality::Optional | Cardinality::ZeroOrMore => other.admits(0),
            Cardinality::One | Cardinality::OneOrMore => true,
        };
        let max_ok = match self {
            Cardinality::One | Cardinality::Optional => other.admits(1),
            Cardinality::ZeroOrMore | Cardinality::OneOrMore => {
                matches!(other, Cardinality::ZeroOrMore | Cardinality::OneOrMore)
            }
        };
        min_ok && max_ok
    }

    /// `?` and `*`: zero repetitions are fine.
    pub fn is_optional(self) -> bool {
        self.admits(0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum GrammarExpr {
    Keyword(String),
    RuleCall(String),
    Assignment {
        feature: String,
        op: AssignOp,
        operand: Box<GrammarExpr>,
    },
    /// `[target|syntax]`; `syntax` is `ID` when the source omits it.
    CrossRef { target: String, syntax: String },
    Group(Vec<GrammarExpr>),
    Alternatives(Vec<GrammarExpr>),
    Repeat {
        inner: Box<GrammarExpr>,
        card: Cardinality,
    },
}

impl GrammarExpr {
    pub fn kind_name(&self) -> &'static str {
        match self {
            GrammarExpr::Keyword(_) => "keyword",
            GrammarExpr::RuleCall(_) => "rule_call",
            GrammarExpr::Assignment { .. } => "assignment",
            GrammarExpr::CrossRef { .. } => "cross_ref",
            GrammarExpr::Group(_) => "group",
            GrammarExpr::Alternatives(_) => "alternatives",
            GrammarExpr::Repeat { .. } => "repeat",
        }
    }

    /// The element a path step leads to, if it exists.
    pub fn child(&self, step: u32) -> Option<&GrammarExpr> {
        match self {
            GrammarExpr::Group(items) | GrammarExpr::Alternatives(items) => items.get(step as usize),
            GrammarExpr::Assignment { operand, .. } if step == 0 => Some(operand),
            GrammarExpr::Repeat { inner, .. } if step == 0 => Some(inner),
            _ => None,
        }
    }

    pub fn at_path(&self, path: &[u32]) -> Option<&GrammarExpr> {
        path.iter().try_fold(self, |expr, &step| expr.child(step))
    }

    /// Calls `f` for every element of the tree, parents before children.
    pub fn walk<'a>(&'a self, f: &mut impl FnMut(&'a GrammarExpr)) {
        f(self);
        match self {
            GrammarExpr::Group(items) | GrammarExpr::Alternatives(items) => {
                for item in items {
                    item.walk(f);
                }
            }
            GrammarExpr::Assignment { operand, .. } => operand.walk(f),
            GrammarExpr::Repeat { inner, .. } => inner.walk(f),
            GrammarExpr::Keyword(_) | GrammarExpr::RuleCall(_) | GrammarExpr::CrossRef { .. } => {}
        }
    }
}

impl fmt::Display for GrammarExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&printer::expr_to_string(self, true))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub name: String,
    pub body: GrammarExpr,
}

impl Serialize for Rule {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut s = serializer.serialize_struct("Rule", 2)?;
        s.serialize_field("name", &self.name)?;
        s.serialize_field("body", &printer::expr_to_string(&self.body, true))?;
        s.end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grammar {
    pub name: String,
    /// Header lines before the first rule, verbatim.
    pub preamble: String,
    pub rules: Vec<Rule>,
}

impl Grammar {
    pub fn rule(&self, name: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.name == name)
    }

    /// The first rule is the entry rule of the language.
    pub fn entry(&self) -> &Rule {
        &self.rules[0]
    }

    /// Every keyword literal used anywhere in the grammar.
    pub fn keywords(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        for rule in &self.rules {
            rule.body.walk(&mut |e| {
                if let GrammarExpr::Keyword(k) = e {
                    out.insert(k.clone());
                }
            });
        }
        out
    }

    /// Pretty-printed grammar source. Re-parsing it yields an equal grammar.
    pub fn to_source(&self) -> String {
        printer::grammar_to_string(self)
    }

    /// Structural equality of the rule sets, ignoring name and preamble.
    pub fn same_rules(&self, other: &Grammar) -> bool {
        self.rules == other.rules
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error("syntax error at {line}:{col}: {message}")]
    Syntax {
        line: usize,
        col: usize,
        message: String,
    },
    #[error("duplicate rule `{0}`")]
    DuplicateRule(String),
    #[error("unresolved rule reference `{0}`")]
    UnresolvedRuleReference(String),
    #[error("unsupported construct: {0}")]
    UnsupportedConstruct(String),
}
