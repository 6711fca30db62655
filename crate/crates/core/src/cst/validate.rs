use std::collections::BTreeSet;

use serde::Serialize;

use super::lexer::{lex, LexKind};
use super::parser::{describe_token, recognize, significant, Failure, ParseOptions, SigTok};
use super::line_of;
use crate::grammar::{first_set, Cardinality, Grammar, GrammarExpr, TokenMatcher};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationError {
    /// 1-based line of the offending token (the last line for a premature end).
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub errors: Vec<ValidationError>,
    /// Number of distinct lines carrying at least one error.
    pub error_line_count: usize,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn error_lines(&self) -> BTreeSet<usize> {
        self.errors.iter().map(|e| e.line).collect()
    }
}

pub fn validate(source: &str, grammar: &Grammar) -> ValidationReport {
    validate_with(source, grammar, &ParseOptions::default())
}

/// Checks conformance and counts error lines.
///
/// After the first failure the scan resynchronizes at the next token that
/// starts a line and can begin an element of the entry rule's list (the first
/// `*`/`+` repetition in the entry rule), then parses the remainder of the
/// entry rule from there. Each failed region contributes the line of its
/// offending token.
pub fn validate_with(source: &str, grammar: &Grammar, options: &ParseOptions) -> ValidationReport {
    let lexemes = lex(source, grammar.keywords().iter().map(String::as_str));
    let sig = significant(source, &lexemes);
    let entry = grammar.entry();
    let mut errors = Vec::new();

    let mut farthest = match recognize(grammar, &sig, &entry.name, &entry.body, 0, options) {
        Ok(_) => return ValidationReport::default(),
        Err(failure) => match record(source, &sig, failure, &mut errors) {
            Some(f) => f,
            None => return finish(errors),
        },
    };

    let Some((resume, starters)) = resync_target(grammar) else {
        return finish(errors);
    };
    let mut last_sync: Option<usize> = None;
    loop {
        let from = match last_sync {
            Some(s) => farthest.max(s + 1),
            None => farthest,
        };
        let Some(sync) = (from..sig.len()).find(|&i| starts_line(source, &sig, i) && can_start(&sig[i], &starters))
        else {
            break;
        };
        last_sync = Some(sync);
        match recognize(grammar, &sig, &entry.name, &resume, sync, options) {
            Ok(_) => break,
            Err(failure) => match record(source, &sig, failure, &mut errors) {
                Some(f) => farthest = f,
                None => break,
            },
        }
    }
    finish(errors)
}

fn finish(errors: Vec<ValidationError>) -> ValidationReport {
    let error_line_count = errors.iter().map(|e| e.line).collect::<BTreeSet<_>>().len();
    ValidationReport { errors, error_line_count }
}

/// Appends the error for `failure`; returns the failing token index, or
/// `None` when scanning cannot continue.
fn record(source: &str, sig: &[SigTok<'_>], failure: Failure, errors: &mut Vec<ValidationError>) -> Option<usize> {
    match failure {
        Failure::NoMatch { farthest, expected } => {
            let line = match sig.get(farthest) {
                Some(t) => line_of(source, t.start),
                None => sig.last().map_or(1, |t| line_of(source, t.end.saturating_sub(1))),
            };
            let expected: Vec<_> = expected.into_iter().collect();
            errors.push(ValidationError {
                line,
                message: format!("expected {}, found {}", expected.join(" or "), describe_token(sig.get(farthest))),
            });
            Some(farthest)
        }
        Failure::Fatal(e) => {
            errors.push(ValidationError { line: 1, message: e.to_string() });
            None
        }
    }
}

/// The tail of the entry rule starting at its element list, and the tokens
/// that can begin one list element.
fn resync_target(grammar: &Grammar) -> Option<(GrammarExpr, BTreeSet<TokenMatcher>)> {
    let GrammarExpr::Group(items) = &grammar.entry().body else {
        return None;
    };
    let (index, inner) = items.iter().enumerate().find_map(|(i, item)| match item {
        GrammarExpr::Repeat { inner, card: Cardinality::ZeroOrMore | Cardinality::OneOrMore } => Some((i, inner)),
        _ => None,
    })?;
    let starters = first_set(grammar, inner).tokens;
    Some((GrammarExpr::Group(items[index..].to_vec()), starters))
}

fn starts_line(source: &str, sig: &[SigTok<'_>], i: usize) -> bool {
    i == 0 || line_of(source, sig[i - 1].end.saturating_sub(1)) < line_of(source, sig[i].start)
}

fn can_start(tok: &SigTok<'_>, starters: &BTreeSet<TokenMatcher>) -> bool {
    match tok.kind {
        LexKind::Keyword => starters.contains(&TokenMatcher::Keyword(tok.text.to_string())),
        LexKind::Terminal(t) => starters.contains(&TokenMatcher::Terminal(t)),
        LexKind::Unknown => false,
    }
}
