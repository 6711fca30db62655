use serde::Serialize;

use crate::cst::comments::scan;
use crate::cst::{lex, LexKind, Lexeme};
use crate::grammar::{first_set, Grammar, TokenMatcher};

/// What the extracted text is checked against.
#[derive(Debug, Clone, Copy)]
pub struct ExtractContext<'a> {
    pub original: &'a str,
    pub grammar: &'a Grammar,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Extraction {
    Instance { text: String },
    /// A candidate was found but looks cut off.
    Truncated { partial: String },
    NoInstanceFound,
}

/// Finds the migrated instance in an LLM response. The result is always a
/// contiguous slice of `raw`.
pub fn extract_instance(raw: &str, context: &ExtractContext<'_>) -> Extraction {
    let (candidate, unclosed) = match fenced_block(raw) {
        Some(found) => found,
        None if starts_like_instance(raw, context.grammar) => (raw, false),
        None => return Extraction::NoInstanceFound,
    };
    if unclosed || looks_truncated(candidate, context.original) {
        Extraction::Truncated { partial: candidate.to_string() }
    } else {
        Extraction::Instance { text: candidate.to_string() }
    }
}

/// Content of the first ``` block and whether its closing fence is missing.
fn fenced_block(raw: &str) -> Option<(&str, bool)> {
    let mut offset = 0;
    let mut start = None;
    for line in raw.split_inclusive('\n') {
        let is_fence = line.trim_start().starts_with("```");
        match start {
            None if is_fence => start = Some(offset + line.len()),
            Some(s) if is_fence => return Some((&raw[s..offset], false)),
            _ => {}
        }
        offset += line.len();
    }
    start.map(|s| (&raw[s.min(raw.len())..], true))
}

fn starts_like_instance(raw: &str, grammar: &Grammar) -> bool {
    let lexemes = lex(raw, grammar.keywords().iter().map(String::as_str));
    let Some((kind, span)) = lexemes.iter().find_map(|l| match l {
        Lexeme::Token { kind, span } => Some((*kind, span.clone())),
        Lexeme::Trivia { .. } => None,
    }) else {
        return false;
    };
    let starters = first_set(grammar, &grammar.entry().body).tokens;
    match kind {
        LexKind::Keyword => starters.contains(&TokenMatcher::Keyword(raw[span].to_string())),
        LexKind::Terminal(t) => starters.contains(&TokenMatcher::Terminal(t)),
        LexKind::Unknown => false,
    }
}

fn looks_truncated(candidate: &str, original: &str) -> bool {
    let got = scan(candidate);
    let want = scan(original);
    let (got_lines, want_lines) = (candidate.lines().count(), original.lines().count());
    got.unterminated_block || got.brace_balance != want.brace_balance || got_lines * 5 <= want_lines * 4
}
