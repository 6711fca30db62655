//! Grammar-interpreting recursive descent with PEG semantics: alternatives
//! are tried in order and the first match wins, repetitions are greedy, and
//! backtracking over consumed tokens is bounded by a step budget.

use std::collections::{BTreeSet, HashSet};

use super::lexer::{lex, LexKind, Lexeme};
use super::{
    col_of, line_of, CstChild, CstDocument, CstElement, CstError, CstNode, Origin, Token, TokenId,
    TokenKind, Trivia,
};
use crate::grammar::{AssignOp, Cardinality, Grammar, GrammarExpr, Terminal};

pub const DEFAULT_BACKTRACK_BUDGET: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseOptions {
    /// Maximum number of times the parser may rewind over consumed tokens.
    pub backtrack_budget: usize,
}

impl Default for ParseOptions {
    fn default() -> Self {
        ParseOptions { backtrack_budget: DEFAULT_BACKTRACK_BUDGET }
    }
}

pub fn parse_instance(source: &str, grammar: &Grammar) -> Result<CstDocument, CstError> {
    parse_instance_with(source, grammar, &ParseOptions::default())
}

pub fn parse_instance_with(
    source: &str,
    grammar: &Grammar,
    options: &ParseOptions,
) -> Result<CstDocument, CstError> {
    let lexemes = lex(source, grammar.keywords().iter().map(String::as_str));
    let sig = significant(source, &lexemes);
    let entry = grammar.entry();
    let node = match recognize(grammar, &sig, &entry.name, &entry.body, 0, options) {
        Ok(node) => node,
        Err(Failure::NoMatch { farthest, expected }) => {
            return Err(parse_error(source, &sig, farthest, expected))
        }
        Err(Failure::Fatal(e)) => return Err(e),
    };
    let (mut tokens, dangling) = attach_trivia(source, &lexemes);
    let root = materialize(node, &mut tokens);
    Ok(CstDocument {
        root,
        source: source.to_string(),
        grammar_name: grammar.name.clone(),
        dangling,
    })
}

/// A non-trivia lexeme as seen by the recognizer.
#[derive(Debug, Clone)]
pub(crate) struct SigTok<'s> {
    pub kind: LexKind,
    pub text: &'s str,
    pub start: usize,
    pub end: usize,
}

pub(crate) fn significant<'s>(source: &'s str, lexemes: &[Lexeme]) -> Vec<SigTok<'s>> {
    lexemes
        .iter()
        .filter_map(|l| match l {
            Lexeme::Token { kind, span } => Some(SigTok {
                kind: *kind,
                text: &source[span.clone()],
                start: span.start,
                end: span.end,
            }),
            Lexeme::Trivia { .. } => None,
        })
        .collect()
}

pub(crate) fn describe_token(tok: Option<&SigTok<'_>>) -> String {
    match tok {
        None => "end of input".into(),
        Some(t) => match t.kind {
            LexKind::Keyword => format!("'{}'", t.text),
            LexKind::Terminal(term) => format!("{term} `{}`", t.text),
            LexKind::Unknown => format!("unexpected input `{}`", t.text.lines().next().unwrap_or("")),
        },
    }
}

fn parse_error(source: &str, sig: &[SigTok<'_>], farthest: usize, expected: BTreeSet<String>) -> CstError {
    let offset = sig.get(farthest).map_or(source.len(), |t| t.start);
    CstError::Parse {
        line: line_of(source, offset),
        col: col_of(source, offset),
        expected: expected.into_iter().collect(),
        found: describe_token(sig.get(farthest)),
    }
}

#[derive(Debug)]
pub(crate) enum Failure {
    NoMatch { farthest: usize, expected: BTreeSet<String> },
    Fatal(CstError),
}

#[derive(Debug)]
pub(crate) enum PChild {
    Tok(usize),
    Node(PNode),
}

#[derive(Debug)]
pub(crate) struct PEntry {
    child: PChild,
    origin: Origin,
    assign: Option<(String, AssignOp)>,
}

#[derive(Debug)]
pub(crate) struct PNode {
    rule: String,
    children: Vec<PEntry>,
}

/// Matches `body` (as the body of a pseudo-rule named `rule`) against
/// `sig[start..]`, requiring that every remaining token is consumed.
pub(crate) fn recognize(
    grammar: &Grammar,
    sig: &[SigTok<'_>],
    rule: &str,
    body: &GrammarExpr,
    start: usize,
    options: &ParseOptions,
) -> Result<PNode, Failure> {
    let mut interp = Interp {
        grammar,
        sig,
        budget: options.backtrack_budget,
        backtracks: 0,
        farthest: start,
        expected: BTreeSet::new(),
        active: HashSet::new(),
    };
    let mut children = Vec::new();
    let mut ctx = Ctx::default();
    let result = interp.expr(body, start, &mut ctx, &mut children);
    match result {
        Ok(end) if end == sig.len() => Ok(PNode { rule: rule.to_string(), children }),
        Ok(end) => {
            interp.fail_at(end, "end of input");
            Err(interp.no_match())
        }
        Err(Halt::NoMatch(_)) => Err(interp.no_match()),
        Err(Halt::Fatal(e)) => Err(Failure::Fatal(e)),
    }
}

enum Halt {
    /// Carries the largest token index examined by the failed attempt.
    NoMatch(usize),
    Fatal(CstError),
}

#[derive(Default)]
struct Ctx {
    path: Vec<u32>,
    iterations: Vec<u32>,
    assign: Option<(String, AssignOp)>,
}

struct Interp<'g, 's> {
    grammar: &'g Grammar,
    sig: &'s [SigTok<'s>],
    budget: usize,
    backtracks: usize,
    farthest: usize,
    expected: BTreeSet<String>,
    active: HashSet<(&'g str, usize)>,
}

impl<'g, 's> Interp<'g, 's> {
    fn no_match(&mut self) -> Failure {
        Failure::NoMatch { farthest: self.farthest, expected: std::mem::take(&mut self.expected) }
    }

    fn fail_at(&mut self, pos: usize, expected: &str) {
        if pos > self.farthest {
            self.farthest = pos;
            self.expected.clear();
        }
        if pos == self.farthest {
            self.expected.insert(expected.to_string());
        }
    }

    fn backtrack(&mut self) -> Result<(), Halt> {
        self.backtracks += 1;
        if self.backtracks > self.budget {
            Err(Halt::Fatal(CstError::AmbiguityLimitExceeded { budget: self.budget }))
        } else {
            Ok(())
        }
    }

    fn leaf(&self, pos: usize, ctx: &Ctx, out: &mut Vec<PEntry>) -> usize {
        out.push(PEntry {
            child: PChild::Tok(pos),
            origin: Origin { path: ctx.path.clone(), iterations: ctx.iterations.clone() },
            assign: ctx.assign.clone(),
        });
        pos + 1
    }

    fn expr(&mut self, e: &'g GrammarExpr, pos: usize, ctx: &mut Ctx, out: &mut Vec<PEntry>) -> Result<usize, Halt> {
        match e {
            GrammarExpr::Keyword(text) => match self.sig.get(pos) {
                Some(t) if t.kind == LexKind::Keyword && t.text == text => Ok(self.leaf(pos, ctx, out)),
                _ => {
                    self.fail_at(pos, &format!("'{text}'"));
                    Err(Halt::NoMatch(pos))
                }
            },
            GrammarExpr::RuleCall(name) | GrammarExpr::CrossRef { syntax: name, .. } => {
                self.call(name, pos, ctx, out)
            }
            GrammarExpr::Assignment { feature, op, operand } => {
                let saved = ctx.assign.replace((feature.clone(), *op));
                ctx.path.push(0);
                let r = self.expr(operand, pos, ctx, out);
                ctx.path.pop();
                ctx.assign = saved;
                r
            }
            GrammarExpr::Group(items) => {
                let mut p = pos;
                for (i, item) in items.iter().enumerate() {
                    ctx.path.push(i as u32);
                    let r = self.expr(item, p, ctx, out);
                    ctx.path.pop();
                    p = r?;
                }
                Ok(p)
            }
            GrammarExpr::Alternatives(options) => {
                let mut reached = pos;
                for (i, option) in options.iter().enumerate() {
                    let mark = out.len();
                    ctx.path.push(i as u32);
                    let r = self.expr(option, pos, ctx, out);
                    ctx.path.pop();
                    match r {
                        Ok(p) => return Ok(p),
                        Err(Halt::NoMatch(at)) => {
                            out.truncate(mark);
                            reached = reached.max(at);
                            if at > pos {
                                self.backtrack()?;
                            }
                        }
                        Err(fatal) => return Err(fatal),
                    }
                }
                Err(Halt::NoMatch(reached))
            }
            GrammarExpr::Repeat { inner, card } => self.repeat(inner, *card, pos, ctx, out),
        }
    }

    fn repeat(
        &mut self,
        inner: &'g GrammarExpr,
        card: Cardinality,
        pos: usize,
        ctx: &mut Ctx,
        out: &mut Vec<PEntry>,
    ) -> Result<usize, Halt> {
        let single = matches!(card, Cardinality::Optional | Cardinality::One);
        let mut p = pos;
        let mut count = 0u32;
        let mut failed_at = pos;
        ctx.path.push(0);
        ctx.iterations.push(0);
        let result = loop {
            if single && count == 1 {
                break Ok(());
            }
            *ctx.iterations.last_mut().unwrap() = count;
            let mark = out.len();
            match self.expr(inner, p, ctx, out) {
                Ok(np) => {
                    count += 1;
                    if np == p {
                        break Ok(());
                    }
                    p = np;
                }
                Err(Halt::NoMatch(at)) => {
                    out.truncate(mark);
                    failed_at = at;
                    if at > p {
                        if let Err(e) = self.backtrack() {
                            break Err(e);
                        }
                    }
                    break Ok(());
                }
                Err(fatal) => break Err(fatal),
            }
        };
        ctx.path.pop();
        ctx.iterations.pop();
        result?;
        if count == 0 && matches!(card, Cardinality::OneOrMore | Cardinality::One) {
            return Err(Halt::NoMatch(failed_at));
        }
        Ok(p)
    }

    fn call(&mut self, name: &'g str, pos: usize, ctx: &mut Ctx, out: &mut Vec<PEntry>) -> Result<usize, Halt> {
        if let Some(term) = Terminal::from_name(name) {
            return match self.sig.get(pos) {
                Some(t) if t.kind == LexKind::Terminal(term) => Ok(self.leaf(pos, ctx, out)),
                _ => {
                    self.fail_at(pos, term.name());
                    Err(Halt::NoMatch(pos))
                }
            };
        }
        let rule = self
            .grammar
            .rule(name)
            .expect("rule references are resolved when the grammar is parsed");
        if !self.active.insert((rule.name.as_str(), pos)) {
            return Err(Halt::Fatal(CstError::LeftRecursion(rule.name.clone())));
        }
        let mut children = Vec::new();
        let mut sub = Ctx::default();
        let r = self.expr(&rule.body, pos, &mut sub, &mut children);
        self.active.remove(&(rule.name.as_str(), pos));
        let end = r?;
        out.push(PEntry {
            child: PChild::Node(PNode { rule: rule.name.clone(), children }),
            origin: Origin { path: ctx.path.clone(), iterations: ctx.iterations.clone() },
            assign: ctx.assign.clone(),
        });
        Ok(end)
    }
}

/// Builds tokens with their trivia, indexed like the significant lexemes.
fn attach_trivia(source: &str, lexemes: &[Lexeme]) -> (Vec<Option<Token>>, Vec<Trivia>) {
    let mut tokens: Vec<Option<Token>> = Vec::new();
    let mut pending: Vec<Trivia> = Vec::new();
    let mut in_trailing = false;
    for lexeme in lexemes {
        match lexeme {
            Lexeme::Token { kind, span } => {
                let kind = match kind {
                    LexKind::Keyword => TokenKind::Keyword,
                    LexKind::Terminal(t) => TokenKind::Terminal(*t),
                    LexKind::Unknown => unreachable!("a successful parse never contains unknown input"),
                };
                tokens.push(Some(Token {
                    id: TokenId(tokens.len() as u32),
                    kind,
                    text: source[span.clone()].to_string(),
                    leading: std::mem::take(&mut pending),
                    trailing: Vec::new(),
                    span: span.clone(),
                }));
                in_trailing = true;
            }
            Lexeme::Trivia { kind, span } => {
                let trivia = Trivia::new(*kind, &source[span.clone()]);
                let multi_line = trivia.text.contains('\n');
                if in_trailing && !(multi_line && *kind == super::TriviaKind::BlockComment) {
                    let last = tokens.last_mut().and_then(Option::as_mut).expect("trailing follows a token");
                    last.trailing.push(trivia);
                    if *kind == super::TriviaKind::Newline {
                        in_trailing = false;
                    }
                } else {
                    in_trailing = false;
                    pending.push(trivia);
                }
            }
        }
    }
    match tokens.last_mut().and_then(Option::as_mut) {
        Some(last) => {
            last.trailing.append(&mut pending);
            (tokens, Vec::new())
        }
        None => (tokens, pending),
    }
}

fn materialize(node: PNode, tokens: &mut [Option<Token>]) -> CstNode {
    let children = node
        .children
        .into_iter()
        .map(|entry| {
            let element = match entry.child {
                PChild::Tok(i) => CstElement::Token(tokens[i].take().expect("each token is used once")),
                PChild::Node(n) => CstElement::Node(materialize(n, tokens)),
            };
            let (feature, op) = match entry.assign {
                Some((f, o)) => (Some(f), Some(o)),
                None => (None, None),
            };
            CstChild { element, origin: entry.origin, feature, op }
        })
        .collect();
    CstNode { rule: node.rule, children }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_grammar;

    #[test]
    fn ordered_choice_with_backtracking() {
        let g = parse_grammar("M: (xs+=X)*; X: A | B; A: 'a' 'b' 'c'; B: 'a' 'b' 'd';").unwrap();
        let doc = parse_instance("a b d a b c", &g).unwrap();
        let rules: Vec<_> = doc.root.nodes_of_rule("B").iter().map(|n| n.rule.clone()).collect();
        assert_eq!(rules.len(), 1);
    }

    #[test]
    fn backtrack_budget_is_enforced() {
        let g = parse_grammar("M: (xs+=X)*; X: A | B; A: 'a' 'b' 'c'; B: 'a' 'b' 'd';").unwrap();
        let src = "a b d ".repeat(20);
        let tight = ParseOptions { backtrack_budget: 5 };
        assert_eq!(
            parse_instance_with(&src, &g, &tight).unwrap_err(),
            CstError::AmbiguityLimitExceeded { budget: 5 }
        );
        assert!(parse_instance(&src, &g).is_ok());
    }

    #[test]
    fn left_recursion_is_an_error() {
        let g = parse_grammar("E: E '+' 'x' | 'x';").unwrap();
        assert_eq!(parse_instance("x", &g).unwrap_err(), CstError::LeftRecursion("E".into()));
    }

    #[test]
    fn error_reports_expected_set() {
        let g = parse_grammar("M: 'a' (',' | ';') 'b';").unwrap();
        match parse_instance("a\n  b", &g).unwrap_err() {
            CstError::Parse { line, col, expected, found } => {
                assert_eq!((line, col), (2, 3));
                assert_eq!(expected, vec!["','".to_string(), "';'".to_string()]);
                assert_eq!(found, "'b'");
            }
            other => panic!("{other:?}"),
        }
    }
}
