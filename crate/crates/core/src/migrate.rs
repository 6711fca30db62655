//! Deterministic instance migration: a grammar diff becomes a list of token
//! edits on the instance CST, applied without touching unrelated trivia.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::Serialize;
use thiserror::Error;

use crate::cst::{
    parse_instance, validate, CstChild, CstDocument, CstElement, CstError, CstNode, Token, TokenId, TokenKind,
    Trivia, TriviaKind, ValidationError,
};
use crate::gdiff::{diff_grammars, ElementEdit, GrammarDiff, InsertionAnchor, Reachability};
use crate::grammar::{Grammar, GrammarExpr};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Before,
    After,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TriviaPolicy {
    /// Comments, newlines and indentation of the deleted token move to the
    /// next token.
    KeepLeading,
    /// Only newlines survive, so line numbers stay put.
    DropAll,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum CstEdit {
    InsertToken { anchor: TokenId, side: Side, text: String },
    DeleteToken { id: TokenId, trivia: TriviaPolicy },
    ReplaceTokenText { id: TokenId, text: String },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MigrationPlan {
    pub edits: Vec<CstEdit>,
    /// 1-based lines of the original instance that the edits change.
    pub touched_lines: BTreeSet<usize>,
}

impl MigrationPlan {
    pub fn is_empty(&self) -> bool {
        self.edits.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanOutcome {
    Plan(MigrationPlan),
    NeedsLlm(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MigrationOutcome {
    Migrated { text: String, plan: MigrationPlan },
    NeedsLlm(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MigrationError {
    #[error("instance does not conform to the old grammar: {0}")]
    Parse(#[from] CstError),
    #[error("instance and grammar disagree: {0}")]
    InternalMismatch(String),
    #[error("migrated instance does not conform to the new grammar ({} errors)", .errors.len())]
    PostconditionViolated { errors: Vec<ValidationError> },
    #[error("migration lost or changed comments")]
    CommentsChanged,
}

/// Parses `source` with `old`, plans and applies the migration to `new`,
/// and checks the result against `new`.
pub fn migrate_deterministic(source: &str, old: &Grammar, new: &Grammar) -> Result<MigrationOutcome, MigrationError> {
    let doc = parse_instance(source, old)?;
    let diff = diff_grammars(old, new);
    let plan = match plan_migration(&doc, old, new, &diff)? {
        PlanOutcome::Plan(plan) => plan,
        PlanOutcome::NeedsLlm(reasons) => return Ok(MigrationOutcome::NeedsLlm(reasons)),
    };
    let migrated = apply_plan(&doc, &plan);
    let text = migrated.render();
    let report = validate(&text, new);
    if !report.is_valid() {
        return Err(MigrationError::PostconditionViolated { errors: report.errors });
    }
    if migrated.comments() != doc.comments() {
        return Err(MigrationError::CommentsChanged);
    }
    Ok(MigrationOutcome::Migrated { text, plan })
}

pub fn plan_migration(
    doc: &CstDocument,
    old: &Grammar,
    new: &Grammar,
    diff: &GrammarDiff,
) -> Result<PlanOutcome, MigrationError> {
    if doc.grammar_name != old.name {
        return Err(MigrationError::InternalMismatch(format!(
            "instance was parsed with grammar `{}`, expected `{}`",
            doc.grammar_name, old.name
        )));
    }
    let mut nodes: Vec<(&CstNode, usize)> = Vec::new();
    visit(&doc.root, 0, &mut |n, depth| nodes.push((n, depth)));
    for (node, _) in &nodes {
        if old.rule(&node.rule).is_none() {
            return Err(MigrationError::InternalMismatch(format!("rule `{}` is not in the old grammar", node.rule)));
        }
    }

    let tokens = doc.tokens();
    let previous = tokens.windows(2).map(|w| (w[1].id, w[0])).collect();
    let mut planner = Planner { doc, previous, reasons: Vec::new(), inserts: Vec::new(), deletes: Vec::new() };
    if old.entry().name != new.entry().name {
        planner.reasons.push(format!("entry rule changed from {} to {}", old.entry().name, new.entry().name));
    }
    for name in &diff.removed {
        if nodes.iter().any(|(n, _)| &n.rule == name) {
            planner.reasons.push(format!("removed rule {name} is used by the instance"));
        }
    }
    for added in &diff.added {
        if added.reachability == Reachability::Mandatory {
            planner.reasons.push(format!("new rule {} must be instantiated", added.rule.name));
        }
    }
    for modification in &diff.modified {
        let old_body = &old.rule(&modification.rule).expect("modified rules exist in both").body;
        let occurrences: Vec<_> = nodes.iter().filter(|(n, _)| n.rule == modification.rule).collect();
        for edit in &modification.edits {
            for &&(node, depth) in &occurrences {
                planner.edit(&modification.rule, old_body, node, depth, edit);
            }
        }
    }

    if !planner.reasons.is_empty() {
        return Ok(PlanOutcome::NeedsLlm(planner.reasons));
    }
    let Planner { inserts, deletes, .. } = planner;
    let mut plan = MigrationPlan::default();
    let mut inserts = inserts;
    // Tokens appended after the same anchor go innermost first; tokens put
    // before it go outermost first.
    inserts.sort_by_key(|i| match i.side {
        Side::After => (i.order, usize::MAX - i.depth),
        Side::Before => (i.order, i.depth),
    });
    for insert in inserts {
        plan.touched_lines.insert(insert.line);
        plan.edits.push(CstEdit::InsertToken { anchor: insert.anchor, side: insert.side, text: insert.text });
    }
    for (id, line) in deletes {
        plan.touched_lines.insert(line);
        plan.edits.push(CstEdit::DeleteToken { id, trivia: TriviaPolicy::KeepLeading });
    }
    Ok(PlanOutcome::Plan(plan))
}

fn visit<'a>(node: &'a CstNode, depth: usize, f: &mut impl FnMut(&'a CstNode, usize)) {
    f(node, depth);
    for child in &node.children {
        if let CstElement::Node(n) = &child.element {
            visit(n, depth + 1, f);
        }
    }
}

struct PendingInsert {
    anchor: TokenId,
    side: Side,
    text: String,
    depth: usize,
    line: usize,
    /// Position of the anchor in document order.
    order: usize,
}

struct Planner<'d> {
    doc: &'d CstDocument,
    previous: HashMap<TokenId, &'d Token>,
    reasons: Vec<String>,
    inserts: Vec<PendingInsert>,
    deletes: Vec<(TokenId, usize)>,
}

impl Planner<'_> {
    fn line_start(&self, tok: &Token) -> usize {
        self.doc.line_of(tok.span.start)
    }

    fn line_end(&self, tok: &Token) -> usize {
        self.doc.line_of(tok.span.end.saturating_sub(1).max(tok.span.start))
    }

    fn insert(&mut self, tok: &Token, side: Side, text: &str, depth: usize) {
        let line = match side {
            Side::After => self.line_end(tok),
            Side::Before => self.line_start(tok),
        };
        self.inserts.push(PendingInsert {
            anchor: tok.id,
            side,
            text: text.to_string(),
            depth,
            line,
            order: tok.span.start,
        });
    }

    fn edit(&mut self, rule: &str, old_body: &GrammarExpr, node: &CstNode, depth: usize, edit: &ElementEdit) {
        match edit {
            ElementEdit::KeywordInserted { text, anchor, .. } => self.keyword_inserted(rule, old_body, node, depth, text, anchor),
            ElementEdit::SeparatorIntroduced { separator, old_path, .. } => {
                let d = repeat_depth(old_body, old_path, true);
                for iterations in occurrences(node, old_path, d - 1).into_values() {
                    let mut by_iteration: BTreeMap<u32, Vec<&CstChild>> = BTreeMap::new();
                    for child in iterations {
                        by_iteration.entry(child.origin.iterations[d - 1]).or_default().push(child);
                    }
                    let count = by_iteration.len();
                    for children in by_iteration.into_values().take(count.saturating_sub(1)) {
                        if let Some(last) = children.iter().rev().find_map(|c| c.last_token()) {
                            self.insert(last, Side::After, separator, depth);
                        }
                    }
                }
            }
            ElementEdit::KeywordRemoved { path, text } => {
                for child in &node.children {
                    if let CstElement::Token(tok) = &child.element {
                        if &child.origin.path == path && &tok.text == text {
                            self.deletes.push((tok.id, self.line_start(tok)));
                        }
                    }
                }
            }
            ElementEdit::CardinalityChanged { from, to, old_path, .. } => {
                if from.is_within(*to) {
                    return;
                }
                let d = repeat_depth(old_body, old_path, true);
                let old_is_repeat = matches!(old_body.at_path(old_path), Some(GrammarExpr::Repeat { .. }));
                if !old_is_repeat {
                    return;
                }
                if d > 1 {
                    self.reasons.push(format!("{rule}: cannot check narrowed cardinality of a nested repetition"));
                    return;
                }
                let count = node
                    .children
                    .iter()
                    .filter(|c| c.origin.path.starts_with(old_path))
                    .map(|c| c.origin.iterations[0])
                    .collect::<BTreeSet<_>>()
                    .len();
                if !to.admits(count) {
                    self.reasons.push(format!(
                        "{rule}: {count} occurrence(s) do not fit the new cardinality `{}`",
                        to.as_str()
                    ));
                }
            }
            ElementEdit::RuleCallRetargeted { path, old_target, new_target, compatible: false } => {
                if node.children.iter().any(|c| c.origin.path.starts_with(path)) {
                    self.reasons.push(format!("{rule}: call to {old_target} retargeted to incompatible {new_target}"));
                }
            }
            ElementEdit::Unclassified { description, .. } => {
                let reason = format!("{rule}: {description}");
                if !self.reasons.contains(&reason) {
                    self.reasons.push(reason);
                }
            }
            ElementEdit::RuleCallRetargeted { .. }
            | ElementEdit::CrossRefWidened { .. }
            | ElementEdit::OptionalGroupAdded { .. } => {}
        }
    }

    fn keyword_inserted(
        &mut self,
        rule: &str,
        old_body: &GrammarExpr,
        node: &CstNode,
        depth: usize,
        text: &str,
        anchor: &InsertionAnchor,
    ) {
        let d = repeat_depth(old_body, &anchor.container, false);
        let mut groups = occurrences(node, &anchor.container, d);
        if anchor.container.is_empty() {
            groups.entry(Vec::new()).or_default();
        }
        for children in groups.into_values() {
            let before = anchor.preceding.iter().find_map(|p| {
                children.iter().rev().filter(|c| c.origin.path.starts_with(p)).find_map(|c| c.last_token())
            });
            if let Some(tok) = before {
                self.insert(tok, Side::After, text, depth);
                continue;
            }
            let after = anchor.following.iter().find_map(|p| {
                children.iter().filter(|c| c.origin.path.starts_with(p)).find_map(|c| c.first_token())
            });
            match after {
                // Punctuation hugs the token before it: `a, b` rather than `a ,b`.
                Some(tok) if !text.starts_with(is_word) && self.previous.contains_key(&tok.id) => {
                    let prev = self.previous[&tok.id];
                    self.insert(prev, Side::After, text, depth);
                }
                Some(tok) => self.insert(tok, Side::Before, text, depth),
                None => self.reasons.push(format!("{rule}: no place to insert keyword '{text}'")),
            }
        }
    }
}

/// Number of repetitions on the way to `path` (the element at `path` itself
/// counts only when `inclusive`).
fn repeat_depth(body: &GrammarExpr, path: &[u32], inclusive: bool) -> usize {
    let upto = if inclusive { path.len() + 1 } else { path.len() };
    (0..upto)
        .filter(|&k| matches!(body.at_path(&path[..k]), Some(GrammarExpr::Repeat { .. })))
        .count()
}

/// Children under `path`, grouped by the first `depth` iteration counters,
/// i.e. one group per occurrence of the element at `path`.
fn occurrences<'n>(node: &'n CstNode, path: &[u32], depth: usize) -> BTreeMap<Vec<u32>, Vec<&'n CstChild>> {
    let mut out: BTreeMap<Vec<u32>, Vec<&CstChild>> = BTreeMap::new();
    for child in &node.children {
        if child.origin.path.starts_with(path) && child.origin.iterations.len() >= depth {
            out.entry(child.origin.iterations[..depth].to_vec()).or_default().push(child);
        }
    }
    out
}

struct Slot {
    token: Token,
    before: Vec<Token>,
    after: Vec<Token>,
    deleted: bool,
}

/// Applies the edits and returns the new document. Inserted tokens get fresh
/// ids and sit next to their anchor in the tree; spans are recomputed against
/// the rendered text, which becomes the new `source`.
pub fn apply_plan(doc: &CstDocument, plan: &MigrationPlan) -> CstDocument {
    let tokens = doc.tokens();
    let mut next_id = tokens.iter().map(|t| t.id.0).max().map_or(0, |m| m + 1);
    let index: HashMap<TokenId, usize> = tokens.iter().enumerate().map(|(i, t)| (t.id, i)).collect();
    let mut slots: Vec<Slot> = tokens
        .iter()
        .map(|t| Slot { token: (*t).clone(), before: Vec::new(), after: Vec::new(), deleted: false })
        .collect();

    for edit in &plan.edits {
        match edit {
            CstEdit::InsertToken { anchor, side, text } => {
                let Some(&i) = index.get(anchor) else { continue };
                let token = Token {
                    id: TokenId(next_id),
                    kind: TokenKind::Keyword,
                    text: text.clone(),
                    leading: Vec::new(),
                    trailing: Vec::new(),
                    span: 0..0,
                };
                next_id += 1;
                let slot = &mut slots[i];
                match side {
                    Side::After => slot.after.push(token),
                    Side::Before => slot.before.push(token),
                }
            }
            CstEdit::DeleteToken { id, trivia } => {
                if let Some(&i) = index.get(id) {
                    slots[i].deleted = true;
                    if *trivia == TriviaPolicy::DropAll {
                        let keep = |v: &mut Vec<Trivia>| v.retain(|t| t.kind == TriviaKind::Newline);
                        keep(&mut slots[i].token.leading);
                        keep(&mut slots[i].token.trailing);
                    }
                }
            }
            CstEdit::ReplaceTokenText { id, text } => {
                if let Some(&i) = index.get(id) {
                    slots[i].token.text = text.clone();
                }
            }
        }
    }

    // Trivia moves.
    for slot in &mut slots {
        if let Some(first) = slot.before.first_mut() {
            first.leading = std::mem::take(&mut slot.token.leading);
        }
        if let Some(last) = slot.after.last_mut() {
            last.trailing = std::mem::take(&mut slot.token.trailing);
        }
    }
    let mut carried: Vec<Trivia> = Vec::new();
    let mut emitted: Vec<Token> = Vec::new();
    let mut replaced: HashMap<TokenId, Vec<Token>> = HashMap::new();
    for slot in slots {
        let mut group: Vec<Token> = slot.before;
        let id = slot.token.id;
        if slot.deleted {
            let mut main = slot.token;
            // Trivia of a deleted token joins whatever comes next.
            carried.append(&mut main.leading);
            carried.append(&mut main.trailing);
            // Inserts around a deleted anchor still land.
            group.extend(slot.after);
        } else {
            group.push(slot.token);
            group.extend(slot.after);
        }
        if let Some(first) = group.first_mut() {
            if !carried.is_empty() {
                let mut leading = std::mem::take(&mut carried);
                leading.append(&mut first.leading);
                first.leading = leading;
            }
        }
        emitted.extend(group.iter().cloned());
        replaced.insert(id, group);
    }
    if !carried.is_empty() {
        if let Some(last) = emitted.last() {
            let last_id = last.id;
            for group in replaced.values_mut() {
                if let Some(t) = group.iter_mut().find(|t| t.id == last_id) {
                    t.trailing.append(&mut carried);
                }
            }
        }
    }

    // Glue: keep two identifier-like tokens from fusing.
    let order: Vec<TokenId> = emitted.iter().map(|t| t.id).collect();
    let mut spaced: BTreeSet<TokenId> = BTreeSet::new();
    {
        let lookup = |id: TokenId, groups: &HashMap<TokenId, Vec<Token>>| -> Option<Token> {
            groups.values().flat_map(|g| g.iter()).find(|t| t.id == id).cloned()
        };
        let mut prev: Option<Token> = None;
        for id in &order {
            let cur = lookup(*id, &replaced).expect("emitted token exists");
            if let Some(p) = &prev {
                let ends_word = p.text.chars().last().is_some_and(is_word);
                let starts_word = cur.text.chars().next().is_some_and(is_word);
                if p.trailing.is_empty() && cur.leading.is_empty() && ends_word && starts_word {
                    spaced.insert(cur.id);
                }
            }
            prev = Some(cur);
        }
    }
    for group in replaced.values_mut() {
        for t in group.iter_mut() {
            if spaced.contains(&t.id) {
                t.leading.push(Trivia::new(TriviaKind::Whitespace, " "));
            }
        }
    }

    let mut root = rebuild(&doc.root, &mut replaced);
    let mut offset: usize = doc.dangling.iter().map(|t| t.text.len()).sum();
    respan(&mut root, &mut offset);
    let mut out = CstDocument {
        root,
        source: String::new(),
        grammar_name: doc.grammar_name.clone(),
        dangling: doc.dangling.clone(),
    };
    out.source = out.render();
    out
}

fn is_word(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn rebuild(node: &CstNode, groups: &mut HashMap<TokenId, Vec<Token>>) -> CstNode {
    let mut children = Vec::with_capacity(node.children.len());
    for child in &node.children {
        match &child.element {
            CstElement::Node(n) => children.push(CstChild { element: CstElement::Node(rebuild(n, groups)), ..child.clone() }),
            CstElement::Token(t) => {
                for tok in groups.remove(&t.id).unwrap_or_default() {
                    let same = tok.id == t.id;
                    children.push(CstChild {
                        element: CstElement::Token(tok),
                        origin: if same { child.origin.clone() } else { Default::default() },
                        feature: if same { child.feature.clone() } else { None },
                        op: if same { child.op } else { None },
                    });
                }
            }
        }
    }
    CstNode { rule: node.rule.clone(), children }
}

fn respan(node: &mut CstNode, offset: &mut usize) {
    for child in &mut node.children {
        match &mut child.element {
            CstElement::Node(n) => respan(n, offset),
            CstElement::Token(t) => {
                *offset += t.leading.iter().map(|x| x.text.len()).sum::<usize>();
                t.span = *offset..*offset + t.text.len();
                *offset += t.text.len() + t.trailing.iter().map(|x| x.text.len()).sum::<usize>();
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_grammar;

    fn g(src: &str) -> Grammar {
        parse_grammar(src).unwrap()
    }

    fn migrated(src: &str, old: &str, new: &str) -> String {
        match migrate_deterministic(src, &g(old), &g(new)).unwrap() {
            MigrationOutcome::Migrated { text, .. } => text,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn appended_keyword_keeps_trailing_comment() {
        let out = migrated("x a // c\nx b\n", "M: (xs+=X)*; X: 'x' name=ID;", "M: (xs+=X)*; X: 'x' name=ID ';';");
        assert_eq!(out, "x a; // c\nx b;\n");
    }

    #[test]
    fn inserted_before_when_nothing_precedes() {
        let out = migrated("a\nb\n", "M: (xs+=X)*; X: name=ID;", "M: (xs+=X)*; X: 'def' name=ID;");
        assert_eq!(out, "def a\ndef b\n");
    }

    #[test]
    fn removed_keyword_keeps_comment() {
        let out = migrated(
            "x a /* k */ ;\nx b;\n",
            "M: (xs+=X)*; X: 'x' name=ID ';';",
            "M: (xs+=X)*; X: 'x' name=ID;",
        );
        assert!(out.contains("/* k */"));
        assert_eq!(out.lines().count(), 2);
        assert!(!out.contains(';'));
    }

    #[test]
    fn separator_between_iterations_only() {
        let out = migrated(
            "a b c\n",
            "M: (xs+=ID)*;",
            "M: (xs+=ID (',' xs+=ID)*)?;",
        );
        assert_eq!(out, "a, b, c\n");
    }

    #[test]
    fn narrowing_checks_counts() {
        let old = "M: (xs+=X)*; X: 'x' (tags+=ID)*;";
        let new = "M: (xs+=X)*; X: 'x' (tags+=ID)?;";
        assert_eq!(migrated("x a\nx\n", old, new), "x a\nx\n");
        let out = migrate_deterministic("x a b\n", &g(old), &g(new)).unwrap();
        assert!(matches!(out, MigrationOutcome::NeedsLlm(_)));
    }

    #[test]
    fn unclassified_needs_llm() {
        let out = migrate_deterministic(
            "x a\n",
            &g("M: (xs+=X)*; X: 'x' name=ID;"),
            &g("M: (xs+=X)*; X: 'x' name=ID value=INT;"),
        )
        .unwrap();
        assert!(matches!(out, MigrationOutcome::NeedsLlm(r) if r.len() == 1));
    }

    #[test]
    fn mismatched_document_is_internal_error() {
        let old = g("grammar a.Old\nM: (xs+=X)*; X: 'x';");
        let other = g("grammar a.Other\nM: (xs+=X)*; X: 'x';");
        let doc = parse_instance("x\n", &other).unwrap();
        let diff = diff_grammars(&old, &old);
        assert!(matches!(plan_migration(&doc, &old, &old, &diff), Err(MigrationError::InternalMismatch(_))));
    }

    #[test]
    fn words_do_not_fuse() {
        let out = migrated("x a\n", "M: (xs+=X)*; X: 'x' name=ID;", "M: (xs+=X)*; X: 'x' name=ID 'end';");
        assert_eq!(out, "x a end\n");
    }
}
