//! Typed differences between two grammar versions.
//!
//! Rules are matched by name. Inside a matched rule the bodies are aligned
//! top-down: sequences are aligned with a longest common subsequence over
//! element keys, matched pairs are compared recursively, and what is left
//! over is classified into [`ElementEdit`] variants. Anything the taxonomy
//! does not cover becomes [`ElementEdit::Unclassified`].

use std::collections::{BTreeSet, VecDeque};

use serde::{Serialize, Serializer};

use crate::grammar::{
    accepts_superset, reachable_via_alternatives, Cardinality, Grammar, GrammarExpr, GrammarPath, Rule,
};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct GrammarDiff {
    pub added: Vec<RuleAddition>,
    pub removed: Vec<String>,
    pub modified: Vec<RuleModification>,
}

impl GrammarDiff {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.modified.is_empty()
    }

    pub fn edits(&self) -> impl Iterator<Item = (&str, &ElementEdit)> {
        self.modified
            .iter()
            .flat_map(|m| m.edits.iter().map(move |e| (m.rule.as_str(), e)))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("diff serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Reachability {
    /// Every path from the entry rule passes an optional cardinality or an
    /// alternative branch.
    OptionalOnly,
    Mandatory,
    Unreachable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RuleAddition {
    pub rule: Rule,
    pub reachability: Reachability,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RuleModification {
    pub rule: String,
    pub edits: Vec<ElementEdit>,
}

/// Where an inserted keyword goes, expressed in the old grammar: the group
/// that receives it, and the matched sibling elements before and after it
/// (nearest first).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InsertionAnchor {
    pub container: GrammarPath,
    pub preceding: Vec<GrammarPath>,
    pub following: Vec<GrammarPath>,
}

/// One classified change inside a rule body. `path` indexes the new body,
/// except for removals, which index the old body.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ElementEdit {
    KeywordInserted {
        path: GrammarPath,
        text: String,
        mandatory: bool,
        #[serde(skip)]
        anchor: InsertionAnchor,
    },
    KeywordRemoved {
        path: GrammarPath,
        text: String,
    },
    /// `(X)*` became `(X (sep X)*)?`.
    SeparatorIntroduced {
        path: GrammarPath,
        separator: String,
        list_feature: Option<String>,
        #[serde(skip)]
        old_path: GrammarPath,
    },
    OptionalGroupAdded {
        path: GrammarPath,
        #[serde(serialize_with = "printed")]
        group: GrammarExpr,
    },
    CardinalityChanged {
        path: GrammarPath,
        from: Cardinality,
        to: Cardinality,
        #[serde(skip)]
        old_path: GrammarPath,
    },
    /// The syntax rule of a cross-reference now accepts a superset of the
    /// old one (`[Entity]` to `[Entity|QualifiedName]`).
    CrossRefWidened {
        path: GrammarPath,
        target: String,
        old_syntax: String,
        new_syntax: String,
    },
    RuleCallRetargeted {
        path: GrammarPath,
        old_target: String,
        new_target: String,
        compatible: bool,
    },
    Unclassified {
        path: GrammarPath,
        description: String,
    },
}

impl ElementEdit {
    pub fn kind(&self) -> &'static str {
        match self {
            ElementEdit::KeywordInserted { .. } => "keyword_inserted",
            ElementEdit::KeywordRemoved { .. } => "keyword_removed",
            ElementEdit::SeparatorIntroduced { .. } => "separator_introduced",
            ElementEdit::OptionalGroupAdded { .. } => "optional_group_added",
            ElementEdit::CardinalityChanged { .. } => "cardinality_changed",
            ElementEdit::CrossRefWidened { .. } => "cross_ref_widened",
            ElementEdit::RuleCallRetargeted { .. } => "rule_call_retargeted",
            ElementEdit::Unclassified { .. } => "unclassified",
        }
    }

    pub fn path(&self) -> &GrammarPath {
        match self {
            ElementEdit::KeywordInserted { path, .. }
            | ElementEdit::KeywordRemoved { path, .. }
            | ElementEdit::SeparatorIntroduced { path, .. }
            | ElementEdit::OptionalGroupAdded { path, .. }
            | ElementEdit::CardinalityChanged { path, .. }
            | ElementEdit::CrossRefWidened { path, .. }
            | ElementEdit::RuleCallRetargeted { path, .. }
            | ElementEdit::Unclassified { path, .. } => path,
        }
    }

    pub fn describe(&self) -> String {
        match self {
            ElementEdit::KeywordInserted { text, mandatory, .. } => {
                format!("keyword '{text}' inserted ({})", if *mandatory { "mandatory" } else { "optional context" })
            }
            ElementEdit::KeywordRemoved { text, .. } => format!("keyword '{text}' removed"),
            ElementEdit::SeparatorIntroduced { separator, list_feature, .. } => format!(
                "separator '{separator}' introduced in list{}",
                list_feature.as_deref().map(|f| format!(" `{f}`")).unwrap_or_default()
            ),
            ElementEdit::OptionalGroupAdded { group, .. } => format!("optional element added: {group}"),
            ElementEdit::CardinalityChanged { from, to, .. } => {
                format!("cardinality changed from `{}` to `{}`", card_label(*from), card_label(*to))
            }
            ElementEdit::CrossRefWidened { target, old_syntax, new_syntax, .. } => {
                format!("cross-reference to {target} widened from {old_syntax} to {new_syntax}")
            }
            ElementEdit::RuleCallRetargeted { old_target, new_target, compatible, .. } => format!(
                "rule call {old_target} retargeted to {new_target} ({})",
                if *compatible { "compatible" } else { "incompatible" }
            ),
            ElementEdit::Unclassified { description, .. } => description.clone(),
        }
    }
}

fn card_label(card: Cardinality) -> &'static str {
    match card {
        Cardinality::One => "1",
        other => other.as_str(),
    }
}

fn printed<S: Serializer>(expr: &GrammarExpr, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&expr.to_string())
}

pub fn diff_grammars(old: &Grammar, new: &Grammar) -> GrammarDiff {
    let old_names: BTreeSet<&str> = old.rules.iter().map(|r| r.name.as_str()).collect();
    let new_names: BTreeSet<&str> = new.rules.iter().map(|r| r.name.as_str()).collect();

    let (unguarded, reachable) = reachability_sets(new);
    let added = new
        .rules
        .iter()
        .filter(|r| !old_names.contains(r.name.as_str()))
        .map(|r| RuleAddition {
            rule: r.clone(),
            reachability: if unguarded.contains(r.name.as_str()) {
                Reachability::Mandatory
            } else if reachable.contains(r.name.as_str()) {
                Reachability::OptionalOnly
            } else {
                Reachability::Unreachable
            },
        })
        .collect();
    let removed = old
        .rules
        .iter()
        .filter(|r| !new_names.contains(r.name.as_str()))
        .map(|r| r.name.clone())
        .collect();
    let modified = new
        .rules
        .iter()
        .filter_map(|nr| {
            let or = old.rule(&nr.name)?;
            if or.body == nr.body {
                return None;
            }
            let mut differ = Differ { new_grammar: new, edits: Vec::new() };
            differ.expr(&or.body, &nr.body, &[], &[], false);
            if differ.edits.is_empty() {
                differ.edits.push(ElementEdit::Unclassified {
                    path: Vec::new(),
                    description: "rule body changed".into(),
                });
            }
            Some(RuleModification { rule: nr.name.clone(), edits: differ.edits })
        })
        .collect();
    GrammarDiff { added, removed, modified }
}

/// Builds the `(X (sep X)*)?` form of a `(X)*` repetition.
pub fn expand_separator_pattern(old: &GrammarExpr, separator: &str) -> Option<GrammarExpr> {
    let GrammarExpr::Repeat { inner, card: Cardinality::ZeroOrMore } = old else {
        return None;
    };
    let element = seq_view(inner).0.into_iter().cloned().collect::<Vec<_>>();
    let mut tail = vec![GrammarExpr::Keyword(separator.to_string())];
    tail.extend(element.iter().cloned());
    let mut items = element;
    items.push(GrammarExpr::Repeat {
        inner: Box::new(GrammarExpr::Group(tail)),
        card: Cardinality::ZeroOrMore,
    });
    Some(GrammarExpr::Repeat { inner: Box::new(GrammarExpr::Group(items)), card: Cardinality::Optional })
}

fn separator_of(old: &GrammarExpr, new: &GrammarExpr) -> Option<String> {
    let GrammarExpr::Repeat { inner, card: Cardinality::Optional } = new else {
        return None;
    };
    let GrammarExpr::Group(items) = inner.as_ref() else {
        return None;
    };
    let GrammarExpr::Repeat { inner: tail, .. } = items.last()? else {
        return None;
    };
    let GrammarExpr::Group(tail) = tail.as_ref() else {
        return None;
    };
    let GrammarExpr::Keyword(sep) = tail.first()? else {
        return None;
    };
    (expand_separator_pattern(old, sep).as_ref() == Some(new)).then(|| sep.clone())
}

fn list_feature(expr: &GrammarExpr) -> Option<String> {
    let mut found = None;
    expr.walk(&mut |e| {
        if let (None, GrammarExpr::Assignment { feature, .. }) = (&found, e) {
            found = Some(feature.clone());
        }
    });
    found
}

/// Items of a sequence, and whether they come from an explicit group.
fn seq_view(expr: &GrammarExpr) -> (Vec<&GrammarExpr>, bool) {
    match expr {
        GrammarExpr::Group(items) => (items.iter().collect(), true),
        other => (vec![other], false),
    }
}

/// Alignment key: kind plus keyword text / feature / call target.
/// Repetitions and groups are keyed by what they start with.
fn key(expr: &GrammarExpr) -> String {
    match expr {
        GrammarExpr::Keyword(t) => format!("kw:{t}"),
        GrammarExpr::RuleCall(t) => format!("call:{t}"),
        GrammarExpr::Assignment { feature, .. } => format!("assign:{feature}"),
        GrammarExpr::CrossRef { target, .. } => format!("xref:{target}"),
        GrammarExpr::Group(items) => format!("group:{}", items.first().map(key).unwrap_or_default()),
        GrammarExpr::Alternatives(_) => "alts".into(),
        GrammarExpr::Repeat { inner, .. } => key(inner),
    }
}

fn join(path: &[u32], step: u32) -> GrammarPath {
    let mut p = path.to_vec();
    p.push(step);
    p
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Step {
    Match(usize, usize),
    Delete(usize),
    Insert(usize),
}

/// LCS over keys; earliest matches win ties.
fn align<T>(old: &[T], new: &[T], key: impl Fn(&T) -> String) -> Vec<Step> {
    let ok: Vec<String> = old.iter().map(&key).collect();
    let nk: Vec<String> = new.iter().map(&key).collect();
    let (n, m) = (ok.len(), nk.len());
    let mut dp = vec![vec![0usize; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            dp[i][j] = if ok[i] == nk[j] { dp[i + 1][j + 1] + 1 } else { dp[i + 1][j].max(dp[i][j + 1]) };
        }
    }
    let (mut i, mut j) = (0, 0);
    let mut steps = Vec::new();
    while i < n || j < m {
        if i < n && j < m && ok[i] == nk[j] {
            steps.push(Step::Match(i, j));
            i += 1;
            j += 1;
        } else if j == m || (i < n && dp[i + 1][j] >= dp[i][j + 1]) {
            steps.push(Step::Delete(i));
            i += 1;
        } else {
            steps.push(Step::Insert(j));
            j += 1;
        }
    }
    steps
}

struct Differ<'g> {
    new_grammar: &'g Grammar,
    edits: Vec<ElementEdit>,
}

impl Differ<'_> {
    fn unclassified(&mut self, path: &[u32], description: String) {
        self.edits.push(ElementEdit::Unclassified { path: path.to_vec(), description });
    }

    /// `optional` is true when `new` sits under an optional repetition or an
    /// alternative branch.
    fn expr(&mut self, old: &GrammarExpr, new: &GrammarExpr, op: &[u32], np: &[u32], optional: bool) {
        if old == new {
            return;
        }
        use GrammarExpr::*;
        match (old, new) {
            (Group(_), Group(_)) => self.seq(old, new, op, np, optional),
            (Alternatives(a), Alternatives(b)) => self.alternatives(a, b, op, np),
            (Repeat { inner: oi, card: oc }, Repeat { inner: ni, card: nc }) => {
                if let Some(separator) = separator_of(old, new) {
                    self.edits.push(ElementEdit::SeparatorIntroduced {
                        path: np.to_vec(),
                        separator,
                        list_feature: list_feature(oi),
                        old_path: op.to_vec(),
                    });
                    return;
                }
                if oc != nc {
                    self.edits.push(ElementEdit::CardinalityChanged {
                        path: np.to_vec(),
                        from: *oc,
                        to: *nc,
                        old_path: op.to_vec(),
                    });
                }
                self.expr(oi, ni, &join(op, 0), &join(np, 0), optional || nc.is_optional());
            }
            (_, Repeat { inner: ni, card: nc }) => {
                self.edits.push(ElementEdit::CardinalityChanged {
                    path: np.to_vec(),
                    from: Cardinality::One,
                    to: *nc,
                    old_path: op.to_vec(),
                });
                self.nested(old, ni, op, &join(np, 0), optional || nc.is_optional());
            }
            (Repeat { inner: oi, card: oc }, _) => {
                self.edits.push(ElementEdit::CardinalityChanged {
                    path: np.to_vec(),
                    from: *oc,
                    to: Cardinality::One,
                    old_path: op.to_vec(),
                });
                self.nested_old(oi, new, &join(op, 0), np, optional);
            }
            (Group(_), _) | (_, Group(_)) => self.seq(old, new, op, np, optional),
            (Assignment { feature: of, op: oo, operand: oa }, Assignment { feature: nf, op: no, operand: na }) => {
                if of != nf || oo != no {
                    self.unclassified(
                        np,
                        format!("assignment `{of}{oo}` changed to `{nf}{no}`"),
                    );
                    return;
                }
                self.expr(oa, na, &join(op, 0), &join(np, 0), optional);
            }
            (CrossRef { target: ot, syntax: os }, CrossRef { target: nt, syntax: ns }) => {
                if accepts_superset(self.new_grammar, ns, os) {
                    self.edits.push(ElementEdit::CrossRefWidened {
                        path: np.to_vec(),
                        target: nt.clone(),
                        old_syntax: os.clone(),
                        new_syntax: ns.clone(),
                    });
                    if ot != nt {
                        // Linking is not checked, so only the syntax matters.
                    }
                } else {
                    self.unclassified(np, format!("cross-reference [{ot}|{os}] changed to [{nt}|{ns}]"));
                }
            }
            (RuleCall(ot), RuleCall(nt)) => {
                let compatible = reachable_via_alternatives(self.new_grammar, nt, ot)
                    || accepts_superset(self.new_grammar, nt, ot);
                self.edits.push(ElementEdit::RuleCallRetargeted {
                    path: np.to_vec(),
                    old_target: ot.clone(),
                    new_target: nt.clone(),
                    compatible,
                });
            }
            _ => self.unclassified(np, format!("`{old}` replaced by `{new}`")),
        }
    }

    /// Compares an old element with the inner expression of a repetition
    /// that now wraps it.
    fn nested(&mut self, old: &GrammarExpr, new_inner: &GrammarExpr, op: &[u32], np: &[u32], optional: bool) {
        if matches!(new_inner, GrammarExpr::Group(_)) && !matches!(old, GrammarExpr::Group(_)) {
            self.seq(old, new_inner, op, np, optional);
        } else {
            self.expr(old, new_inner, op, np, optional);
        }
    }

    fn nested_old(&mut self, old_inner: &GrammarExpr, new: &GrammarExpr, op: &[u32], np: &[u32], optional: bool) {
        if matches!(old_inner, GrammarExpr::Group(_)) && !matches!(new, GrammarExpr::Group(_)) {
            self.seq(old_inner, new, op, np, optional);
        } else {
            self.expr(old_inner, new, op, np, optional);
        }
    }

    fn seq(&mut self, old: &GrammarExpr, new: &GrammarExpr, op: &[u32], np: &[u32], optional: bool) {
        let (old_items, old_group) = seq_view(old);
        let (new_items, new_group) = seq_view(new);
        let old_path = |i: usize| if old_group { join(op, i as u32) } else { op.to_vec() };
        let new_path = |j: usize| if new_group { join(np, j as u32) } else { np.to_vec() };

        let steps = align(&old_items, &new_items, |e| key(e));
        // Pair up a lone deletion with a lone insertion between two matches.
        let mut pairs: Vec<(usize, usize)> = Vec::new();
        let mut deleted: Vec<usize> = Vec::new();
        let mut inserted: Vec<usize> = Vec::new();
        let mut gap: (Vec<usize>, Vec<usize>) = (Vec::new(), Vec::new());
        let mut flush = |gap: &mut (Vec<usize>, Vec<usize>), pairs: &mut Vec<(usize, usize)>| {
            let (dels, ins) = std::mem::take(gap);
            if dels.len() == 1 && ins.len() == 1 && pairable(old_items[dels[0]], new_items[ins[0]]) {
                pairs.push((dels[0], ins[0]));
            } else {
                deleted.extend(dels);
                inserted.extend(ins);
            }
        };
        for step in &steps {
            match *step {
                Step::Match(i, j) => {
                    flush(&mut gap, &mut pairs);
                    pairs.push((i, j));
                }
                Step::Delete(i) => gap.0.push(i),
                Step::Insert(j) => gap.1.push(j),
            }
        }
        flush(&mut gap, &mut pairs);
        pairs.sort_by_key(|&(_, j)| j);

        let mut events: Vec<(usize, bool, usize)> = Vec::new();
        events.extend(pairs.iter().map(|&(_, j)| (j, false, 0)));
        events.extend(inserted.iter().map(|&j| (j, true, 0)));
        events.sort();
        for &i in &deleted {
            match old_items[i] {
                GrammarExpr::Keyword(text) => self.edits.push(ElementEdit::KeywordRemoved {
                    path: old_path(i),
                    text: text.clone(),
                }),
                other => self.unclassified(&old_path(i), format!("element removed: `{other}`")),
            }
        }
        for &(i, j) in &pairs {
            self.expr(old_items[i], new_items[j], &old_path(i), &new_path(j), optional);
        }
        for &j in &inserted {
            match new_items[j] {
                GrammarExpr::Keyword(text) => {
                    let preceding = pairs.iter().rev().filter(|p| p.1 < j).map(|p| old_path(p.0)).collect();
                    let following = pairs.iter().filter(|p| p.1 > j).map(|p| old_path(p.0)).collect();
                    self.edits.push(ElementEdit::KeywordInserted {
                        path: new_path(j),
                        text: text.clone(),
                        mandatory: !optional,
                        anchor: InsertionAnchor { container: op.to_vec(), preceding, following },
                    });
                }
                group @ GrammarExpr::Repeat { card, .. } if card.is_optional() => {
                    self.edits.push(ElementEdit::OptionalGroupAdded { path: new_path(j), group: group.clone() });
                }
                other => self.unclassified(&new_path(j), format!("mandatory element inserted: `{other}`")),
            }
        }
        self.edits.sort_by(|a, b| a.path().cmp(b.path()));
    }

    fn alternatives(&mut self, old: &[GrammarExpr], new: &[GrammarExpr], op: &[u32], np: &[u32]) {
        let steps = align(old, new, key);
        let mut gap: (Vec<usize>, Vec<usize>) = (Vec::new(), Vec::new());
        let mut pairs = Vec::new();
        let mut deleted = Vec::new();
        let mut inserted = Vec::new();
        let mut flush = |gap: &mut (Vec<usize>, Vec<usize>), pairs: &mut Vec<(usize, usize)>| {
            let (dels, ins) = std::mem::take(gap);
            if dels.len() == 1 && ins.len() == 1 {
                pairs.push((dels[0], ins[0]));
            } else {
                deleted.extend(dels);
                inserted.extend(ins);
            }
        };
        for step in steps {
            match step {
                Step::Match(i, j) => {
                    flush(&mut gap, &mut pairs);
                    pairs.push((i, j));
                }
                Step::Delete(i) => gap.0.push(i),
                Step::Insert(j) => gap.1.push(j),
            }
        }
        flush(&mut gap, &mut pairs);
        for i in deleted {
            self.unclassified(&join(op, i as u32), format!("alternative removed: `{}`", old[i]));
        }
        for (i, j) in pairs {
            self.expr(&old[i], &new[j], &join(op, i as u32), &join(np, j as u32), true);
        }
        for j in inserted {
            self.edits.push(ElementEdit::OptionalGroupAdded { path: join(np, j as u32), group: new[j].clone() });
        }
    }
}

fn pairable(old: &GrammarExpr, new: &GrammarExpr) -> bool {
    let is_keyword = |e: &GrammarExpr| matches!(e, GrammarExpr::Keyword(_));
    !is_keyword(old) && !is_keyword(new) && (old.kind_name() == new.kind_name()
        || matches!(old, GrammarExpr::Repeat { .. })
        || matches!(new, GrammarExpr::Repeat { .. }))
}

/// Rules reachable from the entry rule without passing a guard (optional
/// repetition or alternative), and rules reachable at all.
fn reachability_sets(grammar: &Grammar) -> (BTreeSet<&str>, BTreeSet<&str>) {
    let bfs = |follow_guarded: bool| {
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        let mut queue = VecDeque::from([grammar.entry().name.as_str()]);
        seen.insert(grammar.entry().name.as_str());
        while let Some(name) = queue.pop_front() {
            let Some(rule) = grammar.rule(name) else { continue };
            let mut calls = Vec::new();
            collect_calls(&rule.body, false, &mut calls);
            for (target, guarded) in calls {
                if (follow_guarded || !guarded) && grammar.rule(target).is_some() && seen.insert(target) {
                    queue.push_back(target);
                }
            }
        }
        seen
    };
    (bfs(false), bfs(true))
}

fn collect_calls<'g>(expr: &'g GrammarExpr, guarded: bool, out: &mut Vec<(&'g str, bool)>) {
    match expr {
        GrammarExpr::RuleCall(name) | GrammarExpr::CrossRef { syntax: name, .. } => out.push((name, guarded)),
        GrammarExpr::Keyword(_) => {}
        GrammarExpr::Assignment { operand, .. } => collect_calls(operand, guarded, out),
        GrammarExpr::Group(items) => items.iter().for_each(|i| collect_calls(i, guarded, out)),
        GrammarExpr::Alternatives(options) => options.iter().for_each(|o| collect_calls(o, true, out)),
        GrammarExpr::Repeat { inner, card } => collect_calls(inner, guarded || card.is_optional(), out),
    }
}
