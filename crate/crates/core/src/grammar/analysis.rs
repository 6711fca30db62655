use std::collections::BTreeSet;

use super::{Grammar, GrammarExpr, Terminal};

/// One kind of lexical token a grammar element can start with.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum TokenMatcher {
    Keyword(String),
    Terminal(Terminal),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FirstSet {
    pub tokens: BTreeSet<TokenMatcher>,
    /// The element can match without consuming any token.
    pub nullable: bool,
}

pub fn first_set(grammar: &Grammar, expr: &GrammarExpr) -> FirstSet {
    first_inner(grammar, expr, &mut Vec::new())
}

fn first_inner<'g>(grammar: &'g Grammar, expr: &'g GrammarExpr, visiting: &mut Vec<&'g str>) -> FirstSet {
    match expr {
        GrammarExpr::Keyword(k) => FirstSet {
            tokens: [TokenMatcher::Keyword(k.clone())].into(),
            nullable: false,
        },
        GrammarExpr::RuleCall(name) | GrammarExpr::CrossRef { syntax: name, .. } => {
            first_of_rule(grammar, name, visiting)
        }
        GrammarExpr::Assignment { operand, .. } => first_inner(grammar, operand, visiting),
        GrammarExpr::Group(items) => {
            let mut out = FirstSet { tokens: BTreeSet::new(), nullable: true };
            for item in items {
                let f = first_inner(grammar, item, visiting);
                out.tokens.extend(f.tokens);
                if !f.nullable {
                    out.nullable = false;
                    break;
                }
            }
            out
        }
        GrammarExpr::Alternatives(options) => {
            let mut out = FirstSet::default();
            for option in options {
                let f = first_inner(grammar, option, visiting);
                out.tokens.extend(f.tokens);
                out.nullable |= f.nullable;
            }
            out
        }
        GrammarExpr::Repeat { inner, card } => {
            let mut f = first_inner(grammar, inner, visiting);
            f.nullable |= card.is_optional();
            f
        }
    }
}

fn first_of_rule<'g>(grammar: &'g Grammar, name: &'g str, visiting: &mut Vec<&'g str>) -> FirstSet {
    if let Some(t) = Terminal::from_name(name) {
        return FirstSet { tokens: [TokenMatcher::Terminal(t)].into(), nullable: false };
    }
    let Some(rule) = grammar.rule(name) else {
        return FirstSet::default();
    };
    if visiting.contains(&name) {
        return FirstSet::default();
    }
    visiting.push(name);
    let f = first_inner(grammar, &rule.body, visiting);
    visiting.pop();
    f
}

/// True when every text matched by `old_syntax` is also matched by
/// `new_syntax` in `grammar`, judged by shape: either the same rule, a rule
/// that starts with the old one followed only by optional parts
/// (`QualifiedName: ID ('.' ID)*` widens `ID`), or an alternative that
/// delegates to such a rule.
pub fn accepts_superset(grammar: &Grammar, new_syntax: &str, old_syntax: &str) -> bool {
    superset_inner(grammar, new_syntax, old_syntax, 0)
}

fn superset_inner(grammar: &Grammar, new_syntax: &str, old_syntax: &str, depth: usize) -> bool {
    if new_syntax == old_syntax {
        return true;
    }
    if depth > 16 {
        return false;
    }
    let Some(rule) = grammar.rule(new_syntax) else {
        return false;
    };
    let delegates = |items: &[GrammarExpr]| match items.split_first() {
        Some((GrammarExpr::RuleCall(first), rest)) => {
            rest.iter()
                .all(|e| matches!(e, GrammarExpr::Repeat { card, .. } if card.is_optional()))
                && superset_inner(grammar, first, old_syntax, depth + 1)
        }
        _ => false,
    };
    match &rule.body {
        GrammarExpr::Group(items) => delegates(items),
        GrammarExpr::Alternatives(options) => options.iter().any(|o| match o {
            GrammarExpr::Group(items) => items.len() == 1 && delegates(items),
            _ => false,
        }),
        _ => false,
    }
}

/// True when `to` can be reached from `from` through unassigned rule calls
/// that form whole alternative options (`AbstractElement: Package | Type`
/// reaches `Type`).
pub fn reachable_via_alternatives(grammar: &Grammar, from: &str, to: &str) -> bool {
    let mut visited = Vec::new();
    reach_inner(grammar, from, to, &mut visited)
}

fn reach_inner<'g>(grammar: &'g Grammar, from: &'g str, to: &str, visited: &mut Vec<&'g str>) -> bool {
    if from == to {
        return true;
    }
    if visited.contains(&from) {
        return false;
    }
    visited.push(from);
    let Some(rule) = grammar.rule(from) else {
        return false;
    };
    let single_call = |e: &'g GrammarExpr| match e {
        GrammarExpr::Group(items) if items.len() == 1 => match &items[0] {
            GrammarExpr::RuleCall(name) => Some(name.as_str()),
            _ => None,
        },
        GrammarExpr::RuleCall(name) => Some(name.as_str()),
        _ => None,
    };
    let targets: Vec<&str> = match &rule.body {
        GrammarExpr::Alternatives(options) => options.iter().filter_map(single_call).collect(),
        body => single_call(body).into_iter().collect(),
    };
    targets.into_iter().any(|t| reach_inner(grammar, t, to, visited))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_grammar;

    const G: &str = "
Model: (elements+=Element)*;
Element: Pkg | Type | Import;
Type: Data | Entity;
Data: 'datatype' name=ID;
Entity: 'entity' name=ID;
Pkg: 'package' name=QName '{' '}';
Import: 'import' ns=QName;
QName: ID ('.' ID)*;
Wild: QName '.*'?;
Strict: ID '.' ID;
";

    #[test]
    fn first_sets() {
        let g = parse_grammar(G).unwrap();
        let f = first_set(&g, &g.rule("Element").unwrap().body);
        let kws: Vec<_> = f.tokens.iter().cloned().collect();
        assert_eq!(
            kws,
            vec![
                TokenMatcher::Keyword("datatype".into()),
                TokenMatcher::Keyword("entity".into()),
                TokenMatcher::Keyword("import".into()),
                TokenMatcher::Keyword("package".into()),
            ]
        );
        assert!(!f.nullable);
        assert!(first_set(&g, &g.entry().body).nullable);
    }

    #[test]
    fn widening() {
        let g = parse_grammar(G).unwrap();
        assert!(accepts_superset(&g, "QName", "ID"));
        assert!(accepts_superset(&g, "Wild", "ID"));
        assert!(!accepts_superset(&g, "Strict", "ID"));
        assert!(!accepts_superset(&g, "ID", "QName"));
    }

    #[test]
    fn alternative_reachability() {
        let g = parse_grammar(G).unwrap();
        assert!(reachable_via_alternatives(&g, "Element", "Entity"));
        assert!(reachable_via_alternatives(&g, "Element", "Type"));
        assert!(!reachable_via_alternatives(&g, "Type", "Pkg"));
    }
}
