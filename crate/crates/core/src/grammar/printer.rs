use super::{Grammar, GrammarExpr};

pub(crate) fn grammar_to_string(grammar: &Grammar) -> String {
    let mut out = grammar.preamble.clone();
    if !out.is_empty() && !out.ends_with('\n') {
        out.push('\n');
    }
    for rule in &grammar.rules {
        out.push_str(&rule.name);
        out.push_str(":\n    ");
        out.push_str(&expr_to_string(&rule.body, true));
        out.push_str(";\n\n");
    }
    out
}

/// `top` is true for rule bodies and alternative options, which are printed
/// without surrounding parentheses.
pub(crate) fn expr_to_string(expr: &GrammarExpr, top: bool) -> String {
    match expr {
        GrammarExpr::Keyword(text) => quote(text),
        GrammarExpr::RuleCall(name) => name.clone(),
        GrammarExpr::CrossRef { target, syntax } if syntax == "ID" => format!("[{target}]"),
        GrammarExpr::CrossRef { target, syntax } => format!("[{target}|{syntax}]"),
        GrammarExpr::Assignment { feature, op, operand } => {
            format!("{feature}{op}{}", atomic(operand))
        }
        GrammarExpr::Group(items) => {
            let inner = items.iter().map(atomic).collect::<Vec<_>>().join(" ");
            if top {
                inner
            } else {
                format!("({inner})")
            }
        }
        GrammarExpr::Alternatives(options) => {
            let inner = options
                .iter()
                .map(|o| match o {
                    GrammarExpr::Group(_) => expr_to_string(o, true),
                    other => atomic(other),
                })
                .collect::<Vec<_>>()
                .join(" | ");
            if top {
                inner
            } else {
                format!("({inner})")
            }
        }
        GrammarExpr::Repeat { inner, card } => format!("{}{}", atomic(inner), card.as_str()),
    }
}

fn atomic(expr: &GrammarExpr) -> String {
    expr_to_string(expr, false)
}

fn quote(text: &str) -> String {
    let mut out = String::with_capacity(text.len() + 2);
    out.push('\'');
    for c in text.chars() {
        match c {
            '\'' => out.push_str("\\'"),
            '\\' => out.push_str("\\\\"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('\'');
    out
}
