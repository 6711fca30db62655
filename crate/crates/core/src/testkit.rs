//! Random instances and edits for property tests.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::grammar::{Cardinality, Grammar, GrammarExpr, Terminal};

#[derive(Debug, Clone)]
pub struct GenOptions {
    /// Rule nesting beyond which repetitions stop and the first alternative
    /// is taken.
    pub max_depth: usize,
    pub max_repeat: usize,
    /// Emit comments, tabs, blank lines and CRLF between tokens.
    pub rich_trivia: bool,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions { max_depth: 6, max_repeat: 3, rich_trivia: true }
    }
}

/// A random instance of `grammar`'s entry rule.
pub fn generate_instance(grammar: &Grammar, rng: &mut impl Rng, options: &GenOptions) -> String {
    let mut tokens = Vec::new();
    let mut g = Generator { grammar, options, keywords: grammar.keywords(), tokens: &mut tokens };
    g.rule(&grammar.entry().name, 0, rng);
    let mut out = String::new();
    if options.rich_trivia && rng.gen_bool(0.3) {
        out.push_str("// generated\n");
    }
    for (k, tok) in tokens.iter().enumerate() {
        if k > 0 {
            out.push_str(&separator(rng, options.rich_trivia));
        }
        out.push_str(tok);
    }
    if options.rich_trivia && rng.gen_bool(0.3) {
        out.push_str(" // end");
    }
    if rng.gen_bool(0.7) {
        out.push('\n');
    }
    out
}

fn separator(rng: &mut impl Rng, rich: bool) -> String {
    if !rich {
        return [" ", "\n", "\n  "].choose(rng).unwrap().to_string();
    }
    [
        " ", " ", " ", "\n", "\n  ", "\n\t", "  ", "\t", "\r\n", "\n\n", " // note\n", " /* c */ ", "\n/* a\n b */\n",
        "\n    // x\n    ",
    ]
    .choose(rng)
    .unwrap()
    .to_string()
}

struct Generator<'a> {
    grammar: &'a Grammar,
    options: &'a GenOptions,
    keywords: BTreeSet<String>,
    tokens: &'a mut Vec<String>,
}

impl Generator<'_> {
    fn rule(&mut self, name: &str, depth: usize, rng: &mut impl Rng) {
        match self.grammar.rule(name) {
            Some(rule) => self.expr(&rule.body.clone(), depth + 1, rng),
            None => {
                let tok = self.terminal(Terminal::from_name(name).expect("unresolved names are terminals"), rng);
                self.tokens.push(tok);
            }
        }
    }

    fn expr(&mut self, expr: &GrammarExpr, depth: usize, rng: &mut impl Rng) {
        let deep = depth > self.options.max_depth;
        match expr {
            GrammarExpr::Keyword(text) => self.tokens.push(text.clone()),
            GrammarExpr::RuleCall(name) => self.rule(name, depth, rng),
            GrammarExpr::Assignment { operand, .. } => self.expr(operand, depth, rng),
            GrammarExpr::CrossRef { syntax, .. } => self.rule(syntax, depth, rng),
            GrammarExpr::Group(items) => items.iter().for_each(|i| self.expr(i, depth, rng)),
            GrammarExpr::Alternatives(options) => {
                let pick = if deep { &options[0] } else { options.choose(rng).unwrap() };
                self.expr(pick, depth, rng);
            }
            GrammarExpr::Repeat { inner, card } => {
                let (min, max) = match card {
                    Cardinality::One => (1, 1),
                    Cardinality::Optional => (0, 1),
                    Cardinality::ZeroOrMore => (0, self.options.max_repeat),
                    Cardinality::OneOrMore => (1, self.options.max_repeat.max(1)),
                };
                let n = if deep { min } else { rng.gen_range(min..=max) };
                for _ in 0..n {
                    self.expr(inner, depth, rng);
                }
            }
        }
    }

    fn terminal(&self, terminal: Terminal, rng: &mut impl Rng) -> String {
        match terminal {
            Terminal::Id => loop {
                let stems = ["alpha", "beta", "gamma", "x", "node", "Item", "value_1", "T"];
                let id = format!("{}{}", stems.choose(rng).unwrap(), rng.gen_range(0..20));
                if !self.keywords.contains(&id) {
                    return id;
                }
            },
            Terminal::Int => rng.gen_range(0..1000).to_string(),
            Terminal::String => ["\"s\"", "\"a b\"", "'q'", "\"has // slashes\"", "\"x/*y\""].choose(rng).unwrap().to_string(),
        }
    }
}

/// A line-level mutation of `text`: deleted, duplicated, reindented or
/// re-punctuated lines, dropped comments. Models an imperfect migration.
pub fn mutate_lines(text: &str, rng: &mut impl Rng) -> String {
    let mut lines: Vec<String> = text.lines().map(str::to_string).collect();
    for _ in 0..rng.gen_range(0..4) {
        if lines.is_empty() {
            break;
        }
        let i = rng.gen_range(0..lines.len());
        match rng.gen_range(0..6) {
            0 => {
                lines.remove(i);
            }
            1 => {
                let dup = lines[i].clone();
                lines.insert(i, dup);
            }
            2 => lines[i] = format!("\t{}", lines[i].trim_start()),
            3 => lines[i].push(','),
            4 => {
                if let Some(k) = lines[i].find("//") {
                    lines[i].truncate(k);
                }
            }
            _ => lines[i] = lines[i].split_whitespace().collect::<Vec<_>>().join(" "),
        }
    }
    let mut out = lines.join("\n");
    if text.ends_with('\n') {
        out.push('\n');
    }
    out
}
