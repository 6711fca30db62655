use std::collections::HashSet;

use super::{AssignOp, Cardinality, Grammar, GrammarError, GrammarExpr, Rule, Terminal};

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Sym(&'static str),
}

#[derive(Debug, Clone)]
struct Spanned {
    tok: Tok,
    line: usize,
    col: usize,
}

const SYMBOLS: &[&str] = &[
    "+=", "?=", "=>", "->", "..", ":", ";", "|", "(", ")", "?", "*", "+", "=", "[", "]", "&", "{",
    "}", ".", ",", "!", "<", ">", "#", "@",
];

/// Parses grammar source text into a validated [`Grammar`].
///
/// Everything before the first line that starts a rule (`Name:`) is kept as
/// the opaque preamble.
pub fn parse_grammar(source: &str) -> Result<Grammar, GrammarError> {
    let body_start = find_first_rule(source);
    let preamble = &source[..body_start];
    let tokens = tokenize(source, body_start)?;
    let mut parser = Parser { tokens, pos: 0 };
    let mut rules = Vec::new();
    while !parser.at_end() {
        rules.push(parser.rule()?);
    }
    if rules.is_empty() {
        return Err(parser.error("grammar contains no rules"));
    }
    let grammar = Grammar {
        name: grammar_name(preamble).unwrap_or_else(|| rules[0].name.clone()),
        preamble: preamble.to_string(),
        rules,
    };
    check_references(&grammar)?;
    Ok(grammar)
}

fn grammar_name(preamble: &str) -> Option<String> {
    preamble.lines().find_map(|line| {
        let mut words = line.split_whitespace();
        if words.next()? != "grammar" {
            return None;
        }
        let qualified = words.next()?;
        Some(qualified.rsplit('.').next().unwrap_or(qualified).to_string())
    })
}

/// Byte offset of the first line that looks like `Name:` (optionally
/// prefixed with `terminal`/`enum`/`fragment`, so those are reported instead
/// of being swallowed by the preamble).
fn find_first_rule(source: &str) -> usize {
    let mut offset = 0;
    for line in source.split_inclusive('\n') {
        if looks_like_rule_start(line) {
            return offset;
        }
        offset += line.len();
    }
    source.len()
}

fn looks_like_rule_start(line: &str) -> bool {
    let mut rest = line.trim_start();
    for prefix in ["terminal", "enum", "fragment"] {
        if let Some(r) = rest.strip_prefix(prefix) {
            if r.starts_with(char::is_whitespace) {
                rest = r.trim_start();
                break;
            }
        }
    }
    let ident_len = rest
        .char_indices()
        .take_while(|&(i, c)| c == '_' || c.is_ascii_alphabetic() || (i > 0 && c.is_ascii_digit()))
        .count();
    if ident_len == 0 {
        return false;
    }
    let mut after = rest[ident_len..].trim_start();
    if let Some(r) = after.strip_prefix("returns") {
        after = r.trim_start();
        loop {
            let word = after
                .chars()
                .take_while(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.'))
                .count();
            after = &after[word..];
            match after.strip_prefix("::") {
                Some(r) => after = r,
                None => break,
            }
        }
        after = after.trim_start();
    }
    after.starts_with(':') && !after.starts_with("::")
}

fn tokenize(source: &str, start: usize) -> Result<Vec<Spanned>, GrammarError> {
    let bytes = source.as_bytes();
    let (mut line, mut col) = line_col(source, start);
    let mut i = start;
    let mut out = Vec::new();
    let advance = |text: &str, line: &mut usize, col: &mut usize| {
        for c in text.chars() {
            if c == '\n' {
                *line += 1;
                *col = 1;
            } else {
                *col += 1;
            }
        }
    };
    while i < bytes.len() {
        let rest = &source[i..];
        let c = rest.chars().next().unwrap();
        if c.is_whitespace() {
            advance(&rest[..c.len_utf8()], &mut line, &mut col);
            i += c.len_utf8();
            continue;
        }
        if rest.starts_with("//") {
            let len = rest.find('\n').unwrap_or(rest.len());
            advance(&rest[..len], &mut line, &mut col);
            i += len;
            continue;
        }
        if let Some(body) = rest.strip_prefix("/*") {
            let Some(end) = body.find("*/") else {
                return Err(GrammarError::Syntax {
                    line,
                    col,
                    message: "unterminated block comment".into(),
                });
            };
            let len = end + 4;
            advance(&rest[..len], &mut line, &mut col);
            i += len;
            continue;
        }
        let (tok_line, tok_col) = (line, col);
        if c == '\'' || c == '"' {
            let (value, len) = string_literal(rest, c).ok_or_else(|| GrammarError::Syntax {
                line,
                col,
                message: "unterminated string literal".into(),
            })?;
            advance(&rest[..len], &mut line, &mut col);
            i += len;
            out.push(Spanned { tok: Tok::Str(value), line: tok_line, col: tok_col });
            continue;
        }
        if c == '^' || c == '_' || c.is_ascii_alphabetic() {
            let len = c.len_utf8()
                + rest[c.len_utf8()..]
                    .chars()
                    .take_while(|c| c.is_ascii_alphanumeric() || *c == '_')
                    .count();
            let text = rest[..len].trim_start_matches('^').to_string();
            advance(&rest[..len], &mut line, &mut col);
            i += len;
            out.push(Spanned { tok: Tok::Ident(text), line: tok_line, col: tok_col });
            continue;
        }
        if let Some(sym) = SYMBOLS.iter().find(|s| rest.starts_with(**s)) {
            advance(sym, &mut line, &mut col);
            i += sym.len();
            out.push(Spanned { tok: Tok::Sym(sym), line: tok_line, col: tok_col });
            continue;
        }
        return Err(GrammarError::Syntax {
            line,
            col,
            message: format!("unexpected character `{c}`"),
        });
    }
    Ok(out)
}

fn line_col(source: &str, offset: usize) -> (usize, usize) {
    let before = &source[..offset];
    let line = before.matches('\n').count() + 1;
    let col = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, col)
}

/// Returns the unescaped value and the byte length of the literal.
fn string_literal(rest: &str, quote: char) -> Option<(String, usize)> {
    let mut value = String::new();
    let mut chars = rest.char_indices().skip(1);
    while let Some((i, c)) = chars.next() {
        match c {
            '\\' => {
                let (_, escaped) = chars.next()?;
                value.push(match escaped {
                    'n' => '\n',
                    't' => '\t',
                    'r' => '\r',
                    other => other,
                });
            }
            c if c == quote => return Some((value, i + c.len_utf8())),
            '\n' => return None,
            c => value.push(c),
        }
    }
    None
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
}

impl Parser {
    fn at_end(&self) -> bool {
        self.pos >= self.tokens.len()
    }

    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|t| &t.tok)
    }

    fn peek_at(&self, offset: usize) -> Option<&Tok> {
        self.tokens.get(self.pos + offset).map(|t| &t.tok)
    }

    fn is_sym(&self, sym: &str) -> bool {
        matches!(self.peek(), Some(Tok::Sym(s)) if *s == sym)
    }

    fn error(&self, message: impl Into<String>) -> GrammarError {
        let (line, col) = match self.tokens.get(self.pos).or_else(|| self.tokens.last()) {
            Some(t) => (t.line, t.col),
            None => (1, 1),
        };
        GrammarError::Syntax { line, col, message: message.into() }
    }

    fn expect_sym(&mut self, sym: &str) -> Result<(), GrammarError> {
        if self.is_sym(sym) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.error(format!("expected `{sym}`, found {}", self.describe())))
        }
    }

    fn describe(&self) -> String {
        match self.peek() {
            Some(Tok::Ident(s)) => format!("`{s}`"),
            Some(Tok::Str(s)) => format!("'{s}'"),
            Some(Tok::Sym(s)) => format!("`{s}`"),
            None => "end of input".into(),
        }
    }

    fn ident(&mut self) -> Result<String, GrammarError> {
        match self.peek() {
            Some(Tok::Ident(s)) => {
                let s = s.clone();
                self.pos += 1;
                Ok(s)
            }
            _ => Err(self.error(format!("expected identifier, found {}", self.describe()))),
        }
    }

    fn rule(&mut self) -> Result<Rule, GrammarError> {
        if let (Some(Tok::Ident(first)), Some(Tok::Ident(_))) = (self.peek(), self.peek_at(1)) {
            let what = match first.as_str() {
                "terminal" => Some("terminal rule definitions"),
                "enum" => Some("enum rules"),
                "fragment" => Some("fragment rules"),
                _ => None,
            };
            if let Some(what) = what {
                return Err(GrammarError::UnsupportedConstruct(what.into()));
            }
        }
        let name = self.ident()?;
        if Terminal::from_name(&name).is_some() {
            return Err(GrammarError::UnsupportedConstruct(format!(
                "redefinition of builtin terminal {name}"
            )));
        }
        if matches!(self.peek(), Some(Tok::Ident(s)) if s == "returns") {
            return Err(GrammarError::UnsupportedConstruct(format!(
                "`returns` clause on rule {name}"
            )));
        }
        self.expect_sym(":")?;
        let body = self.alternatives()?;
        self.expect_sym(";")?;
        Ok(Rule { name, body })
    }

    /// `group ('|' group)*`; a single option stays a plain group.
    fn alternatives(&mut self) -> Result<GrammarExpr, GrammarError> {
        let mut options = vec![self.group()?];
        while self.is_sym("|") {
            self.pos += 1;
            options.push(self.group()?);
        }
        if self.is_sym("&") {
            return Err(GrammarError::UnsupportedConstruct("unordered groups (`&`)".into()));
        }
        Ok(if options.len() == 1 {
            options.pop().unwrap()
        } else {
            GrammarExpr::Alternatives(options)
        })
    }

    fn group(&mut self) -> Result<GrammarExpr, GrammarError> {
        let mut items = Vec::new();
        while let Some(tok) = self.peek() {
            if matches!(tok, Tok::Sym("|" | ")" | ";" | "&")) {
                break;
            }
            items.push(self.element()?);
        }
        if items.is_empty() {
            return Err(self.error(format!("expected grammar element, found {}", self.describe())));
        }
        Ok(GrammarExpr::Group(items))
    }

    fn element(&mut self) -> Result<GrammarExpr, GrammarError> {
        match self.peek() {
            Some(Tok::Sym("=>" | "->")) => {
                return Err(GrammarError::UnsupportedConstruct("syntactic predicates".into()))
            }
            Some(Tok::Sym("{")) => {
                return Err(GrammarError::UnsupportedConstruct("actions (`{Type}`)".into()))
            }
            Some(Tok::Sym("!")) => {
                return Err(GrammarError::UnsupportedConstruct("negated tokens (`!`)".into()))
            }
            _ => {}
        }
        let is_assignment = matches!(self.peek(), Some(Tok::Ident(_)))
            && matches!(self.peek_at(1), Some(Tok::Sym("=" | "+=" | "?=")));
        let expr = if is_assignment {
            let feature = self.ident()?;
            let op = match self.peek() {
                Some(Tok::Sym("=")) => AssignOp::Set,
                Some(Tok::Sym("+=")) => AssignOp::Add,
                _ => AssignOp::Flag,
            };
            self.pos += 1;
            let operand = self.atom(true)?;
            if op == AssignOp::Flag && !matches!(operand, GrammarExpr::Keyword(_)) {
                return Err(self.error(format!("`?=` on `{feature}` must wrap a keyword")));
            }
            GrammarExpr::Assignment { feature, op, operand: Box::new(operand) }
        } else {
            self.atom(false)?
        };
        Ok(self.cardinality(expr))
    }

    fn cardinality(&mut self, expr: GrammarExpr) -> GrammarExpr {
        let card = match self.peek() {
            Some(Tok::Sym("?")) => Cardinality::Optional,
            Some(Tok::Sym("*")) => Cardinality::ZeroOrMore,
            Some(Tok::Sym("+")) => Cardinality::OneOrMore,
            _ => return expr,
        };
        self.pos += 1;
        GrammarExpr::Repeat { inner: Box::new(expr), card }
    }

    fn atom(&mut self, in_assignment: bool) -> Result<GrammarExpr, GrammarError> {
        match self.peek().cloned() {
            Some(Tok::Str(text)) => {
                if text.is_empty() {
                    return Err(self.error("empty keyword"));
                }
                if text.contains('\n') {
                    return Err(self.error("keyword contains a newline"));
                }
                self.pos += 1;
                Ok(GrammarExpr::Keyword(text))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.is_sym(".") {
                    return Err(GrammarError::UnsupportedConstruct(format!(
                        "qualified rule reference after `{name}`"
                    )));
                }
                Ok(GrammarExpr::RuleCall(name))
            }
            Some(Tok::Sym("(")) => {
                self.pos += 1;
                let inner = self.alternatives()?;
                self.expect_sym(")")?;
                Ok(inner)
            }
            Some(Tok::Sym("[")) => {
                if !in_assignment {
                    return Err(self.error("cross-reference outside an assignment"));
                }
                self.pos += 1;
                let target = self.ident()?;
                let syntax = if self.is_sym("|") {
                    self.pos += 1;
                    self.ident()?
                } else {
                    Terminal::Id.name().to_string()
                };
                self.expect_sym("]")?;
                Ok(GrammarExpr::CrossRef { target, syntax })
            }
            Some(Tok::Sym("..")) => Err(GrammarError::UnsupportedConstruct("character ranges".into())),
            _ => Err(self.error(format!("expected grammar element, found {}", self.describe()))),
        }
    }
}

fn check_references(grammar: &Grammar) -> Result<(), GrammarError> {
    let mut seen = HashSet::new();
    for rule in &grammar.rules {
        if !seen.insert(rule.name.as_str()) {
            return Err(GrammarError::DuplicateRule(rule.name.clone()));
        }
    }
    let is_rule = |name: &str| seen.contains(name);
    let mut result = Ok(());
    for rule in &grammar.rules {
        rule.body.walk(&mut |e| {
            if result.is_err() {
                return;
            }
            match e {
                GrammarExpr::RuleCall(name) if !is_rule(name) && Terminal::from_name(name).is_none() => {
                    result = Err(GrammarError::UnresolvedRuleReference(name.clone()));
                }
                GrammarExpr::CrossRef { target, syntax } => {
                    if !is_rule(target) {
                        result = Err(GrammarError::UnresolvedRuleReference(target.clone()));
                    } else if !is_rule(syntax) && Terminal::from_name(syntax).is_none() {
                        result = Err(GrammarError::UnresolvedRuleReference(syntax.clone()));
                    }
                }
                _ => {}
            }
        });
    }
    result
}

#[cfg(test)]
mod tests {
    use super::*;
    use GrammarExpr::*;

    fn kw(s: &str) -> GrammarExpr {
        Keyword(s.into())
    }

    #[test]
    fn datatype_rule_shape() {
        let g = parse_grammar("DataType: 'datatype' name=ID ';';").unwrap();
        assert_eq!(g.rules.len(), 1);
        assert_eq!(
            g.rules[0].body,
            Group(vec![
                kw("datatype"),
                Assignment { feature: "name".into(), op: AssignOp::Set, operand: Box::new(RuleCall("ID".into())) },
                kw(";"),
            ])
        );
    }

    #[test]
    fn cross_reference_defaults_to_id() {
        let g = parse_grammar("A: 'a' name=ID; B: ref=[A];").unwrap();
        let GrammarExpr::Group(items) = &g.rules[1].body else { panic!() };
        let GrammarExpr::Assignment { operand, .. } = &items[0] else { panic!() };
        assert_eq!(**operand, CrossRef { target: "A".into(), syntax: "ID".into() });
    }

    #[test]
    fn preamble_is_kept_verbatim() {
        let src = "grammar org.example.Dm with org.eclipse.xtext.common.Terminals\n\ngenerate dm \"http://x/dm\"\n\nModel: (xs+=X)*;\nX: 'x';\n";
        let g = parse_grammar(src).unwrap();
        assert_eq!(g.name, "Dm");
        assert!(g.preamble.starts_with("grammar org.example.Dm"));
        assert!(g.preamble.ends_with("\"http://x/dm\"\n\n"));
    }

    #[test]
    fn duplicate_rule() {
        let err = parse_grammar("Entity: 'a'; Entity: 'b';").unwrap_err();
        assert_eq!(err, GrammarError::DuplicateRule("Entity".into()));
    }

    #[test]
    fn unresolved_reference() {
        let err = parse_grammar("A: b=Missing;").unwrap_err();
        assert_eq!(err, GrammarError::UnresolvedRuleReference("Missing".into()));
        let err = parse_grammar("A: b=[A|Nope];").unwrap_err();
        assert_eq!(err, GrammarError::UnresolvedRuleReference("Nope".into()));
    }

    #[test]
    fn unsupported_constructs_fail_loudly() {
        for src in [
            "A: 'a' & 'b';",
            "A: =>'a';",
            "A: {A} 'a';",
            "A: 'a';\nterminal FOO: 'x';",
            "A: 'a';\nenum Color: red='red';",
            "A returns B: 'a';",
        ] {
            assert!(
                matches!(parse_grammar(src), Err(GrammarError::UnsupportedConstruct(_))),
                "{src}"
            );
        }
    }

    #[test]
    fn flag_requires_keyword() {
        assert!(matches!(parse_grammar("A: many?=ID;"), Err(GrammarError::Syntax { .. })));
    }

    #[test]
    fn syntax_error_position() {
        let err = parse_grammar("A: 'a'\n  b=ID\n  );").unwrap_err();
        match err {
            GrammarError::Syntax { line, .. } => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
