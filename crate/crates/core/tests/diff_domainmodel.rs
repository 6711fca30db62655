use coevo_core::gdiff::{diff_grammars, expand_separator_pattern, ElementEdit, Reachability};
use coevo_core::grammar::{parse_grammar, Grammar};

fn load(name: &str) -> Grammar {
    let path = format!("{}/fixtures/domainmodel/{name}", env!("CARGO_MANIFEST_DIR"));
    parse_grammar(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn pair() -> (Grammar, Grammar) {
    (load("grammar-v1.xtext"), load("grammar-v2.xtext"))
}

#[test]
fn added_rules_are_optional_only() {
    let (old, new) = pair();
    let d = diff_grammars(&old, &new);
    let added: Vec<_> = d.added.iter().map(|a| (a.rule.name.as_str(), a.reachability)).collect();
    assert_eq!(
        added,
        vec![
            ("PackageDeclaration", Reachability::OptionalOnly),
            ("AbstractElement", Reachability::OptionalOnly),
            ("QualifiedName", Reachability::OptionalOnly),
            ("Import", Reachability::OptionalOnly),
            ("QualifiedNameWithWildcard", Reachability::OptionalOnly),
        ]
    );
    assert!(d.removed.is_empty());
}

#[test]
fn modified_rules_and_edits() {
    let (old, new) = pair();
    let d = diff_grammars(&old, &new);
    let summary: Vec<(&str, Vec<&str>)> =
        d.modified.iter().map(|m| (m.rule.as_str(), m.edits.iter().map(|e| e.kind()).collect())).collect();
    assert_eq!(
        summary,
        vec![
            ("Domainmodel", vec!["rule_call_retargeted"]),
            ("DataType", vec!["keyword_inserted"]),
            ("Entity", vec!["cross_ref_widened", "separator_introduced"]),
            ("Feature", vec!["cross_ref_widened", "optional_group_added"]),
        ]
    );
    assert!(d.edits().all(|(_, e)| !matches!(e, ElementEdit::Unclassified { .. })));
}

#[test]
fn edit_details() {
    let (old, new) = pair();
    let d = diff_grammars(&old, &new);
    let edits = |rule: &str| d.modified.iter().find(|m| m.rule == rule).unwrap().edits.clone();

    match &edits("Domainmodel")[0] {
        ElementEdit::RuleCallRetargeted { path, old_target, new_target, compatible } => {
            assert_eq!(path, &vec![0, 0, 0, 0]);
            assert_eq!((old_target.as_str(), new_target.as_str()), ("Type", "AbstractElement"));
            assert!(compatible);
        }
        e => panic!("{e:?}"),
    }
    match &edits("DataType")[0] {
        ElementEdit::KeywordInserted { text, mandatory, .. } => {
            assert_eq!(text, ";");
            assert!(mandatory);
        }
        e => panic!("{e:?}"),
    }
    let entity = edits("Entity");
    match &entity[0] {
        ElementEdit::CrossRefWidened { target, old_syntax, new_syntax, .. } => {
            assert_eq!((target.as_str(), old_syntax.as_str(), new_syntax.as_str()), ("Entity", "ID", "QualifiedName"));
        }
        e => panic!("{e:?}"),
    }
    match &entity[1] {
        ElementEdit::SeparatorIntroduced { separator, list_feature, .. } => {
            assert_eq!(separator, ",");
            assert_eq!(list_feature.as_deref(), Some("features"));
        }
        e => panic!("{e:?}"),
    }
    match &edits("Feature")[1] {
        ElementEdit::OptionalGroupAdded { group, .. } => assert_eq!(group.to_string(), "('(' default=ID ')')?"),
        e => panic!("{e:?}"),
    }
}

#[test]
fn separator_expansion_reproduces_new_subtree() {
    let (old, new) = pair();
    let d = diff_grammars(&old, &new);
    let mut seen = 0;
    for (rule, edit) in d.edits() {
        if let ElementEdit::SeparatorIntroduced { path, old_path, separator, .. } = edit {
            let old_sub = old.rule(rule).unwrap().body.at_path(old_path).unwrap();
            let new_sub = new.rule(rule).unwrap().body.at_path(path).unwrap();
            assert_eq!(expand_separator_pattern(old_sub, separator).as_ref(), Some(new_sub));
            seen += 1;
        }
    }
    assert_eq!(seen, 1);
}

#[test]
fn paths_resolve_in_new_grammar() {
    let (old, new) = pair();
    let d = diff_grammars(&old, &new);
    for (rule, edit) in d.edits() {
        assert!(new.rule(rule).unwrap().body.at_path(edit.path()).is_some(), "{edit:?}");
    }
}

#[test]
fn identity_and_reverse() {
    let (old, new) = pair();
    assert!(diff_grammars(&old, &old).is_empty());
    assert!(diff_grammars(&new, &new).is_empty());
    let back = diff_grammars(&new, &old);
    assert_eq!(back.removed.len(), 5);
    assert!(back.added.is_empty());
    assert!(back.edits().any(|(_, e)| matches!(e, ElementEdit::KeywordRemoved { .. })));
}

#[test]
fn json_is_deterministic() {
    let (old, new) = pair();
    assert_eq!(diff_grammars(&old, &new).to_json(), diff_grammars(&old, &new).to_json());
}
