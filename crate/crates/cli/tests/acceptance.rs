//! The acceptance suite. Each criterion is checked independently and reported
//! on its own PASS/FAIL line; the test fails if any criterion fails.
//!
//! Run with `cargo test -p coevo-cli --test acceptance -- --nocapture` to see
//! the report.

mod common;

use std::collections::BTreeSet;

use clap::Parser;
use coevo_cli::{Cli, Command};
use coevo_core::cst::{parse_instance, validate};
use coevo_core::gdiff::{diff_grammars, ElementEdit};
use coevo_core::grammar::{parse_grammar, Grammar, GrammarError};
use coevo_core::llm::{build_prompt, PromptBundle};
use coevo_core::metrics::{evaluate, split_lines, Evaluator};
use coevo_core::migrate::{migrate_deterministic, MigrationOutcome};
use coevo_core::testkit::{generate_instance, mutate_lines, GenOptions};
use rand::rngs::StdRng;
use rand::SeedableRng;
use regex::Regex;
use serde_json::Value;

use common::*;

type Check = Result<String, String>;
type Criterion = fn() -> Check;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn grammar(path: &std::path::Path) -> Result<Grammar, GrammarError> {
    parse_grammar(&read(path))
}

fn dm_v1() -> Grammar {
    grammar(&domainmodel("grammar-v1.xtext")).unwrap()
}

fn dm_v2() -> Grammar {
    grammar(&domainmodel("grammar-v2.xtext")).unwrap()
}

const SYNTHETIC: [&str; 3] = ["machine", "config", "workflow"];

fn synthetic_pair(name: &str) -> (Grammar, Grammar) {
    (
        grammar(&synthetic(&format!("{name}-v1.xtext"))).unwrap(),
        grammar(&synthetic(&format!("{name}-v2.xtext"))).unwrap(),
    )
}

fn losslessness() -> Check {
    let instance = read(&domainmodel("instance-v1.dmodel"));
    let doc = parse_instance(&instance, &dm_v1()).map_err(|e| e.to_string())?;
    ensure!(doc.render() == instance, "domain model instance does not round-trip");
    let mut rng = StdRng::seed_from_u64(0xC0E);
    let mut checked = 0;
    for name in SYNTHETIC {
        let (v1, v2) = synthetic_pair(name);
        for g in [&v1, &v2] {
            for _ in 0..20 {
                let source = generate_instance(g, &mut rng, &GenOptions::default());
                let doc = parse_instance(&source, g).map_err(|e| format!("{name}: {e}\n{source}"))?;
                ensure!(doc.render() == source, "{name}: round-trip differs\n{source}");
                checked += 1;
            }
        }
    }
    Ok(format!("domain model instance + {checked} synthetic instances over {} grammars byte-exact", SYNTHETIC.len() * 2))
}

fn grammar_coverage() -> Check {
    let old = grammar(&domainmodel("grammar-v1.xtext")).map_err(|e| e.to_string())?;
    let new = grammar(&domainmodel("grammar-v2.xtext")).map_err(|e| e.to_string())?;
    let d = diff_grammars(&old, &new);
    let added: BTreeSet<&str> = d.added.iter().map(|a| a.rule.name.as_str()).collect();
    let expected: BTreeSet<&str> =
        ["PackageDeclaration", "AbstractElement", "QualifiedName", "Import", "QualifiedNameWithWildcard"].into();
    ensure!(added == expected, "added rules {added:?}");
    ensure!(d.removed.is_empty(), "removed {:?}", d.removed);
    let modified: Vec<(&str, Vec<&str>)> =
        d.modified.iter().map(|m| (m.rule.as_str(), m.edits.iter().map(|e| e.kind()).collect())).collect();
    let want = vec![
        ("Domainmodel", vec!["rule_call_retargeted"]),
        ("DataType", vec!["keyword_inserted"]),
        ("Entity", vec!["cross_ref_widened", "separator_introduced"]),
        ("Feature", vec!["cross_ref_widened", "optional_group_added"]),
    ];
    ensure!(modified == want, "modifications {modified:?}");
    let unclassified = d.edits().filter(|(_, e)| matches!(e, ElementEdit::Unclassified { .. })).count();
    ensure!(unclassified == 0, "{unclassified} unclassified edits");
    Ok("5 added rules, 4 modified rules, 0 unclassified".into())
}

fn end_to_end() -> Check {
    let (old, new) = (dm_v1(), dm_v2());
    let original = read(&domainmodel("instance-v1.dmodel"));
    let migrated = match migrate_deterministic(&original, &old, &new).map_err(|e| e.to_string())? {
        MigrationOutcome::Migrated { text, .. } => text,
        MigrationOutcome::NeedsLlm(r) => return Err(format!("needs llm: {r:?}")),
    };
    ensure!(validate(&migrated, &new).error_line_count == 0, "migrated instance does not validate");
    let r = evaluate(&original, &migrated, &old, &new).map_err(|e| e.to_string())?;
    let got = (r.line_err, r.line_evl, r.line_evl_wrg, r.line_cmt_lost, r.line_cmt_save, r.line_fmt_lost, r.line_fmt_save);
    ensure!(got == (0, 4, 0, 0, 7, 0, 21), "metrics {got:?}");
    Ok(format!("{got:?}"))
}

fn auxiliary_loss() -> Check {
    let r = evaluate(&read(&domainmodel("instance-v1.dmodel")), &read(&domainmodel("instance-v2-mde.dmodel")), &dm_v1(), &dm_v2())
        .map_err(|e| e.to_string())?;
    ensure!(r.line_err == 0, "lineErr {}", r.line_err);
    ensure!((r.line_cmt_lost, r.line_cmt_save) == (7, 0), "cmt {}/{}", r.line_cmt_lost, r.line_cmt_save);
    ensure!(r.line_fmt_lost >= 3, "fmtLost {}", r.line_fmt_lost);
    Ok(format!("lineErr 0, cmt lost 7 / saved 0, fmt lost {}", r.line_fmt_lost))
}

/// Lines touched by a comment, found with a regular expression instead of
/// the library's scanner.
fn comment_line_oracle(text: &str) -> usize {
    let re = Regex::new(r#""(?:\\.|[^"\\\n])*"|'(?:\\.|[^'\\\n])*'|//[^\r\n]*|/\*(?s:.*?)(?:\*/|\z)"#).unwrap();
    let mut lines = BTreeSet::new();
    for m in re.find_iter(text) {
        if !(m.as_str().starts_with("//") || m.as_str().starts_with("/*")) {
            continue;
        }
        let first = text[..m.start()].matches('\n').count();
        for (k, piece) in m.as_str().split('\n').enumerate() {
            if !piece.trim_end_matches('\r').is_empty() {
                lines.insert(first + k);
            }
        }
    }
    lines.len()
}

fn metric_partitions() -> Check {
    let mut rng = StdRng::seed_from_u64(0x5EED);
    let pairs: Vec<(Grammar, Grammar)> = SYNTHETIC.iter().map(|n| synthetic_pair(n)).chain([(dm_v1(), dm_v2())]).collect();
    for i in 0..100 {
        let (old, new) = &pairs[i % pairs.len()];
        let original = generate_instance(old, &mut rng, &GenOptions::default());
        let evaluator = Evaluator::new(&original, old, new).map_err(|e| e.to_string())?;
        let evolved = mutate_lines(evaluator.oracle_output().unwrap_or(&original), &mut rng);
        let r = evaluator.evaluate(&evolved);
        let lines = split_lines(&original).len();
        ensure!(r.total_lines_orig == lines, "pair {i}: total {} vs {lines}", r.total_lines_orig);
        ensure!(r.line_fmt_lost + r.line_fmt_save == lines, "pair {i}: fmt partition\n{original}");
        let comments = comment_line_oracle(&original);
        ensure!(r.line_cmt_lost + r.line_cmt_save == comments, "pair {i}: cmt partition {} + {} vs {comments}\n{original}", r.line_cmt_lost, r.line_cmt_save);
    }
    Ok("100 random pairs".into())
}

fn prompt_fidelity() -> Check {
    let prompt = build_prompt(&PromptBundle::new(
        read(&domainmodel("grammar-v1.xtext")),
        read(&domainmodel("grammar-v2.xtext")),
        read(&domainmodel("instance-v1.dmodel")),
    ))
    .map_err(|e| e.to_string())?;
    let rules = [
        "1. When evolving the instance, please do not omit any mandatory elements, such as characters enclosed by single quotes.",
        "2. If <GRAMMAR_2> adds a new grammar rule or a new attribute that is optional or in an \"OR\" relationship (i.e., |), then please do not instantiate it.",
        "3. Do not miss or add any auxiliary information in the instance, e.g., comments, formats (white space, indents, tabs, empty lines, etc.).",
    ];
    for rule in rules {
        ensure!(prompt.contains(rule), "missing: {rule}");
    }
    ensure!(prompt.contains(&read(&domainmodel("instance-v1.dmodel"))), "instance not embedded");
    Ok("three rules present verbatim".into())
}

fn batch_with(good: usize, bad: usize) -> Result<Value, String> {
    let script = script_dir(&good_then_prose(good, bad));
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let args = batch_args(script.path(), out.path(), &(good + bad).to_string());
    let config = batch_config(&args)?;
    let manifest = coevo_cli::cmd_batch(&config).map_err(|e| e.to_string())?;
    serde_json::to_value(&manifest).map_err(|e| e.to_string())
}

fn batch_config(args: &[String]) -> Result<coevo_cli::RunConfig, String> {
    let cli = Cli::try_parse_from(std::iter::once("coevo").chain(args.iter().map(String::as_str))).map_err(|e| e.to_string())?;
    match cli.command {
        Command::Batch(batch) => batch.to_config().map_err(|e| e.to_string()),
        other => Err(format!("not a batch command: {other:?}")),
    }
}

fn batch_protocol() -> Check {
    let six = batch_with(6, 4)?;
    ensure!(six["accepted"] == true && six["good_runs"] == 6, "6/4: accepted={} good={}", six["accepted"], six["good_runs"]);
    let five = batch_with(5, 5)?;
    ensure!(five["accepted"] == false && five["good_runs"] == 5, "5/5: accepted={} good={}", five["accepted"], five["good_runs"]);
    Ok("6/10 accepted, 5/10 rejected".into())
}

fn failure_mode() -> Check {
    let script = script_dir(&[truncated_answer(17)]);
    let out = tempfile::tempdir().map_err(|e| e.to_string())?;
    let args = batch_args(script.path(), out.path(), "1");
    let config = batch_config(&args)?;
    let manifest = serde_json::to_value(coevo_cli::cmd_batch(&config).map_err(|e| e.to_string())?).unwrap();
    let run = &manifest["runs"][0];
    ensure!(run["failure"] == "truncated", "failure {}", run["failure"]);
    ensure!(run["good"] == false, "truncated run counted as good");
    let r = &run["report"];
    ensure!(r["line_evl_wrg"] == 4, "lineEvlWrg {}", r["line_evl_wrg"]);
    ensure!(r["line_cmt_lost"] == 1, "lineCmtLost {}", r["line_cmt_lost"]);
    Ok("truncated flagged; lineEvlWrg 4, lineCmtLost 1".into())
}

#[test]
fn acceptance() {
    let criteria: [(&str, Criterion); 8] = [
        ("losslessness", losslessness),
        ("grammar coverage", grammar_coverage),
        ("end-to-end migration", end_to_end),
        ("auxiliary-loss quantification", auxiliary_loss),
        ("metric partitions", metric_partitions),
        ("prompt fidelity", prompt_fidelity),
        ("batch protocol", batch_protocol),
        ("failure-mode fidelity", failure_mode),
    ];
    let mut failed = Vec::new();
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("criterion {} ({name}): PASS: {detail}", i + 1),
            Err(why) => {
                println!("criterion {} ({name}): FAIL: {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    println!(
        "criterion 9 (non-reproducibility): PASS: published LLM benchmark numbers depend on hosted models and a mined \
         corpus and are not reproduced here; criteria 1-8 are the offline substitute"
    );
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
