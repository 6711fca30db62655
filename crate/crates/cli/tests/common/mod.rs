#![allow(dead_code)]

use std::path::{Path, PathBuf};

pub fn domainmodel(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/domainmodel").join(name)
}

pub fn synthetic(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/synthetic").join(name)
}

pub fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

pub struct Outcome {
    pub status: i32,
    pub stdout: String,
    pub stderr: String,
}

pub fn cli(args: &[&str]) -> Outcome {
    let mut stdout = Vec::new();
    let mut stderr = Vec::new();
    let argv = std::iter::once("coevo").chain(args.iter().copied());
    let status = coevo_cli::run(argv, &mut stdout, &mut stderr);
    Outcome { status, stdout: String::from_utf8(stdout).unwrap(), stderr: String::from_utf8(stderr).unwrap() }
}

pub fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// An answer that wraps `instance` in a fenced block, the way chat models
/// usually reply.
pub fn fenced(instance: &str) -> String {
    format!("Here is <INSTANCE_2>:\n\n```\n{instance}```\n\nThe comments and layout are unchanged.\n")
}

pub const PROSE: &str = "I am sorry, but I need more information about the grammars before I can migrate this instance.\n";

/// Writes one scripted response per file, in replay order.
pub fn script_dir(responses: &[String]) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for (i, text) in responses.iter().enumerate() {
        std::fs::write(dir.path().join(format!("{:03}.txt", i + 1)), text).unwrap();
    }
    dir
}

/// `good` perfect answers followed by `bad` prose-only ones.
pub fn good_then_prose(good: usize, bad: usize) -> Vec<String> {
    let perfect = fenced(&read(&domainmodel("migrated-expected.dmodel")));
    std::iter::repeat_n(perfect, good).chain(std::iter::repeat_n(PROSE.to_string(), bad)).collect()
}

/// The first `lines` lines of the expected migration, cut inside an open
/// block, in an unterminated fence.
pub fn truncated_answer(lines: usize) -> String {
    let partial: String = read(&domainmodel("migrated-expected.dmodel")).split_inclusive('\n').take(lines).collect();
    format!("```\n{partial}")
}

pub fn batch_args(script: &Path, out: &Path, runs: &str) -> Vec<String> {
    [
        "batch",
        "--grammar-old",
        p(&domainmodel("grammar-v1.xtext")),
        "--grammar-new",
        p(&domainmodel("grammar-v2.xtext")),
        "--instance",
        p(&domainmodel("instance-v1.dmodel")),
        "--engine",
        "llm",
        "--provider",
        "mock",
        "--script-dir",
        p(script),
        "--runs",
        runs,
        "--out",
        p(out),
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}
