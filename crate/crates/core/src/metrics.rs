//! Line-level scoring of an evolved instance against its original.
//!
//! Lines of the two texts are paired by a longest common subsequence under a
//! separator-insensitive normalization. The deterministic migrator serves as
//! the reference: the lines its plan touches are the lines that had to
//! change, and its output says what they should have become.

use std::collections::BTreeSet;

use serde::Serialize;
use thiserror::Error;

use crate::cst::comments::{fragments_by_line, scan};
use crate::cst::validate;
use crate::grammar::Grammar;
use crate::llm::LlmRunRecord;
use crate::migrate::{migrate_deterministic, MigrationError, MigrationOutcome};

/// Lines of `text` without their `\n`; a final newline does not open an
/// extra line. Carriage returns stay part of the line.
pub fn split_lines(text: &str) -> Vec<&str> {
    let mut lines: Vec<&str> = text.split('\n').collect();
    if text.is_empty() || text.ends_with('\n') {
        lines.pop();
    }
    lines
}

/// Drops `,` and `;` outside string literals and comments, then trims and
/// collapses whitespace runs.
pub fn normalize_line(line: &str) -> String {
    let comments = scan(line).comments;
    let in_comment = |k: usize| comments.iter().any(|c| c.span.contains(&k));
    let mut kept = String::with_capacity(line.len());
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (k, c) in line.char_indices() {
        match quote {
            Some(q) => {
                if escaped {
                    escaped = false;
                } else if c == '\\' {
                    escaped = true;
                } else if c == q {
                    quote = None;
                }
                kept.push(c);
            }
            None if in_comment(k) => kept.push(c),
            None if c == '"' || c == '\'' => {
                quote = Some(c);
                kept.push(c);
            }
            None if c == ',' || c == ';' => kept.push(' '),
            None => kept.push(c),
        }
    }
    collapse_whitespace(&kept)
}

fn collapse_whitespace(line: &str) -> String {
    line.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Pairs of 0-based line indices; `None` marks a gap on that side.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LineAlignment {
    pub pairs: Vec<(Option<usize>, Option<usize>)>,
}

impl LineAlignment {
    /// Evolved line index for each original line.
    pub fn forward(&self, original_lines: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; original_lines];
        for &(o, e) in &self.pairs {
            if let Some(o) = o {
                out[o] = e;
            }
        }
        out
    }

    pub fn gaps(&self) -> usize {
        self.pairs.iter().filter(|p| p.0.is_none() || p.1.is_none()).count()
    }
}

pub fn align_lines(original: &str, evolved: &str) -> LineAlignment {
    let a: Vec<String> = split_lines(original).into_iter().map(normalize_line).collect();
    let b: Vec<String> = split_lines(evolved).into_iter().map(normalize_line).collect();
    let (n, m) = (a.len(), b.len());
    let mut dp = vec![vec![0u32; m + 1]; n + 1];
    for i in (0..n).rev() {
        for j in (0..m).rev() {
            dp[i][j] = if a[i] == b[j] { dp[i + 1][j + 1] + 1 } else { dp[i + 1][j].max(dp[i][j + 1]) };
        }
    }
    let (mut i, mut j) = (0, 0);
    let mut pairs = Vec::with_capacity(n.max(m));
    while i < n || j < m {
        if i < n && j < m && a[i] == b[j] {
            pairs.push((Some(i), Some(j)));
            i += 1;
            j += 1;
        } else if j == m || (i < n && dp[i + 1][j] >= dp[i][j + 1]) {
            pairs.push((Some(i), None));
            i += 1;
        } else {
            pairs.push((None, Some(j)));
            j += 1;
        }
    }
    LineAlignment { pairs }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct MetricsReport {
    pub line_err: usize,
    pub line_evl: usize,
    pub line_evl_wrg: usize,
    pub line_cmt_lost: usize,
    pub line_cmt_save: usize,
    pub line_fmt_lost: usize,
    pub line_fmt_save: usize,
    pub total_lines_orig: usize,
    /// The deterministic migrator could not produce a reference, so only
    /// lost lines count towards `line_evl_wrg`.
    pub oracle_unavailable: bool,
}

impl MetricsReport {
    /// Score of a run that produced no instance: everything is lost.
    pub fn total_loss(original: &str) -> Self {
        let total = split_lines(original).len();
        MetricsReport {
            line_evl_wrg: total,
            line_cmt_lost: fragments_by_line(original).len(),
            line_fmt_lost: total,
            total_lines_orig: total,
            ..Default::default()
        }
    }

    pub fn is_good(&self) -> bool {
        self.line_err == 0 && self.line_cmt_lost == 0 && self.line_fmt_lost == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error(transparent)]
    Oracle(#[from] MigrationError),
}

/// Evaluates evolved versions of one original, running the reference
/// migration only once.
pub struct Evaluator<'g> {
    new: &'g Grammar,
    original: String,
    /// Reference output and the original lines it changes.
    oracle: Option<(String, BTreeSet<usize>)>,
}

impl<'g> Evaluator<'g> {
    pub fn new(original: &str, old: &'g Grammar, new: &'g Grammar) -> Result<Self, MetricsError> {
        let oracle = match migrate_deterministic(original, old, new)? {
            MigrationOutcome::Migrated { text, plan } => Some((text, plan.touched_lines)),
            MigrationOutcome::NeedsLlm(_) => None,
        };
        Ok(Evaluator { new, original: original.to_string(), oracle })
    }

    pub fn oracle_output(&self) -> Option<&str> {
        self.oracle.as_ref().map(|(text, _)| text.as_str())
    }

    pub fn evaluate(&self, evolved: &str) -> MetricsReport {
        let original = split_lines(&self.original);
        let evolved_lines = split_lines(evolved);
        let forward = align_lines(&self.original, evolved).forward(original.len());
        let oracle_lines = self.oracle.as_ref().map(|(text, _)| split_lines(text));
        let required = self.oracle.as_ref().map(|(_, touched)| touched.clone()).unwrap_or_default();
        let reference = |i: usize| -> &str {
            oracle_lines.as_ref().and_then(|l| l.get(i).copied()).unwrap_or(original[i])
        };

        let mut report = MetricsReport {
            line_err: validate(evolved, self.new).error_line_count,
            total_lines_orig: original.len(),
            oracle_unavailable: self.oracle.is_none(),
            ..Default::default()
        };

        for (i, target) in forward.iter().enumerate() {
            let Some(j) = *target else {
                report.line_evl_wrg += 1;
                continue;
            };
            if self.oracle.is_none() {
                continue;
            }
            let got = evolved_lines[j];
            if required.contains(&(i + 1)) {
                if got == reference(i) {
                    report.line_evl += 1;
                } else {
                    report.line_evl_wrg += 1;
                }
            } else if collapse_whitespace(got) != collapse_whitespace(reference(i)) {
                report.line_evl_wrg += 1;
            }
        }

        let original_comments = fragments_by_line(&self.original);
        for (line, pieces) in &original_comments {
            // The evolved line must still carry each comment text verbatim.
            let kept = forward[line - 1].is_some_and(|j| pieces.iter().all(|p| evolved_lines[j].contains(p.as_str())));
            if kept {
                report.line_cmt_save += 1;
            } else {
                report.line_cmt_lost += 1;
            }
        }

        for (i, target) in forward.iter().enumerate() {
            let kept = target.is_some_and(|j| layout(evolved_lines[j]) == layout(reference(i)));
            if kept {
                report.line_fmt_save += 1;
            } else {
                report.line_fmt_lost += 1;
            }
        }
        report
    }
}

/// Leading whitespace, blankness and the whitespace runs between
/// non-blank characters.
fn layout(line: &str) -> (&str, bool, Vec<&str>) {
    let line = line.strip_suffix('\r').unwrap_or(line);
    let body = line.trim_start();
    let indent = &line[..line.len() - body.len()];
    let body = body.trim_end();
    let mut runs = Vec::new();
    let mut start = None;
    for (k, c) in body.char_indices() {
        match (c.is_whitespace(), start) {
            (true, None) => start = Some(k),
            (false, Some(s)) => {
                runs.push(&body[s..k]);
                start = None;
            }
            _ => {}
        }
    }
    (indent, body.is_empty(), runs)
}

pub fn evaluate(original: &str, evolved: &str, old: &Grammar, new: &Grammar) -> Result<MetricsReport, MetricsError> {
    Ok(Evaluator::new(original, old, new)?.evaluate(evolved))
}

/// Mean of each metric over the runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct MetricAverages {
    pub line_err: f64,
    pub line_evl: f64,
    pub line_evl_wrg: f64,
    pub line_cmt_lost: f64,
    pub line_cmt_save: f64,
    pub line_fmt_lost: f64,
    pub line_fmt_save: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchRun {
    pub record: LlmRunRecord,
    pub report: MetricsReport,
    pub good: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSummary {
    pub runs: Vec<BatchRun>,
    pub averages: MetricAverages,
    pub good_runs: usize,
    pub good_threshold: usize,
    pub accepted: bool,
}

/// `ceil(0.6 * runs)`.
pub fn default_threshold(runs: usize) -> usize {
    (runs * 3).div_ceil(5)
}

/// A run counts as good only if it produced a complete instance and the
/// predicate holds for its report.
pub fn summarize_batch(
    runs: Vec<(LlmRunRecord, MetricsReport)>,
    goodness: impl Fn(&MetricsReport) -> bool,
    threshold: usize,
) -> BatchSummary {
    let count = runs.len().max(1) as f64;
    let mut averages = MetricAverages::default();
    let runs: Vec<BatchRun> = runs
        .into_iter()
        .map(|(record, report)| {
            averages.line_err += report.line_err as f64;
            averages.line_evl += report.line_evl as f64;
            averages.line_evl_wrg += report.line_evl_wrg as f64;
            averages.line_cmt_lost += report.line_cmt_lost as f64;
            averages.line_cmt_save += report.line_cmt_save as f64;
            averages.line_fmt_lost += report.line_fmt_lost as f64;
            averages.line_fmt_save += report.line_fmt_save as f64;
            let good = record.extracted.is_some() && goodness(&report);
            BatchRun { record, report, good }
        })
        .collect();
    for v in [
        &mut averages.line_err,
        &mut averages.line_evl,
        &mut averages.line_evl_wrg,
        &mut averages.line_cmt_lost,
        &mut averages.line_cmt_save,
        &mut averages.line_fmt_lost,
        &mut averages.line_fmt_save,
    ] {
        *v /= count;
    }
    let good_runs = runs.iter().filter(|r| r.good).count();
    BatchSummary { runs, averages, good_runs, good_threshold: threshold, accepted: good_runs >= threshold }
}
