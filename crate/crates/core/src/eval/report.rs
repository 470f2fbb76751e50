//! Aggregated scores over a run.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::metrics::{exact_match, round_percent, token_f1};
use crate::controller::{FinalResult, Termination};
use crate::error::EvalError;

pub const UNMONITORED: &str = "unmonitored";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketScores {
    pub n: usize,
    pub em: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Percentages carry one decimal, rounded half away from zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub n: usize,
    pub em: f64,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub mean_time_s: f64,
    /// Questions whose first round activated evaluation.
    pub activated: usize,
    pub mean_rounds: f64,
    pub failures: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_condition: Option<BTreeMap<String, BucketScores>>,
}

#[derive(Default)]
struct Sums {
    n: usize,
    em: f64,
    f1: f64,
    precision: f64,
    recall: f64,
}

impl Sums {
    fn add(&mut self, pred: &str, gold: &str) {
        let s = token_f1(pred, gold);
        self.n += 1;
        self.em += f64::from(exact_match(pred, gold));
        self.f1 += s.f1;
        self.precision += s.precision;
        self.recall += s.recall;
    }

    fn bucket(&self) -> BucketScores {
        let n = self.n as f64;
        BucketScores {
            n: self.n,
            em: round_percent(self.em / n),
            f1: round_percent(self.f1 / n),
            precision: round_percent(self.precision / n),
            recall: round_percent(self.recall / n),
        }
    }
}

/// Scores `(result, gold answer)` pairs. Failed questions count with
/// whatever answer they reached.
pub fn evaluate_run<'a>(
    label: impl Into<String>,
    results: impl IntoIterator<Item = (&'a FinalResult, &'a str)>,
) -> Result<MetricsReport, EvalError> {
    let mut total = Sums::default();
    let mut buckets: BTreeMap<String, Sums> = BTreeMap::new();
    let mut ms = 0u128;
    let mut rounds = 0usize;
    let mut activated = 0;
    let mut failures = 0;
    for (result, gold) in results {
        total.add(&result.final_answer, gold);
        let key = result.last_condition().map_or(UNMONITORED, |c| c.as_str());
        buckets.entry(key.to_owned()).or_default().add(&result.final_answer, gold);
        ms += result.trace.iter().map(|r| u128::from(r.elapsed_ms)).sum::<u128>();
        rounds += result.rounds_used;
        activated += usize::from(result.activated());
        failures += usize::from(result.terminated_by == Termination::Failed);
    }
    if total.n == 0 {
        return Err(EvalError::EmptyResults);
    }
    let b = total.bucket();
    let n = total.n as f64;
    Ok(MetricsReport {
        label: label.into(),
        n: total.n,
        em: b.em,
        f1: b.f1,
        precision: b.precision,
        recall: b.recall,
        mean_time_s: ms as f64 / 1000.0 / n,
        activated,
        mean_rounds: rounds as f64 / n,
        failures,
        per_condition: Some(buckets.into_iter().map(|(k, v)| (k, v.bucket())).collect()),
    })
}

impl MetricsReport {
    pub fn without_timing(&self) -> Self {
        Self {
            mean_time_s: 0.0,
            ..self.clone()
        }
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("reports serialize")
    }
}

/// Markdown-style table, one row per report.
pub fn render_table(reports: &[MetricsReport]) -> String {
    let width = reports.iter().map(|r| r.label.len()).max().unwrap_or(0).max(6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "| {:<width$} | {:>4} | {:>5} | {:>5} | {:>5} | {:>5} | {:>8} | {:>6} |",
        "Method", "n", "EM", "F1", "Prec.", "Rec.", "Time (s)", "Failed"
    );
    let _ = writeln!(
        out,
        "|{}|------|-------|-------|-------|-------|----------|--------|",
        "-".repeat(width + 2)
    );
    for r in reports {
        let _ = writeln!(
            out,
            "| {:<width$} | {:>4} | {:>5.1} | {:>5.1} | {:>5.1} | {:>5.1} | {:>8.2} | {:>6} |",
            r.label, r.n, r.em, r.f1, r.precision, r.recall, r.mean_time_s, r.failures
        );
    }
    out
}

/// Per-condition breakdown as a table.
pub fn render_conditions(report: &MetricsReport) -> String {
    let mut out = String::new();
    let Some(buckets) = &report.per_condition else {
        return out;
    };
    let _ = writeln!(out, "| {:<13} | {:>4} | {:>5} | {:>5} |", "Condition", "n", "EM", "F1");
    let _ = writeln!(out, "|---------------|------|-------|-------|");
    for (k, b) in buckets {
        let _ = writeln!(out, "| {:<13} | {:>4} | {:>5.1} | {:>5.1} |", k, b.n, b.em, b.f1);
    }
    out
}
