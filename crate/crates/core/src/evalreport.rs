//! Positive-class precision, recall and F1, per-language breakdowns, the
//! two-task average, and report rendering.
//!
//! A metric whose denominator is zero is reported as `0.0` together with a
//! flag in [`Degenerate`]; it is never silently treated as `1.0`.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{table_sort, Label, Language, Origin, Task};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("prediction and label lists differ in length ({preds} vs {labels})")]
    LengthMismatch { preds: usize, labels: usize },
    #[error("nothing to evaluate")]
    Empty,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn record(&mut self, pred: Label, label: Label) {
        match (pred, label) {
            (Label::Relevant, Label::Relevant) => self.tp += 1,
            (Label::Relevant, Label::Irrelevant) => self.fp += 1,
            (Label::Irrelevant, Label::Relevant) => self.fn_ += 1,
            (Label::Irrelevant, Label::Irrelevant) => self.tn += 1,
        }
    }

    pub fn merge(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }
}

/// Confusion counts with label 1 as the positive class.
pub fn confusion(preds: &[Label], labels: &[Label]) -> Result<ConfusionCounts, EvalError> {
    if preds.len() != labels.len() {
        return Err(EvalError::LengthMismatch { preds: preds.len(), labels: labels.len() });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut counts = ConfusionCounts::default();
    for (&p, &l) in preds.iter().zip(labels) {
        counts.record(p, l);
    }
    Ok(counts)
}

/// Which metrics hit a zero denominator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Degenerate {
    /// No positive predictions.
    pub precision: bool,
    /// No positive labels.
    pub recall: bool,
    /// Precision and recall both zero.
    pub f1: bool,
}

impl Degenerate {
    pub fn any(&self) -> bool {
        self.precision || self.recall || self.f1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositiveClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: Degenerate,
}

pub fn f1_positive(counts: &ConfusionCounts) -> PositiveClassMetrics {
    let mut degenerate = Degenerate::default();
    let ratio = |num: u64, den: u64, flag: &mut bool| {
        if den == 0 {
            *flag = true;
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(counts.tp, counts.tp + counts.fp, &mut degenerate.precision);
    let recall = ratio(counts.tp, counts.tp + counts.fn_, &mut degenerate.recall);
    let f1 = if precision + recall == 0.0 {
        degenerate.f1 = true;
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    PositiveClassMetrics { precision, recall, f1, degenerate }
}

/// Arithmetic mean of the QC and QI F1 scores.
pub fn average_f1(f1_qc: f64, f1_qi: f64) -> f64 {
    (f1_qc + f1_qi) / 2.0
}

/// Formats `x` rounded half away from zero to `decimals` places.
///
/// Rounding is done on the shortest decimal representation of `x`, so a
/// value printed as `0.88645` rounds to `0.8865` even though the nearest
/// binary double lies a hair below it.
pub fn format_half_up(x: f64, decimals: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    let shortest = format!("{}", x.abs());
    let (int_part, frac_part) = shortest.split_once('.').unwrap_or((&shortest, ""));
    let mut digits: Vec<u8> = int_part.bytes().chain(frac_part.bytes()).map(|b| b - b'0').collect();
    let int_len = int_part.len();
    let keep = int_len + decimals;
    digits.resize(digits.len().max(keep + 1), 0);
    let round_up = digits[keep] >= 5;
    digits.truncate(keep);
    let mut int_len = int_len;
    if round_up {
        let mut i = keep;
        loop {
            if i == 0 {
                digits.insert(0, 1);
                int_len += 1;
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let to_str = |ds: &[u8]| ds.iter().map(|d| char::from(b'0' + d)).collect::<String>();
    let mut out = String::new();
    if x.is_sign_negative() && digits.iter().any(|&d| d != 0) {
        out.push('-');
    }
    out.push_str(&to_str(&digits[..int_len]));
    if decimals > 0 {
        out.push('.');
        out.push_str(&to_str(&digits[int_len..]));
    }
    out
}

/// Numeric value of [`format_half_up`].
pub fn round_half_up(x: f64, decimals: usize) -> f64 {
    format_half_up(x, decimals).parse().unwrap_or(x)
}

/// Four-decimal display used in every human-readable table.
pub fn display_metric(x: f64) -> String {
    format_half_up(x, 4)
}

/// A single evaluated pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Judgement {
    pub task: Task,
    pub language: Language,
    pub origin: Origin,
    pub label: Label,
    pub pred: Label,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub counts: ConfusionCounts,
    pub metrics: PositiveClassMetrics,
    /// The group has no relevant labels, so recall and F1 are not meaningful.
    pub no_positives: bool,
}

impl GroupReport {
    pub fn from_counts(counts: ConfusionCounts) -> Self {
        Self { metrics: f1_positive(&counts), no_positives: counts.positives() == 0, counts }
    }
}

/// Metrics computed separately inside each language partition.
pub fn per_language_breakdown<'a>(
    judgements: impl IntoIterator<Item = &'a Judgement>,
) -> BTreeMap<Language, GroupReport> {
    let mut counts: BTreeMap<Language, ConfusionCounts> = BTreeMap::new();
    for j in judgements {
        counts.entry(j.language.clone()).or_default().record(j.pred, j.label);
    }
    counts.into_iter().map(|(lang, c)| (lang, GroupReport::from_counts(c))).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub overall: GroupReport,
    pub per_language: BTreeMap<Language, GroupReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub tasks: BTreeMap<Task, TaskReport>,
    /// Mean of the QC and QI F1; present only when both tasks were evaluated.
    pub f1_avg: Option<f64>,
    /// Evaluated records per origin.
    pub provenance: BTreeMap<Origin, u64>,
}

/// Builds the full report. Overall counts are micro-aggregated over all pairs
/// of a task; `thresholds` records which cut-off produced the predictions.
pub fn build_report(judgements: &[Judgement], thresholds: &BTreeMap<Task, f64>) -> EvalReport {
    let mut by_task: BTreeMap<Task, Vec<&Judgement>> = BTreeMap::new();
    let mut provenance = BTreeMap::new();
    for j in judgements {
        by_task.entry(j.task).or_default().push(j);
        *provenance.entry(j.origin).or_insert(0) += 1;
    }
    let tasks: BTreeMap<Task, TaskReport> = by_task
        .into_iter()
        .map(|(task, js)| {
            let mut overall = ConfusionCounts::default();
            for j in &js {
                overall.record(j.pred, j.label);
            }
            let report = TaskReport {
                threshold: thresholds.get(&task).copied(),
                overall: GroupReport::from_counts(overall),
                per_language: per_language_breakdown(js.iter().copied()),
            };
            (task, report)
        })
        .collect();
    let f1_avg = match (tasks.get(&Task::Qc), tasks.get(&Task::Qi)) {
        (Some(qc), Some(qi)) => Some(average_f1(qc.overall.metrics.f1, qi.overall.metrics.f1)),
        _ => None,
    };
    EvalReport { tasks, f1_avg, provenance }
}

impl EvalReport {
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<6}{:<10}{:>8}{:>8}{:>8}{:>8}{:>11}{:>9}{:>9}  flags",
            "task", "group", "tp", "fp", "fn", "tn", "precision", "recall", "f1"
        );
        let row = |out: &mut String, task: Task, group: &str, g: &GroupReport| {
            let mut flags = Vec::new();
            if g.no_positives {
                flags.push("no-positives");
            }
            if g.metrics.degenerate.precision {
                flags.push("no-predicted-positives");
            }
            let _ = writeln!(
                out,
                "{:<6}{:<10}{:>8}{:>8}{:>8}{:>8}{:>11}{:>9}{:>9}  {}",
                task.as_str(),
                group,
                g.counts.tp,
                g.counts.fp,
                g.counts.fn_,
                g.counts.tn,
                display_metric(g.metrics.precision),
                display_metric(g.metrics.recall),
                display_metric(g.metrics.f1),
                flags.join(",")
            );
        };
        for (task, report) in &self.tasks {
            row(&mut out, *task, "overall", &report.overall);
            let mut langs: Vec<Language> = report.per_language.keys().cloned().collect();
            table_sort(&mut langs);
            for lang in langs {
                row(&mut out, *task, lang.as_str(), &report.per_language[&lang]);
            }
        }
        for (task, report) in &self.tasks {
            if let Some(t) = report.threshold {
                let _ = writeln!(out, "threshold[{task}] = {}", format_half_up(t, 4));
            }
        }
        if let Some(avg) = self.f1_avg {
            let _ = writeln!(out, "f1_avg = {}", display_metric(avg));
        }
        out
    }
}
