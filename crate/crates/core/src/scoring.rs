//! Two-token probability normalization, thresholded decisions and threshold
//! calibration.

use serde::{Deserialize, Serialize};

use crate::concurrency::bounded_map;
use crate::corpus::{Label, Language, Origin, RelevanceRecord, Task};
use crate::evalreport::{f1_positive, ConfusionCounts};
use crate::providers::{ProviderError, RelevanceScorer, ScorePair, ScoreRequest};

/// Dev-set thresholds used when calibration is switched off.
pub const DEFAULT_THRESHOLD_QC: f64 = 0.4;
pub const DEFAULT_THRESHOLD_QI: f64 = 0.2;
pub const DEFAULT_GRID_STEP: f64 = 0.01;

pub fn default_threshold(task: Task) -> f64 {
    match task {
        Task::Qc => DEFAULT_THRESHOLD_QC,
        Task::Qi => DEFAULT_THRESHOLD_QI,
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoringError {
    #[error("non-finite log-score ({logp_yes}, {logp_no})")]
    NonFinite { logp_yes: f64, logp_no: f64 },
    #[error("{name} must lie in [0, 1], got {value}")]
    OutOfRange { name: &'static str, value: f64 },
    #[error("grid step must lie in (0, 0.5], got {0}")]
    BadGridStep(f64),
    #[error("nothing to calibrate on")]
    Empty,
    #[error("record {0} has no label")]
    MissingLabel(String),
    #[error("calibration input mixes tasks {0} and {1}")]
    MixedTasks(Task, Task),
    #[error("no relevant labels in the calibration set; F1 is undefined at every threshold")]
    NoPositives,
    #[error("empty threshold list")]
    NoThresholds,
}

/// `ln p(yes)` of the two-way softmax over the answer tokens, computed as
/// `-softplus(logp_no - logp_yes)` so it stays finite for any finite input.
pub fn normalize_yes_ln(score: ScorePair) -> Result<f64, ScoringError> {
    let ScorePair { logp_yes, logp_no } = score;
    if !logp_yes.is_finite() || !logp_no.is_finite() {
        return Err(ScoringError::NonFinite { logp_yes, logp_no });
    }
    let d = logp_no - logp_yes;
    let softplus = if d > 0.0 { d + (-d).exp().ln_1p() } else { d.exp().ln_1p() };
    Ok(-softplus)
}

/// `p(yes) = 1 / (1 + exp(logp_no - logp_yes))`.
///
/// The exponential is only ever taken of a non-positive argument. A result
/// that would underflow to zero is floored at the smallest positive double,
/// so a finite log-score never yields exactly 0.
pub fn normalize_yes(score: ScorePair) -> Result<f64, ScoringError> {
    let ScorePair { logp_yes, logp_no } = score;
    if !logp_yes.is_finite() || !logp_no.is_finite() {
        return Err(ScoringError::NonFinite { logp_yes, logp_no });
    }
    let d = logp_no - logp_yes;
    let p = if d >= 0.0 {
        let e = (-d).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + d.exp())
    };
    Ok(if p == 0.0 { f64::from_bits(1) } else { p })
}

/// Relevant iff `p_yes >= threshold`.
pub fn decide(p_yes: f64, threshold: f64) -> Label {
    Label::from_bool(p_yes >= threshold)
}

/// Like [`decide`] but rejects values outside `[0, 1]`.
pub fn decide_checked(p_yes: f64, threshold: f64) -> Result<Label, ScoringError> {
    for (name, value) in [("p_yes", p_yes), ("threshold", threshold)] {
        if !(0.0..=1.0).contains(&value) {
            return Err(ScoringError::OutOfRange { name, value });
        }
    }
    Ok(decide(p_yes, threshold))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub id: String,
    pub task: Task,
    pub language: Language,
    #[serde(default)]
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<Label>,
    pub logp_yes: f64,
    pub logp_no: f64,
    pub p_yes: f64,
}

impl ScoredRecord {
    pub fn from_pair(record: &RelevanceRecord, pair: ScorePair) -> Result<Self, ScoringError> {
        Ok(Self {
            id: record.id.clone(),
            task: record.task,
            language: record.language.clone(),
            origin: record.origin,
            label: Some(record.label),
            logp_yes: pair.logp_yes,
            logp_no: pair.logp_no,
            p_yes: normalize_yes(pair)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ScoreFailure {
    #[error("scoring {id}: {source}")]
    Provider { id: String, source: ProviderError },
    #[error("scoring {id}: {source}")]
    Scoring { id: String, source: ScoringError },
}

/// Scores every record with at most `max_in_flight` provider calls at once.
/// Results are in input order; each entry fails or succeeds independently.
pub fn score_records(
    records: &[RelevanceRecord],
    scorer: &dyn RelevanceScorer,
    max_in_flight: usize,
) -> Vec<Result<ScoredRecord, ScoreFailure>> {
    bounded_map(records, max_in_flight, |r| {
        let request = ScoreRequest {
            task: r.task,
            query: r.query.clone(),
            candidate: r.candidate.clone(),
            language: r.language.clone(),
        };
        let pair = scorer
            .score(&request)
            .map_err(|source| ScoreFailure::Provider { id: r.id.clone(), source })?;
        ScoredRecord::from_pair(r, pair).map_err(|source| ScoreFailure::Scoring { id: r.id.clone(), source })
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CalibrationMode {
    Grid,
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub counts: ConfusionCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub task: Task,
    pub mode: CalibrationMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid_step: Option<f64>,
    pub best_threshold: f64,
    pub best_f1: f64,
    pub sweep: Vec<SweepPoint>,
}

impl CalibrationResult {
    /// The sweep curve as CSV, one row per threshold.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("task,threshold,precision,recall,f1\n");
        for p in &self.sweep {
            out.push_str(&format!("{},{},{},{},{}\n", self.task, p.threshold, p.precision, p.recall, p.f1));
        }
        out
    }
}

/// Thresholds `{0, step, ..., 1}`. When `1/step` is a whole number the points
/// are computed as `i/n` so that e.g. 0.4 is exactly the double `0.4`.
pub fn threshold_grid(step: f64) -> Result<Vec<f64>, ScoringError> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(ScoringError::BadGridStep(step));
    }
    let n = (1.0 / step).round();
    if ((n * step) - 1.0).abs() < 1e-9 {
        let n = n as u64;
        return Ok((0..=n).map(|i| i as f64 / n as f64).collect());
    }
    let mut grid: Vec<f64> = (0..).map(|i| i as f64 * step).take_while(|&t| t < 1.0).collect();
    grid.push(1.0);
    Ok(grid)
}

/// Scores sorted ascending with a running count of positives, so the
/// confusion counts at any threshold come from one binary search.
struct SortedScores {
    scores: Vec<f64>,
    /// positives_below[i] = relevant labels among the i lowest scores
    positives_below: Vec<u64>,
}

impl SortedScores {
    fn new(pairs: &[(f64, Label)]) -> Self {
        let mut sorted = pairs.to_vec();
        sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut positives_below = Vec::with_capacity(sorted.len() + 1);
        positives_below.push(0);
        let mut acc = 0;
        for (_, l) in &sorted {
            acc += u64::from(l.is_relevant());
            positives_below.push(acc);
        }
        Self { scores: sorted.into_iter().map(|(p, _)| p).collect(), positives_below }
    }

    fn counts_at(&self, threshold: f64) -> ConfusionCounts {
        let n = self.scores.len();
        let below = self.scores.partition_point(|&p| p < threshold);
        let total_pos = self.positives_below[n];
        let pos_below = self.positives_below[below];
        let tp = total_pos - pos_below;
        let predicted = (n - below) as u64;
        ConfusionCounts { tp, fp: predicted - tp, fn_: pos_below, tn: below as u64 - pos_below }
    }
}

/// Positive-class F1 at each threshold, in the given order.
pub fn sweep(pairs: &[(f64, Label)], thresholds: &[f64]) -> Vec<SweepPoint> {
    let sorted = SortedScores::new(pairs);
    thresholds
        .iter()
        .map(|&threshold| {
            let counts = sorted.counts_at(threshold);
            let m = f1_positive(&counts);
            SweepPoint { threshold, precision: m.precision, recall: m.recall, f1: m.f1, counts }
        })
        .collect()
}

fn labelled_pairs(scored: &[ScoredRecord]) -> Result<(Task, Vec<(f64, Label)>), ScoringError> {
    let first = scored.first().ok_or(ScoringError::Empty)?;
    let mut pairs = Vec::with_capacity(scored.len());
    for r in scored {
        if r.task != first.task {
            return Err(ScoringError::MixedTasks(first.task, r.task));
        }
        if !(0.0..=1.0).contains(&r.p_yes) {
            return Err(ScoringError::OutOfRange { name: "p_yes", value: r.p_yes });
        }
        let label = r.label.ok_or_else(|| ScoringError::MissingLabel(r.id.clone()))?;
        pairs.push((r.p_yes, label));
    }
    if !pairs.iter().any(|(_, l)| l.is_relevant()) {
        return Err(ScoringError::NoPositives);
    }
    Ok((first.task, pairs))
}

/// Best point of a sweep: maximal F1, ties to the smallest threshold.
fn best_point(sweep: &[SweepPoint]) -> Result<&SweepPoint, ScoringError> {
    let mut best: Option<&SweepPoint> = None;
    for p in sweep {
        let better = match best {
            None => true,
            Some(b) => p.f1 > b.f1 || (p.f1 == b.f1 && p.threshold < b.threshold),
        };
        if better {
            best = Some(p);
        }
    }
    best.ok_or(ScoringError::NoThresholds)
}

/// Sweeps an arbitrary threshold list and picks the best point.
pub fn calibrate_on(
    pairs: &[(f64, Label)],
    thresholds: &[f64],
) -> Result<(f64, f64, Vec<SweepPoint>), ScoringError> {
    if !pairs.iter().any(|(_, l)| l.is_relevant()) {
        return Err(ScoringError::NoPositives);
    }
    let curve = sweep(pairs, thresholds);
    let best = *best_point(&curve)?;
    Ok((best.threshold, best.f1, curve))
}

/// Grid calibration over `{0, step, ..., 1}`.
pub fn calibrate_threshold(scored: &[ScoredRecord], grid_step: f64) -> Result<CalibrationResult, ScoringError> {
    let grid = threshold_grid(grid_step)?;
    let (task, pairs) = labelled_pairs(scored)?;
    let (best_threshold, best_f1, sweep) = calibrate_on(&pairs, &grid)?;
    Ok(CalibrationResult {
        task,
        mode: CalibrationMode::Grid,
        grid_step: Some(grid_step),
        best_threshold,
        best_f1,
        sweep,
    })
}

/// Exact calibration: every distinct score is a candidate cut-point, so the
/// result is the true optimum. Its best F1 is never below the grid's, and the
/// two agree whenever every score lies on the grid.
pub fn calibrate_exact(scored: &[ScoredRecord]) -> Result<CalibrationResult, ScoringError> {
    let (task, pairs) = labelled_pairs(scored)?;
    let mut cuts: Vec<f64> = pairs.iter().map(|(p, _)| *p).collect();
    cuts.push(0.0);
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let (best_threshold, best_f1, sweep) = calibrate_on(&pairs, &cuts)?;
    Ok(CalibrationResult { task, mode: CalibrationMode::Exact, grid_step: None, best_threshold, best_f1, sweep })
}
