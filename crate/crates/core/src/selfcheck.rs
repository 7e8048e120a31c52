//! Self-validation filter: score every training record once and drop those
//! whose label the filter model contradicts with high confidence.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Label, Language, Origin, RelevanceRecord, Task};
use crate::providers::RelevanceScorer;
use crate::scoring::score_records;

pub const DEFAULT_TAU: f64 = 0.9;
pub const DEFAULT_TOP_N: usize = 20;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FilterError {
    #[error("confidence threshold must lie in (0.5, 1], got {0}")]
    BadTau(f64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterAction {
    #[default]
    Remove,
    FlagOnly,
}

impl std::str::FromStr for FilterAction {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "remove" => Ok(Self::Remove),
            "flag-only" | "flag_only" | "flag" => Ok(Self::FlagOnly),
            other => Err(format!("unknown filter action `{other}` (expected remove or flag-only)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub action: FilterAction,
}

fn default_tau() -> f64 {
    DEFAULT_TAU
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self { tau: DEFAULT_TAU, action: FilterAction::Remove }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        if !(self.tau > 0.5 && self.tau <= 1.0) {
            return Err(FilterError::BadTau(self.tau));
        }
        Ok(())
    }
}

/// True when the score confidently disagrees with the label: `p(yes) >= tau`
/// for label 0, `p(no) = 1 - p(yes) >= tau` for label 1.
pub fn is_contradiction(label: Label, p_yes: f64, tau: f64) -> bool {
    match label {
        Label::Irrelevant => p_yes >= tau,
        Label::Relevant => 1.0 - p_yes >= tau,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub id: String,
    pub task: Task,
    pub language: Language,
    pub origin: Origin,
    pub label: Label,
    /// `None` when the record could not be scored.
    pub p_yes: Option<f64>,
    pub contradiction: bool,
    pub removed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl FilterVerdict {
    pub fn is_unscored(&self) -> bool {
        self.p_yes.is_none()
    }

    /// Distance of the score from the label-consistent side.
    pub fn confidence(&self) -> f64 {
        match (self.p_yes, self.label) {
            (Some(p), Label::Irrelevant) => p,
            (Some(p), Label::Relevant) => 1.0 - p,
            (None, _) => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterOutcome {
    pub kept: Vec<RelevanceRecord>,
    pub verdicts: Vec<FilterVerdict>,
}

/// One scoring pass over `records`. Unscorable records are kept.
pub fn validate_corpus(
    records: &[RelevanceRecord],
    scorer: &dyn RelevanceScorer,
    config: &FilterConfig,
    max_in_flight: usize,
) -> Result<FilterOutcome, FilterError> {
    config.validate()?;
    let scored = score_records(records, scorer, max_in_flight);
    let mut kept = Vec::with_capacity(records.len());
    let mut verdicts = Vec::with_capacity(records.len());
    for (record, result) in records.iter().zip(scored) {
        let (p_yes, error) = match result {
            Ok(s) => (Some(s.p_yes), None),
            Err(e) => {
                log::warn!("{e}; keeping record unjudged");
                (None, Some(e.to_string()))
            }
        };
        let contradiction = p_yes.is_some_and(|p| is_contradiction(record.label, p, config.tau));
        let removed = contradiction && config.action == FilterAction::Remove;
        if !removed {
            kept.push(record.clone());
        }
        verdicts.push(FilterVerdict {
            id: record.id.clone(),
            task: record.task,
            language: record.language.clone(),
            origin: record.origin,
            label: record.label,
            p_yes,
            contradiction,
            removed,
            error,
        });
    }
    Ok(FilterOutcome { kept, verdicts })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterCounts {
    pub kept: usize,
    pub removed: usize,
    pub flagged: usize,
    pub unscored: usize,
}

impl FilterCounts {
    fn add(&mut self, v: &FilterVerdict) {
        if v.removed {
            self.removed += 1;
        } else {
            self.kept += 1;
        }
        if v.contradiction {
            self.flagged += 1;
        }
        if v.is_unscored() {
            self.unscored += 1;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSummary {
    pub total: FilterCounts,
    pub per_task: BTreeMap<Task, FilterCounts>,
    pub per_language: BTreeMap<Language, FilterCounts>,
    pub per_origin: BTreeMap<Origin, FilterCounts>,
    /// Most confident contradictions first, for manual review.
    pub top_contradictions: Vec<FilterVerdict>,
    pub warnings: Vec<String>,
}

pub fn filter_report(verdicts: &[FilterVerdict], top_n: usize) -> FilterSummary {
    let mut total = FilterCounts::default();
    let mut per_task: BTreeMap<Task, FilterCounts> = BTreeMap::new();
    let mut per_language: BTreeMap<Language, FilterCounts> = BTreeMap::new();
    let mut per_origin: BTreeMap<Origin, FilterCounts> = BTreeMap::new();
    for v in verdicts {
        total.add(v);
        per_task.entry(v.task).or_default().add(v);
        per_language.entry(v.language.clone()).or_default().add(v);
        per_origin.entry(v.origin).or_default().add(v);
    }
    let mut top: Vec<FilterVerdict> = verdicts.iter().filter(|v| v.contradiction).cloned().collect();
    top.sort_by(|a, b| b.confidence().total_cmp(&a.confidence()).then_with(|| a.id.cmp(&b.id)));
    top.truncate(top_n);

    let mut warnings = Vec::new();
    if !verdicts.is_empty() && total.kept == 0 {
        warnings.push(format!("every one of the {} records was removed as a contradiction", verdicts.len()));
    }
    if total.unscored > 0 {
        warnings.push(format!("{} records could not be scored and were kept unjudged", total.unscored));
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    FilterSummary { total, per_task, per_language, per_origin, top_contradictions: top, warnings }
}
