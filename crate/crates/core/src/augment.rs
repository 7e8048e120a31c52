//! Translation-based augmentation for languages absent from training.
//!
//! Each synthetic record translates a source query into a target language and
//! copies the candidate and label verbatim.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::concurrency::bounded_map;
use crate::corpus::{CorpusStats, Language, Origin, RelevanceRecord, Task};
use crate::hashing::derive_seed;
use crate::providers::{TranslationRequest, Translator};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AugmentError {
    #[error("per-language quota must be at least 1")]
    ZeroQuota,
    #[error("source weight for {0} must be finite and non-negative")]
    BadWeight(Language),
    #[error("source weights must not all be zero")]
    ZeroWeights,
}

/// Languages requested for evaluation that have no training records.
pub fn missing_languages(train_stats: &CorpusStats, eval_languages: &BTreeSet<Language>) -> BTreeSet<Language> {
    let present = train_stats.languages();
    eval_languages.difference(&present).cloned().collect()
}

/// Mean per-language record count of `task` over languages that have any,
/// rounded to the nearest integer; `None` when the task has no records.
pub fn default_quota(train_stats: &CorpusStats, task: Task) -> Option<usize> {
    let langs: Vec<usize> = train_stats
        .languages()
        .iter()
        .map(|l| train_stats.balance(task, l).total)
        .filter(|&n| n > 0)
        .collect();
    if langs.is_empty() {
        return None;
    }
    let sum: usize = langs.iter().sum();
    Some(((sum as f64) / (langs.len() as f64)).round() as usize)
}

/// How source records are drawn for each target language.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "weights")]
pub enum SourcePolicy {
    /// Every source record is equally likely regardless of its language.
    #[default]
    Uniform,
    /// The quota is split across source languages in proportion to the
    /// weights (largest-remainder rounding); unlisted languages get nothing.
    Weighted(BTreeMap<Language, f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentPlan {
    pub task: Task,
    pub target_languages: BTreeSet<Language>,
    pub per_language_quota: usize,
    #[serde(default)]
    pub source_policy: SourcePolicy,
    pub master_seed: u64,
}

impl AugmentPlan {
    pub fn validate(&self) -> Result<(), AugmentError> {
        if self.per_language_quota == 0 {
            return Err(AugmentError::ZeroQuota);
        }
        if let SourcePolicy::Weighted(weights) = &self.source_policy {
            for (lang, w) in weights {
                if !w.is_finite() || *w < 0.0 {
                    return Err(AugmentError::BadWeight(lang.clone()));
                }
            }
            if weights.values().all(|w| *w == 0.0) {
                return Err(AugmentError::ZeroWeights);
            }
        }
        Ok(())
    }

    /// Target languages that already have training data among `records`.
    pub fn overlapping_targets(&self, records: &[RelevanceRecord]) -> BTreeSet<Language> {
        records
            .iter()
            .filter(|r| r.task == self.task && self.target_languages.contains(&r.language))
            .map(|r| r.language.clone())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationFailure {
    pub source_id: String,
    pub target_language: Language,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentReport {
    pub requested: BTreeMap<Language, usize>,
    pub produced: BTreeMap<Language, usize>,
    /// Quota that could not be met because too few sources were available.
    pub shortfall: BTreeMap<Language, usize>,
    pub failures: Vec<TranslationFailure>,
    /// Targets that already had training records (reported, not fatal).
    pub overlapping_targets: BTreeSet<Language>,
    /// Input records skipped as sources (wrong task or not original).
    pub ignored_inputs: usize,
}

impl AugmentReport {
    pub fn total_produced(&self) -> usize {
        self.produced.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentOutcome {
    pub records: Vec<RelevanceRecord>,
    pub report: AugmentReport,
}

/// Splits `total` across weighted keys by largest remainder; ties go to the
/// key that sorts first.
fn allocate(total: usize, weights: &BTreeMap<Language, f64>) -> BTreeMap<Language, usize> {
    let sum: f64 = weights.values().sum();
    let mut out = BTreeMap::new();
    let mut remainders = Vec::new();
    let mut assigned = 0;
    for (lang, w) in weights {
        let exact = total as f64 * w / sum;
        let floor = exact.floor() as usize;
        assigned += floor;
        out.insert(lang.clone(), floor);
        remainders.push((exact - floor as f64, lang.clone()));
    }
    remainders.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    for (_, lang) in remainders.into_iter().take(total.saturating_sub(assigned)) {
        *out.get_mut(&lang).unwrap() += 1;
    }
    out
}

/// Chooses sources for one target: ordered by per-record seed, then id.
fn select_sources<'a>(
    sources: &[&'a RelevanceRecord],
    target: &Language,
    plan: &AugmentPlan,
) -> Vec<&'a RelevanceRecord> {
    let keyed = |pool: Vec<&'a RelevanceRecord>| {
        let mut pool: Vec<(u64, &'a RelevanceRecord)> = pool
            .into_iter()
            .map(|r| (derive_seed(plan.master_seed, &[r.id.as_str(), target.as_str()]), r))
            .collect();
        pool.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)));
        pool
    };
    let eligible: Vec<&RelevanceRecord> = sources.iter().copied().filter(|r| &r.language != target).collect();
    match &plan.source_policy {
        SourcePolicy::Uniform => {
            keyed(eligible).into_iter().take(plan.per_language_quota).map(|(_, r)| r).collect()
        }
        SourcePolicy::Weighted(weights) => {
            let mut usable = weights.clone();
            usable.remove(target);
            if usable.values().all(|w| *w == 0.0) {
                return Vec::new();
            }
            let shares = allocate(plan.per_language_quota, &usable);
            let mut chosen: Vec<(u64, &RelevanceRecord)> = Vec::new();
            for (lang, share) in shares {
                let pool = eligible.iter().copied().filter(|r| r.language == lang).collect();
                chosen.extend(keyed(pool).into_iter().take(share));
            }
            chosen.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.id.cmp(&b.1.id)));
            chosen.into_iter().map(|(_, r)| r).collect()
        }
    }
}

/// Synthesizes up to `per_language_quota` translated records per target.
///
/// Output is grouped by target language (ascending) and ordered within a
/// language by per-record seed, then source id, so it does not depend on
/// how translation calls interleave.
pub fn augment_by_translation(
    records: &[RelevanceRecord],
    plan: &AugmentPlan,
    translator: &dyn Translator,
    max_in_flight: usize,
) -> Result<AugmentOutcome, AugmentError> {
    plan.validate()?;
    let sources: Vec<&RelevanceRecord> =
        records.iter().filter(|r| r.task == plan.task && r.origin == Origin::Original).collect();
    let mut report = AugmentReport {
        ignored_inputs: records.len() - sources.len(),
        overlapping_targets: plan.overlapping_targets(records),
        ..Default::default()
    };
    for lang in &report.overlapping_targets {
        log::warn!("augmentation target {lang} already has {} training records", plan.task);
    }

    let mut jobs: Vec<(&RelevanceRecord, &Language)> = Vec::new();
    for target in &plan.target_languages {
        let chosen = select_sources(&sources, target, plan);
        report.requested.insert(target.clone(), plan.per_language_quota);
        if chosen.len() < plan.per_language_quota {
            let missing = plan.per_language_quota - chosen.len();
            log::warn!(
                "only {} of {} requested sources available for {target}; emitting all of them",
                chosen.len(),
                plan.per_language_quota
            );
            report.shortfall.insert(target.clone(), missing);
        }
        jobs.extend(chosen.into_iter().map(|r| (r, target)));
    }

    let results = bounded_map(&jobs, max_in_flight, |(source, target)| {
        let request = TranslationRequest::new(source.query.clone(), source.language.clone(), (*target).clone());
        translator.translate(&request).map_err(|e| e.to_string()).and_then(|t| {
            RelevanceRecord::derived(
                source,
                Origin::Translated,
                &[target.as_str()],
                t.text,
                (*target).clone(),
                source.candidate.clone(),
                source.label,
            )
            .map_err(|e| e.to_string())
        })
    });

    let mut out = Vec::with_capacity(results.len());
    for ((source, target), result) in jobs.iter().zip(results) {
        match result {
            Ok(record) => {
                *report.produced.entry((*target).clone()).or_default() += 1;
                out.push(record);
            }
            Err(message) => {
                log::warn!("translation of {} into {target} failed: {message}", source.id);
                report.failures.push(TranslationFailure {
                    source_id: source.id.clone(),
                    target_language: (*target).clone(),
                    message,
                });
            }
        }
    }
    Ok(AugmentOutcome { records: out, report })
}
