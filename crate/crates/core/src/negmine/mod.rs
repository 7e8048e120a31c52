//! Hard-negative mining: for a positive (query, candidate) pair, pick a
//! candidate that is semantically close to the true one and label the new
//! pair irrelevant.
//!
//! Per positive and ordinal a seeded generator draws, in this order: the
//! neighbourhood size `K` in `[k_min, k_max]`, the query language (translate
//! mode only), and the neighbour to use among the surviving top-`K`.

mod index;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

pub use index::{
    build_index, top_k_exhaustive, top_k_similar, CandidateCatalog, CandidateId, EmbeddingIndex, Neighbour,
};

use crate::concurrency::bounded_map;
use crate::corpus::{Label, Language, Origin, RelevanceRecord};
use crate::hashing::{derive_seed, SplitMix64};
use crate::providers::{ProviderError, TranslationRequest, Translator};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MiningError {
    #[error("candidate catalog is empty")]
    EmptyCatalog,
    #[error("embedding dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid mining configuration: {0}")]
    Config(String),
    #[error("record {id} is not a usable positive: {reason}")]
    InvalidPositive { id: String, reason: String },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

/// Which language the mined query is written in.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "targets")]
pub enum QueryMode {
    /// Reuse the positive's own query.
    #[default]
    SameLanguage,
    /// Translate the query into one of these languages, drawn per negative
    /// among those that differ from the positive's language. Positives whose
    /// language is the only target keep their query.
    Translate(BTreeSet<Language>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NegativeMiningConfig {
    #[serde(default = "default_k_min")]
    pub k_min: usize,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    /// Negatives per positive; fractional values spread evenly, so 0.5 mines
    /// one negative for every second positive.
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default)]
    pub query_mode: QueryMode,
}

fn default_k_min() -> usize {
    20
}

fn default_k_max() -> usize {
    50
}

fn default_ratio() -> f64 {
    1.0
}

impl Default for NegativeMiningConfig {
    fn default() -> Self {
        Self { k_min: 20, k_max: 50, ratio: 1.0, master_seed: 0, query_mode: QueryMode::SameLanguage }
    }
}

impl NegativeMiningConfig {
    pub fn validate(&self, catalog_size: usize) -> Result<(), MiningError> {
        if self.k_min == 0 || self.k_min > self.k_max {
            return Err(MiningError::Config(format!("need 1 <= k_min <= k_max, got {}..{}", self.k_min, self.k_max)));
        }
        if self.k_max + 1 > catalog_size {
            return Err(MiningError::Config(format!(
                "k_max = {} needs a catalog of at least {} entries, found {catalog_size}",
                self.k_max,
                self.k_max + 1
            )));
        }
        if !(self.ratio.is_finite() && self.ratio > 0.0) {
            return Err(MiningError::Config(format!("ratio must be positive, got {}", self.ratio)));
        }
        Ok(())
    }

    /// Negatives owed to the `i`-th positive: `floor((i+1)r) - floor(i r)`.
    pub fn negatives_for(&self, i: usize) -> usize {
        let r = self.ratio;
        (((i + 1) as f64 * r).floor() - (i as f64 * r).floor()) as usize
    }
}

/// Canonical form of a query for pair matching: NFC, lowercase, single spaces.
pub fn normalize_query(query: &str) -> String {
    let folded: String = query.nfc().collect::<String>().to_lowercase();
    folded.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Known relevant (query, candidate) pairs; mined negatives must avoid them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExclusionSet {
    pairs: HashSet<(String, String)>,
}

impl ExclusionSet {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a RelevanceRecord>) -> Self {
        let mut set = Self::default();
        for r in records {
            if r.label.is_relevant() {
                set.insert(&r.query, &r.candidate);
            }
        }
        set
    }

    pub fn insert(&mut self, query: &str, candidate: &str) {
        self.pairs.insert((normalize_query(query), candidate.to_string()));
    }

    pub fn contains(&self, query: &str, candidate: &str) -> bool {
        self.pairs.contains(&(normalize_query(query), candidate.to_string()))
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// How one negative was produced, enough to recompute it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningTrace {
    pub record_id: String,
    pub source_id: String,
    pub ordinal: usize,
    pub k: usize,
    pub source_candidate: CandidateId,
    pub candidate: CandidateId,
    /// 0-based position of `candidate` in the top-`k` list.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedPositive {
    pub source_id: String,
    pub ordinal: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiningReport {
    pub positives: usize,
    pub requested: usize,
    pub mined: usize,
    /// Neighbourhood empty after exclusions.
    pub exhausted: Vec<SkippedPositive>,
    /// Query translation failed.
    pub translation_failures: Vec<SkippedPositive>,
    pub per_language: BTreeMap<Language, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MiningOutcome {
    pub records: Vec<RelevanceRecord>,
    pub trace: Vec<MiningTrace>,
    pub report: MiningReport,
}

enum JobResult {
    Mined(RelevanceRecord, MiningTrace),
    Exhausted(String),
    TranslationFailed(String),
}

/// Mines negatives for every positive, ordered by (source id, ordinal).
pub fn mine_hard_negatives(
    positives: &[RelevanceRecord],
    catalog: &CandidateCatalog,
    index: &EmbeddingIndex,
    translator: Option<&dyn Translator>,
    exclusions: &ExclusionSet,
    config: &NegativeMiningConfig,
    max_in_flight: usize,
) -> Result<MiningOutcome, MiningError> {
    config.validate(catalog.len())?;
    if index.len() != catalog.len() {
        return Err(MiningError::Config(format!(
            "index has {} rows but catalog has {} entries",
            index.len(),
            catalog.len()
        )));
    }
    if matches!(config.query_mode, QueryMode::Translate(_)) && translator.is_none() {
        return Err(MiningError::Config("translate mode requires a translator".into()));
    }

    let mut sources = Vec::with_capacity(positives.len());
    for p in positives {
        if p.label != Label::Relevant {
            return Err(MiningError::InvalidPositive { id: p.id.clone(), reason: "label is not 1".into() });
        }
        if p.task != catalog.task() {
            return Err(MiningError::InvalidPositive { id: p.id.clone(), reason: format!("task {}", p.task) });
        }
        let cid = catalog.lookup(&p.candidate).ok_or_else(|| MiningError::InvalidPositive {
            id: p.id.clone(),
            reason: "candidate not in catalog".into(),
        })?;
        sources.push((p, cid));
    }

    // neighbours of each distinct source candidate, computed once at k_max
    let distinct: Vec<CandidateId> = sources.iter().map(|(_, c)| *c).collect::<BTreeSet<_>>().into_iter().collect();
    let lists = bounded_map(&distinct, max_in_flight, |&cid| {
        top_k_similar(index, index.row(cid).values(), config.k_max, Some(cid))
    });
    let mut neighbours: HashMap<CandidateId, Vec<Neighbour>> = HashMap::with_capacity(distinct.len());
    for (cid, list) in distinct.into_iter().zip(lists) {
        neighbours.insert(cid, list?);
    }

    let mut jobs = Vec::new();
    for (i, (p, cid)) in sources.iter().enumerate() {
        for ordinal in 0..config.negatives_for(i) {
            jobs.push((*p, *cid, ordinal));
        }
    }

    let results = bounded_map(&jobs, max_in_flight, |&(p, cid, ordinal)| {
        let ordinal_key = ordinal.to_string();
        let mut rng = SplitMix64::new(derive_seed(config.master_seed, &["negative", p.id.as_str(), &ordinal_key]));
        let k = rng.in_range(config.k_min as u64, config.k_max as u64) as usize;

        let language = match &config.query_mode {
            QueryMode::SameLanguage => p.language.clone(),
            QueryMode::Translate(targets) => {
                let options: Vec<&Language> = targets.iter().filter(|l| **l != p.language).collect();
                if options.is_empty() {
                    p.language.clone()
                } else {
                    options[rng.below(options.len() as u64) as usize].clone()
                }
            }
        };
        let query = if language == p.language {
            p.query.clone()
        } else {
            let request = TranslationRequest::new(p.query.clone(), p.language.clone(), language.clone());
            match translator.expect("checked above").translate(&request) {
                Ok(t) => t.text,
                Err(e) => return JobResult::TranslationFailed(e.to_string()),
            }
        };

        let pool: Vec<(usize, &Neighbour)> = neighbours[&cid][..k]
            .iter()
            .enumerate()
            .filter(|(_, n)| {
                let text = catalog.text(n.id);
                text != p.candidate && !exclusions.contains(&query, text) && !exclusions.contains(&p.query, text)
            })
            .collect();
        if pool.is_empty() {
            return JobResult::Exhausted(format!("no admissible neighbour among top {k}"));
        }
        let (rank, chosen) = pool[rng.below(pool.len() as u64) as usize];
        let record = RelevanceRecord::derived(
            p,
            Origin::SyntheticNegative,
            &[&ordinal_key],
            query,
            language,
            catalog.text(chosen.id),
            Label::Irrelevant,
        )
        .expect("fields come from validated records");
        let trace = MiningTrace {
            record_id: record.id.clone(),
            source_id: p.id.clone(),
            ordinal,
            k,
            source_candidate: cid,
            candidate: chosen.id,
            rank,
        };
        JobResult::Mined(record, trace)
    });

    let mut report = MiningReport { positives: positives.len(), requested: jobs.len(), ..Default::default() };
    let mut mined = Vec::new();
    for ((p, _, ordinal), result) in jobs.iter().zip(results) {
        let skipped = |reason: String| SkippedPositive { source_id: p.id.clone(), ordinal: *ordinal, reason };
        match result {
            JobResult::Mined(record, trace) => mined.push((p.id.clone(), *ordinal, record, trace)),
            JobResult::Exhausted(reason) => report.exhausted.push(skipped(reason)),
            JobResult::TranslationFailed(reason) => {
                log::warn!("translating query of {} failed: {reason}", p.id);
                report.translation_failures.push(skipped(reason));
            }
        }
    }
    if !report.exhausted.is_empty() {
        log::warn!("{} negatives skipped: neighbourhood empty after exclusions", report.exhausted.len());
    }
    mined.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut records = Vec::with_capacity(mined.len());
    let mut trace = Vec::with_capacity(mined.len());
    for (_, _, r, t) in mined {
        *report.per_language.entry(r.language.clone()).or_default() += 1;
        records.push(r);
        trace.push(t);
    }
    report.mined = records.len();
    Ok(MiningOutcome { records, trace, report })
}
