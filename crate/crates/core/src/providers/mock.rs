//! Deterministic stand-ins for the model providers.
//!
//! All three are pure functions of their input, so any run that uses them is
//! bit-reproducible across machines.

use std::collections::HashSet;

use unicode_normalization::UnicodeNormalization;

use super::{
    EmbeddingVector, Embedder, ProviderError, RelevanceScorer, ScorePair, ScoreRequest, TranslationRequest,
    TranslationResult, Translator,
};
use crate::hashing::fnv1a64;

pub const MOCK_DIMENSION: usize = 64;
const START_OF_TEXT: char = '\u{2402}';
const END_OF_TEXT: char = '\u{2403}';
const SCORE_FLOOR: f64 = 1e-6;

/// Prefixes the text with `⟦<target>⟧ `.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockTranslator;

impl Translator for MockTranslator {
    fn translate(&self, request: &TranslationRequest) -> Result<TranslationResult, ProviderError> {
        request.validate()?;
        Ok(TranslationResult { text: format!("⟦{}⟧ {}", request.target_language, request.text) })
    }
}

/// Hashed character-trigram embedder.
///
/// Text is NFC-normalized, lowercased and wrapped in `␂…␃`; every character
/// trigram adds 1.0 to bucket `fnv1a64(trigram) mod dimension`; the result is
/// L2-normalized.
#[derive(Debug, Clone, Copy)]
pub struct MockEmbedder {
    dimension: usize,
}

impl Default for MockEmbedder {
    fn default() -> Self {
        Self::new(MOCK_DIMENSION)
    }
}

impl MockEmbedder {
    pub fn new(dimension: usize) -> Self {
        assert!(dimension > 0, "embedding dimension must be positive");
        Self { dimension }
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn embed_one(&self, text: &str) -> Result<EmbeddingVector, ProviderError> {
        if text.trim().is_empty() {
            return Err(ProviderError::InvalidRequest("cannot embed empty text".into()));
        }
        let normalized: String = text.nfc().collect::<String>().to_lowercase();
        let mut chars = Vec::with_capacity(normalized.chars().count() + 2);
        chars.push(START_OF_TEXT);
        chars.extend(normalized.chars());
        chars.push(END_OF_TEXT);

        let mut buckets = vec![0.0; self.dimension];
        let mut trigram = String::with_capacity(12);
        for window in chars.windows(3) {
            trigram.clear();
            trigram.extend(window);
            let bucket = (fnv1a64(trigram.as_bytes()) % self.dimension as u64) as usize;
            buckets[bucket] += 1.0;
        }
        EmbeddingVector::normalized(buckets)
    }
}

impl Embedder for MockEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        texts.iter().map(|t| self.embed_one(t)).collect()
    }
}

/// Token-overlap scorer: `s` is the Jaccard index of the lowercased
/// whitespace tokens, `logp_yes = ln(s + 1e-6)`, `logp_no = ln(1 - s + 1e-6)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct MockScorer;

impl MockScorer {
    pub fn jaccard(query: &str, candidate: &str) -> f64 {
        let q = query.to_lowercase();
        let c = candidate.to_lowercase();
        let a: HashSet<&str> = q.split_whitespace().collect();
        let b: HashSet<&str> = c.split_whitespace().collect();
        let union = a.union(&b).count();
        if union == 0 {
            return 0.0;
        }
        a.intersection(&b).count() as f64 / union as f64
    }

    pub fn pair_for_overlap(s: f64) -> ScorePair {
        ScorePair { logp_yes: (s + SCORE_FLOOR).ln(), logp_no: (1.0 - s + SCORE_FLOOR).ln() }
    }
}

impl RelevanceScorer for MockScorer {
    fn score(&self, request: &ScoreRequest) -> Result<ScorePair, ProviderError> {
        request.validate()?;
        Ok(Self::pair_for_overlap(Self::jaccard(&request.query, &request.candidate)))
    }
}
