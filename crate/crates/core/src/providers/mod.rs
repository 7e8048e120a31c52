//! Model dependencies behind narrow traits: a translator, an embedder and a
//! two-token relevance scorer.
//!
//! Each has a deterministic mock (see [`mock`]) and an HTTP JSON client (see
//! [`http`]). Everything downstream talks to the traits only, so tests run the
//! full pipeline without a network.

pub mod http;
pub mod mock;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::corpus::{Language, Task};

pub use http::{HttpEmbedder, HttpEndpoints, HttpScorer, HttpTranslator, RetryPolicy};
pub use mock::{MockEmbedder, MockScorer, MockTranslator, MOCK_DIMENSION};

pub const ENV_TRANSLATE_URL: &str = "PROVIDER_TRANSLATE_URL";
pub const ENV_EMBED_URL: &str = "PROVIDER_EMBED_URL";
pub const ENV_SCORE_URL: &str = "PROVIDER_SCORE_URL";
pub const ENV_TOKEN: &str = "PROVIDER_TOKEN";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no {0} endpoint configured")]
    NotConfigured(&'static str),
    #[error("{endpoint} unreachable after {attempts} attempt(s): {message}")]
    Unreachable { endpoint: String, attempts: u32, message: String },
    #[error("{endpoint} answered HTTP {status}: {body}")]
    Status { endpoint: String, status: u16, body: String },
    #[error("{endpoint} returned an empty response")]
    EmptyResponse { endpoint: String },
    #[error("{endpoint} returned an invalid response: {message}")]
    InvalidResponse { endpoint: String, message: String },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("embedding dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("expected {expected} results, got {found}")]
    CountMismatch { expected: usize, found: usize },
    #[error("embedding is the zero vector and cannot be normalized")]
    ZeroVector,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TranslationRequest {
    pub text: String,
    pub source_language: Language,
    pub target_language: Language,
}

impl TranslationRequest {
    pub fn new(text: impl Into<String>, source_language: Language, target_language: Language) -> Self {
        Self { text: text.into(), source_language, target_language }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.text.trim().is_empty() {
            return Err(ProviderError::InvalidRequest("text to translate is empty".into()));
        }
        if self.source_language == self.target_language {
            return Err(ProviderError::InvalidRequest(format!(
                "source and target language are both `{}`",
                self.source_language
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationResult {
    pub text: String,
}

/// A unit-length embedding with finite entries.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// L2-normalizes `values`. Fails on non-finite entries or a zero vector.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self, ProviderError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ProviderError::NonFinite("embedding".into()));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(ProviderError::ZeroVector);
        }
        for v in &mut values {
            *v /= norm;
        }
        Ok(Self(values))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Cosine similarity; both sides are unit length so this is a dot product.
    pub fn cosine(&self, other: &EmbeddingVector) -> f64 {
        dot(&self.0, &other.0)
    }
}

/// Sequential dot product. Kept in one place so every cosine in the crate is
/// summed in the same order.
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// Raw log-scores of the "yes" and "no" answer tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScorePair {
    pub logp_yes: f64,
    pub logp_no: f64,
}

impl ScorePair {
    pub fn new(logp_yes: f64, logp_no: f64) -> Result<Self, ProviderError> {
        if !logp_yes.is_finite() || !logp_no.is_finite() {
            return Err(ProviderError::NonFinite(format!("score pair ({logp_yes}, {logp_no})")));
        }
        Ok(Self { logp_yes, logp_no })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreRequest {
    pub task: Task,
    pub query: String,
    pub candidate: String,
    pub language: Language,
}

impl ScoreRequest {
    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.query.trim().is_empty() || self.candidate.trim().is_empty() {
            return Err(ProviderError::InvalidRequest("query and candidate must be non-empty".into()));
        }
        Ok(())
    }
}

pub trait Translator: Send + Sync {
    fn translate(&self, request: &TranslationRequest) -> Result<TranslationResult, ProviderError>;
}

pub trait Embedder: Send + Sync {
    /// One unit-length vector per input, all of the same dimension.
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, ProviderError>;
}

pub trait RelevanceScorer: Send + Sync {
    fn score(&self, request: &ScoreRequest) -> Result<ScorePair, ProviderError>;
}

/// Checks the batch-level embedder contract: count and uniform dimension.
pub fn check_embedding_batch(expected: usize, vectors: &[EmbeddingVector]) -> Result<(), ProviderError> {
    if vectors.len() != expected {
        return Err(ProviderError::CountMismatch { expected, found: vectors.len() });
    }
    if let Some(first) = vectors.first() {
        let dim = first.dimension();
        if let Some(bad) = vectors.iter().find(|v| v.dimension() != dim) {
            return Err(ProviderError::DimensionMismatch { expected: dim, found: bad.dimension() });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProviderKind {
    #[default]
    Mock,
    Http,
}

impl std::str::FromStr for ProviderKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "mock" => Ok(ProviderKind::Mock),
            "http" => Ok(ProviderKind::Http),
            other => Err(format!("unknown provider `{other}` (expected mock or http)")),
        }
    }
}

fn default_attempts() -> u32 {
    3
}
fn default_backoff_ms() -> u64 {
    250
}
fn default_timeout_ms() -> u64 {
    30_000
}
fn default_batch() -> usize {
    64
}
fn default_dimension() -> usize {
    MOCK_DIMENSION
}

/// Declarative provider selection, shared by the CLI and pipeline configs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderSettings {
    #[serde(default)]
    pub kind: ProviderKind,
    #[serde(default)]
    pub translate_url: Option<String>,
    #[serde(default)]
    pub embed_url: Option<String>,
    #[serde(default)]
    pub score_url: Option<String>,
    /// Per-task scorer overrides; fall back to `score_url`.
    #[serde(default)]
    pub score_url_qc: Option<String>,
    #[serde(default)]
    pub score_url_qi: Option<String>,
    /// Never written back out, so manifests do not leak credentials.
    #[serde(default, skip_serializing)]
    pub token: Option<String>,
    #[serde(default = "default_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_batch")]
    pub embed_batch_size: usize,
    #[serde(default = "default_dimension")]
    pub mock_dimension: usize,
}

impl Default for ProviderSettings {
    fn default() -> Self {
        Self {
            kind: ProviderKind::Mock,
            translate_url: None,
            embed_url: None,
            score_url: None,
            score_url_qc: None,
            score_url_qi: None,
            token: None,
            max_attempts: default_attempts(),
            backoff_ms: default_backoff_ms(),
            timeout_ms: default_timeout_ms(),
            embed_batch_size: default_batch(),
            mock_dimension: default_dimension(),
        }
    }
}

impl ProviderSettings {
    /// Fills unset endpoints and token from `PROVIDER_*` environment variables.
    pub fn with_env(mut self) -> Self {
        let var = |name: &str| std::env::var(name).ok().filter(|v| !v.trim().is_empty());
        self.translate_url = self.translate_url.or_else(|| var(ENV_TRANSLATE_URL));
        self.embed_url = self.embed_url.or_else(|| var(ENV_EMBED_URL));
        self.score_url = self.score_url.or_else(|| var(ENV_SCORE_URL));
        self.token = self.token.or_else(|| var(ENV_TOKEN));
        self
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            max_attempts: self.max_attempts.max(1),
            base_delay: std::time::Duration::from_millis(self.backoff_ms),
        }
    }

    fn endpoints(&self) -> HttpEndpoints {
        HttpEndpoints {
            translate: self.translate_url.clone(),
            embed: self.embed_url.clone(),
            score: self.score_url.clone(),
            score_qc: self.score_url_qc.clone(),
            score_qi: self.score_url_qi.clone(),
            token: self.token.clone(),
            timeout: std::time::Duration::from_millis(self.timeout_ms),
            retry: self.retry_policy(),
        }
    }
}

/// The three providers a run needs.
#[derive(Clone)]
pub struct Providers {
    pub translator: Arc<dyn Translator>,
    pub embedder: Arc<dyn Embedder>,
    pub scorer: Arc<dyn RelevanceScorer>,
}

impl Providers {
    pub fn mock() -> Self {
        Self::mock_with_dimension(MOCK_DIMENSION)
    }

    pub fn mock_with_dimension(dimension: usize) -> Self {
        Self {
            translator: Arc::new(MockTranslator),
            embedder: Arc::new(MockEmbedder::new(dimension)),
            scorer: Arc::new(MockScorer),
        }
    }

    /// Mock settings never construct an HTTP client.
    pub fn from_settings(settings: &ProviderSettings) -> Self {
        match settings.kind {
            ProviderKind::Mock => Self::mock_with_dimension(settings.mock_dimension),
            ProviderKind::Http => {
                let endpoints = settings.endpoints();
                Self {
                    translator: Arc::new(HttpTranslator::new(endpoints.clone())),
                    embedder: Arc::new(HttpEmbedder::new(endpoints.clone(), settings.embed_batch_size)),
                    scorer: Arc::new(HttpScorer::new(endpoints)),
                }
            }
        }
    }
}

impl std::fmt::Debug for Providers {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Providers").finish_non_exhaustive()
    }
}
