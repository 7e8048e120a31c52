//! HTTP JSON clients for externally served models.
//!
//! Wire protocol:
//!
//! | endpoint          | request                                   | response                |
//! |-------------------|-------------------------------------------|-------------------------|
//! | `POST /translate` | `{text, source_lang, target_lang}`        | `{text}`                |
//! | `POST /embed`     | `{texts: [...]}`                          | `{vectors: [[...]]}`    |
//! | `POST /score`     | `{task, query, candidate, language}`      | `{logp_yes, logp_no}`   |
//!
//! Transport failures, 429 and 5xx answers are retried with exponential
//! backoff; other 4xx answers and malformed bodies fail immediately. Every
//! attempt of one logical request carries the same `Idempotency-Key`.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    check_embedding_batch, EmbeddingVector, Embedder, ProviderError, RelevanceScorer, ScorePair, ScoreRequest,
    TranslationRequest, TranslationResult, Translator,
};
use crate::corpus::Task;
use crate::hashing::sha256_hex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Delay before the second attempt; doubled for each further attempt.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_attempts: 3, base_delay: Duration::from_millis(250) }
    }
}

impl RetryPolicy {
    pub fn delay_before(&self, attempt: u32) -> Duration {
        // attempt is 1-based; no delay before the first
        if attempt <= 1 {
            Duration::ZERO
        } else {
            self.base_delay.saturating_mul(1u32 << (attempt - 2).min(16))
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpEndpoints {
    pub translate: Option<String>,
    pub embed: Option<String>,
    pub score: Option<String>,
    pub score_qc: Option<String>,
    pub score_qi: Option<String>,
    pub token: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl HttpEndpoints {
    pub fn new() -> Self {
        Self {
            translate: None,
            embed: None,
            score: None,
            score_qc: None,
            score_qi: None,
            token: None,
            timeout: Duration::from_secs(30),
            retry: RetryPolicy::default(),
        }
    }
}

impl Default for HttpEndpoints {
    fn default() -> Self {
        Self::new()
    }
}

enum AttemptError {
    Transient(String),
    Fatal(ProviderError),
}

/// Shared transport: one agent, bearer auth, retries.
#[derive(Debug, Clone)]
struct JsonClient {
    agent: ureq::Agent,
    token: Option<String>,
    retry: RetryPolicy,
}

impl JsonClient {
    fn new(endpoints: &HttpEndpoints) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(endpoints.timeout))
            .http_status_as_error(false)
            .build();
        Self { agent: ureq::Agent::new_with_config(config), token: endpoints.token.clone(), retry: endpoints.retry }
    }

    fn post<B: Serialize, R: DeserializeOwned>(&self, url: &str, body: &B) -> Result<R, ProviderError> {
        let payload = serde_json::to_vec(body).map_err(|e| ProviderError::InvalidRequest(e.to_string()))?;
        let idempotency_key = sha256_hex(&payload);
        let max = self.retry.max_attempts.max(1);
        let mut last = String::new();
        for attempt in 1..=max {
            let delay = self.retry.delay_before(attempt);
            if !delay.is_zero() {
                std::thread::sleep(delay);
            }
            match self.attempt(url, &payload, &idempotency_key) {
                Ok(value) => return Ok(value),
                Err(AttemptError::Fatal(err)) => return Err(err),
                Err(AttemptError::Transient(message)) => {
                    if attempt < max {
                        log::warn!(
                            "POST {url} attempt {attempt}/{max} failed: {message}; retrying in {} ms",
                            self.retry.delay_before(attempt + 1).as_millis()
                        );
                    } else {
                        log::warn!("POST {url} attempt {attempt}/{max} failed: {message}; giving up");
                    }
                    last = message;
                }
            }
        }
        Err(ProviderError::Unreachable { endpoint: url.to_string(), attempts: max, message: last })
    }

    fn attempt<R: DeserializeOwned>(&self, url: &str, payload: &[u8], key: &str) -> Result<R, AttemptError> {
        let mut request = self
            .agent
            .post(url)
            .header("content-type", "application/json")
            .header("idempotency-key", key);
        if let Some(token) = &self.token {
            request = request.header("authorization", format!("Bearer {token}"));
        }
        let mut response = request.send(payload).map_err(|e| AttemptError::Transient(e.to_string()))?;
        let status = response.status().as_u16();
        let body = response
            .body_mut()
            .read_to_string()
            .map_err(|e| AttemptError::Transient(format!("reading body: {e}")))?;
        if status == 429 || status >= 500 {
            return Err(AttemptError::Transient(format!("HTTP {status}")));
        }
        if !(200..300).contains(&status) {
            return Err(AttemptError::Fatal(ProviderError::Status { endpoint: url.to_string(), status, body }));
        }
        if body.trim().is_empty() {
            return Err(AttemptError::Fatal(ProviderError::EmptyResponse { endpoint: url.to_string() }));
        }
        serde_json::from_str(&body).map_err(|e| {
            AttemptError::Fatal(ProviderError::InvalidResponse { endpoint: url.to_string(), message: e.to_string() })
        })
    }
}

#[derive(Serialize)]
struct TranslateBody<'a> {
    text: &'a str,
    source_lang: &'a str,
    target_lang: &'a str,
}

#[derive(Deserialize)]
struct TranslateReply {
    text: String,
}

#[derive(Debug, Clone)]
pub struct HttpTranslator {
    url: Option<String>,
    client: JsonClient,
}

impl HttpTranslator {
    pub fn new(endpoints: HttpEndpoints) -> Self {
        Self { url: endpoints.translate.clone(), client: JsonClient::new(&endpoints) }
    }
}

impl Translator for HttpTranslator {
    fn translate(&self, request: &TranslationRequest) -> Result<TranslationResult, ProviderError> {
        request.validate()?;
        let url = self.url.as_deref().ok_or(ProviderError::NotConfigured("translate"))?;
        let reply: TranslateReply = self.client.post(
            url,
            &TranslateBody {
                text: &request.text,
                source_lang: request.source_language.as_str(),
                target_lang: request.target_language.as_str(),
            },
        )?;
        if reply.text.trim().is_empty() {
            return Err(ProviderError::EmptyResponse { endpoint: url.to_string() });
        }
        Ok(TranslationResult { text: reply.text })
    }
}

#[derive(Serialize)]
struct EmbedBody<'a> {
    texts: &'a [&'a str],
}

#[derive(Deserialize)]
struct EmbedReply {
    vectors: Vec<Vec<f64>>,
}

/// Sends fixed-size batches and checks dimensions across the whole input.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    url: Option<String>,
    batch_size: usize,
    client: JsonClient,
}

impl HttpEmbedder {
    pub fn new(endpoints: HttpEndpoints, batch_size: usize) -> Self {
        Self { url: endpoints.embed.clone(), batch_size: batch_size.max(1), client: JsonClient::new(&endpoints) }
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, ProviderError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(ProviderError::InvalidRequest("cannot embed empty text".into()));
        }
        let url = self.url.as_deref().ok_or(ProviderError::NotConfigured("embed"))?;
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(self.batch_size) {
            let reply: EmbedReply = self.client.post(url, &EmbedBody { texts: batch })?;
            if reply.vectors.len() != batch.len() {
                return Err(ProviderError::CountMismatch { expected: batch.len(), found: reply.vectors.len() });
            }
            for v in reply.vectors {
                out.push(EmbeddingVector::normalized(v)?);
            }
        }
        check_embedding_batch(texts.len(), &out)?;
        Ok(out)
    }
}

#[derive(Serialize)]
struct ScoreBody<'a> {
    task: Task,
    query: &'a str,
    candidate: &'a str,
    language: &'a str,
}

#[derive(Deserialize)]
struct ScoreReply {
    logp_yes: f64,
    logp_no: f64,
}

/// Scorer client; QC and QI may be served by different endpoints.
#[derive(Debug, Clone)]
pub struct HttpScorer {
    default_url: Option<String>,
    qc_url: Option<String>,
    qi_url: Option<String>,
    client: JsonClient,
}

impl HttpScorer {
    pub fn new(endpoints: HttpEndpoints) -> Self {
        Self {
            default_url: endpoints.score.clone(),
            qc_url: endpoints.score_qc.clone(),
            qi_url: endpoints.score_qi.clone(),
            client: JsonClient::new(&endpoints),
        }
    }

    fn url_for(&self, task: Task) -> Option<&str> {
        let specific = match task {
            Task::Qc => self.qc_url.as_deref(),
            Task::Qi => self.qi_url.as_deref(),
        };
        specific.or(self.default_url.as_deref())
    }
}

impl RelevanceScorer for HttpScorer {
    fn score(&self, request: &ScoreRequest) -> Result<ScorePair, ProviderError> {
        request.validate()?;
        let url = self.url_for(request.task).ok_or(ProviderError::NotConfigured("score"))?;
        let reply: ScoreReply = self.client.post(
            url,
            &ScoreBody {
                task: request.task,
                query: &request.query,
                candidate: &request.candidate,
                language: request.language.as_str(),
            },
        )?;
        ScorePair::new(reply.logp_yes, reply.logp_no)
    }
}
