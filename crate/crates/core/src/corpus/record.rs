use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Language;
use crate::hashing::{content_hash, hex_id};

/// Which relevance judgement a record belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Query against a category path.
    Qc,
    /// Query against an item title.
    Qi,
}

impl Task {
    pub fn as_str(self) -> &'static str {
        match self {
            Task::Qc => "qc",
            Task::Qi => "qi",
        }
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown task `{0}` (expected `qc` or `qi`)")]
pub struct UnknownTask(pub String);

impl FromStr for Task {
    type Err = UnknownTask;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qc" => Ok(Task::Qc),
            "qi" => Ok(Task::Qi),
            _ => Err(UnknownTask(s.to_string())),
        }
    }
}

/// Binary relevance label. Serialized as the integers `0` and `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Label {
    Irrelevant,
    Relevant,
}

impl Label {
    pub fn is_relevant(self) -> bool {
        self == Label::Relevant
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Label::Irrelevant => 0,
            Label::Relevant => 1,
        }
    }

    /// The target text an instruction-tuned model is trained to produce.
    pub fn answer(self) -> &'static str {
        match self {
            Label::Relevant => "yes",
            Label::Irrelevant => "no",
        }
    }

    pub fn from_bool(relevant: bool) -> Self {
        if relevant {
            Label::Relevant
        } else {
            Label::Irrelevant
        }
    }

    pub fn flipped(self) -> Self {
        Label::from_bool(!self.is_relevant())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("label must be 0 or 1, got {0}")]
pub struct InvalidLabel(pub u8);

impl TryFrom<u8> for Label {
    type Error = InvalidLabel;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            0 => Ok(Label::Irrelevant),
            1 => Ok(Label::Relevant),
            other => Err(InvalidLabel(other)),
        }
    }
}

impl From<Label> for u8 {
    fn from(value: Label) -> Self {
        value.as_u8()
    }
}

/// How a record came to exist.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    #[default]
    Original,
    Translated,
    SyntheticNegative,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Original => "original",
            Origin::Translated => "translated",
            Origin::SyntheticNegative => "synthetic_negative",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One labeled (query, candidate) pair.
///
/// Construct through [`RelevanceRecord::original`] or
/// [`RelevanceRecord::derived`]; both enforce the field invariants.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelevanceRecord {
    pub id: String,
    pub task: Task,
    pub query: String,
    pub language: Language,
    pub candidate: String,
    pub label: Label,
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RecordError {
    #[error("query is empty")]
    EmptyQuery,
    #[error("candidate is empty")]
    EmptyCandidate,
    #[error("id is empty")]
    EmptyId,
    #[error("origin `original` must not carry a source_id")]
    OriginalWithSource,
    #[error("origin `{0}` requires a source_id")]
    DerivedWithoutSource(Origin),
}

/// Stable id of an original record: hash of task, query, candidate and label.
pub fn content_id(task: Task, query: &str, candidate: &str, label: Label) -> String {
    let label = label.as_u8().to_string();
    hex_id(content_hash(&[task.as_str(), query, candidate, label.as_str()]))
}

impl RelevanceRecord {
    /// An original record with a content-derived id.
    pub fn original(
        task: Task,
        query: impl Into<String>,
        language: Language,
        candidate: impl Into<String>,
        label: Label,
    ) -> Result<Self, RecordError> {
        let query = query.into();
        let candidate = candidate.into();
        let id = content_id(task, &query, &candidate, label);
        let record = Self {
            id,
            task,
            query,
            language,
            candidate,
            label,
            origin: Origin::Original,
            source_id: None,
        };
        record.validate()?;
        Ok(record)
    }

    /// A record synthesized from `source`. The id hashes the provenance key so
    /// it is unique per (source, derivation) even when content repeats.
    pub fn derived(
        source: &RelevanceRecord,
        origin: Origin,
        provenance_key: &[&str],
        query: impl Into<String>,
        language: Language,
        candidate: impl Into<String>,
        label: Label,
    ) -> Result<Self, RecordError> {
        if origin == Origin::Original {
            return Err(RecordError::OriginalWithSource);
        }
        let mut key = vec![origin.as_str(), source.id.as_str()];
        key.extend_from_slice(provenance_key);
        let record = Self {
            id: hex_id(content_hash(&key)),
            task: source.task,
            query: query.into(),
            language,
            candidate: candidate.into(),
            label,
            origin,
            source_id: Some(source.id.clone()),
        };
        record.validate()?;
        Ok(record)
    }

    pub fn validate(&self) -> Result<(), RecordError> {
        if self.id.trim().is_empty() {
            return Err(RecordError::EmptyId);
        }
        if self.query.trim().is_empty() {
            return Err(RecordError::EmptyQuery);
        }
        if self.candidate.trim().is_empty() {
            return Err(RecordError::EmptyCandidate);
        }
        match (self.origin, &self.source_id) {
            (Origin::Original, Some(_)) => Err(RecordError::OriginalWithSource),
            (origin, None) if origin != Origin::Original => {
                Err(RecordError::DerivedWithoutSource(origin))
            }
            _ => Ok(()),
        }
    }

    /// Key under which exact duplicates collapse.
    pub fn dedup_key(&self) -> (Task, &str, &str, Label) {
        (self.task, &self.query, &self.candidate, self.label)
    }
}
