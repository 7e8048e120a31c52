//! Exit-code taxonomy: 1 usage, 2 data, 3 provider.

use std::fmt;

use relpipe::corpus::CorpusError;
use relpipe::negmine::MiningError;
use relpipe::pipeline::{FailureKind, PipelineError};
use relpipe::providers::ProviderError;
use relpipe::scoring::{ScoreFailure, ScoringError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Usage = 1,
    Data = 2,
    Provider = 3,
}

#[derive(Debug)]
pub struct Failure {
    pub exit: Exit,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(e: impl Into<anyhow::Error>) -> Self {
        Self { exit: Exit::Usage, error: e.into() }
    }

    pub fn data(e: impl Into<anyhow::Error>) -> Self {
        Self { exit: Exit::Data, error: e.into() }
    }

    pub fn provider(e: impl Into<anyhow::Error>) -> Self {
        Self { exit: Exit::Provider, error: e.into() }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.error)
    }
}

pub type CliResult<T> = Result<T, Failure>;

/// Attaches an exit class to any error.
pub trait Classify<T> {
    fn or_usage(self) -> CliResult<T>;
    fn or_data(self) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn or_usage(self) -> CliResult<T> {
        self.map_err(Failure::usage)
    }

    fn or_data(self) -> CliResult<T> {
        self.map_err(Failure::data)
    }
}

impl From<CorpusError> for Failure {
    fn from(e: CorpusError) -> Self {
        match e {
            CorpusError::Template(_) => Failure::usage(e),
            _ => Failure::data(e),
        }
    }
}

impl From<ProviderError> for Failure {
    fn from(e: ProviderError) -> Self {
        match e {
            ProviderError::InvalidRequest(_) => Failure::data(e),
            _ => Failure::provider(e),
        }
    }
}

impl From<MiningError> for Failure {
    fn from(e: MiningError) -> Self {
        match e {
            MiningError::Provider(p) => p.into(),
            MiningError::Config(_) => Failure::usage(e),
            _ => Failure::data(e),
        }
    }
}

impl From<ScoreFailure> for Failure {
    fn from(e: ScoreFailure) -> Self {
        match e {
            ScoreFailure::Provider { .. } => Failure::provider(e),
            ScoreFailure::Scoring { .. } => Failure::data(e),
        }
    }
}

impl From<ScoringError> for Failure {
    fn from(e: ScoringError) -> Self {
        match e {
            ScoringError::BadGridStep(_) => Failure::usage(e),
            _ => Failure::data(e),
        }
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let exit = match e.kind() {
            FailureKind::Config => Exit::Usage,
            FailureKind::Data => Exit::Data,
            FailureKind::Provider => Exit::Provider,
        };
        Self { exit, error: e.into() }
    }
}
