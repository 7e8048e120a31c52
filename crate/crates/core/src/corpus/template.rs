use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::write_jsonl;
use super::record::{RelevanceRecord, Task};
use super::CorpusError;

pub const QUERY: &str = "{query}";
pub const CANDIDATE: &str = "{candidate}";
pub const LANGUAGE: &str = "{language}";

/// Alpaca-style prompt template. `{query}`, `{candidate}` and `{language}`
/// must each appear in the instruction or the input.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionTemplate {
    pub instruction: String,
    pub input: String,
}

/// One emitted training example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub instruction: String,
    pub input: String,
    pub output: String,
}

impl InstructionTemplate {
    pub fn default_for(task: Task) -> Self {
        match task {
            Task::Qc => Self {
                instruction: "Decide whether the product category path is relevant to the search query. \
                              The query is written in language `{language}`. Answer \"yes\" or \"no\"."
                    .to_string(),
                input: "Query: {query}\nCategory path: {candidate}".to_string(),
            },
            Task::Qi => Self {
                instruction: "Decide whether the product is relevant to the search query, allowing for \
                              spelling variations and ambiguous intent. The query is written in language \
                              `{language}`. Answer \"yes\" or \"no\"."
                    .to_string(),
                input: "Query: {query}\nItem title: {candidate}".to_string(),
            },
        }
    }

    pub fn from_toml_file(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
        let template: Self = toml::from_str(&text).map_err(|e| CorpusError::Template(e.to_string()))?;
        template.validate()?;
        Ok(template)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        for placeholder in [QUERY, CANDIDATE, LANGUAGE] {
            if !self.instruction.contains(placeholder) && !self.input.contains(placeholder) {
                return Err(CorpusError::Template(format!("placeholder {placeholder} is missing")));
            }
        }
        Ok(())
    }

    /// Single left-to-right pass; substituted text is never rescanned.
    fn fill(text: &str, record: &RelevanceRecord) -> String {
        let mut out = String::with_capacity(text.len() + record.query.len() + record.candidate.len());
        let mut rest = text;
        while let Some(start) = rest.find('{') {
            out.push_str(&rest[..start]);
            let tail = &rest[start..];
            let (value, len) = if tail.starts_with(QUERY) {
                (record.query.as_str(), QUERY.len())
            } else if tail.starts_with(CANDIDATE) {
                (record.candidate.as_str(), CANDIDATE.len())
            } else if tail.starts_with(LANGUAGE) {
                (record.language.as_str(), LANGUAGE.len())
            } else {
                ("{", 1)
            };
            out.push_str(value);
            rest = &tail[len..];
        }
        out.push_str(rest);
        out
    }

    pub fn render(&self, record: &RelevanceRecord) -> InstructionRecord {
        InstructionRecord {
            instruction: Self::fill(&self.instruction, record),
            input: Self::fill(&self.input, record),
            output: record.label.answer().to_string(),
        }
    }
}

/// Writes one instruction record per corpus record and returns the count.
pub fn emit_training_file(
    records: &[RelevanceRecord],
    template: &InstructionTemplate,
    path: &Path,
) -> Result<usize, CorpusError> {
    template.validate()?;
    let rendered: Vec<InstructionRecord> = records.iter().map(|r| template.render(r)).collect();
    write_jsonl(path, &rendered)
}
