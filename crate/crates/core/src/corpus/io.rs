use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::record::{content_id, Label, Origin, RecordError, RelevanceRecord, Task};
use super::{CorpusError, Language};

/// How malformed lines are treated while loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParseMode {
    /// Abort on the first malformed line.
    #[default]
    Strict,
    /// Skip malformed lines and report them.
    Lenient,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Only accept records of this task; other tasks count as malformed.
    pub task: Option<Task>,
    pub mode: ParseMode,
}

impl LoadOptions {
    pub fn for_task(task: Task) -> Self {
        Self { task: Some(task), mode: ParseMode::Strict }
    }

    pub fn lenient(mut self) -> Self {
        self.mode = ParseMode::Lenient;
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkippedLine {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub records: Vec<RelevanceRecord>,
    pub skipped: Vec<SkippedLine>,
    /// Language codes outside ISO-639-1 that were nevertheless accepted.
    pub unknown_languages: BTreeSet<Language>,
    /// Records that arrived without an id and received a content hash.
    pub assigned_ids: usize,
}

/// On-disk shape of a record; optional fields are filled in on load.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireRecord {
    #[serde(default)]
    id: Option<String>,
    task: Task,
    query: String,
    language: Language,
    candidate: String,
    label: Label,
    #[serde(default)]
    origin: Option<Origin>,
    #[serde(default)]
    source_id: Option<String>,
}

impl WireRecord {
    fn into_record(self) -> Result<(RelevanceRecord, bool), RecordError> {
        let assigned = self.id.is_none();
        let id = self
            .id
            .unwrap_or_else(|| content_id(self.task, &self.query, &self.candidate, self.label));
        let record = RelevanceRecord {
            id,
            task: self.task,
            query: self.query,
            language: self.language,
            candidate: self.candidate,
            label: self.label,
            origin: self.origin.unwrap_or_default(),
            source_id: self.source_id,
        };
        record.validate()?;
        Ok((record, assigned))
    }
}

fn parse_line(text: &str, options: &LoadOptions) -> Result<(RelevanceRecord, bool), String> {
    let wire: WireRecord = serde_json::from_str(text).map_err(|e| e.to_string())?;
    let (record, assigned) = wire.into_record().map_err(|e| e.to_string())?;
    if let Some(task) = options.task {
        if record.task != task {
            return Err(format!("task `{}` does not match expected `{task}`", record.task));
        }
    }
    Ok((record, assigned))
}

/// Reads a line-delimited corpus file. Blank lines are ignored.
pub fn load_corpus(path: &Path, options: &LoadOptions) -> Result<LoadReport, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    read_corpus(BufReader::new(file), path, options)
}

pub fn read_corpus<R: BufRead>(reader: R, origin: &Path, options: &LoadOptions) -> Result<LoadReport, CorpusError> {
    let mut report = LoadReport::default();
    for (index, line) in reader.lines().enumerate() {
        let line_no = index + 1;
        let line = line.map_err(|source| CorpusError::Io { path: origin.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(&line, options) {
            Ok((record, assigned)) => {
                if !record.language.is_known() {
                    report.unknown_languages.insert(record.language.clone());
                }
                report.assigned_ids += usize::from(assigned);
                report.records.push(record);
            }
            Err(reason) => match options.mode {
                ParseMode::Strict => {
                    return Err(CorpusError::Malformed { path: origin.to_path_buf(), line: line_no, reason })
                }
                ParseMode::Lenient => report.skipped.push(SkippedLine { line: line_no, reason }),
            },
        }
    }
    if !report.unknown_languages.is_empty() {
        log::warn!(
            "{}: unrecognised language codes accepted: {}",
            origin.display(),
            report.unknown_languages.iter().map(Language::as_str).collect::<Vec<_>>().join(", ")
        );
    }
    Ok(report)
}

pub fn write_corpus(path: &Path, records: &[RelevanceRecord]) -> Result<usize, CorpusError> {
    write_jsonl(path, records)
}

/// Writes one JSON document per line. Parent directories are created.
pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<usize, CorpusError> {
    let io_err = |source| CorpusError::Io { path: path.to_path_buf(), source };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err)?;
    }
    let mut out = BufWriter::new(File::create(path).map_err(io_err)?);
    for item in items {
        serde_json::to_writer(&mut out, item).map_err(|e| CorpusError::Io {
            path: path.to_path_buf(),
            source: std::io::Error::other(e),
        })?;
        out.write_all(b"\n").map_err(io_err)?;
    }
    out.flush().map_err(io_err)?;
    Ok(items.len())
}

/// Reads a line-delimited JSON file strictly.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    let mut items = Vec::new();
    for (index, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
        if line.trim().is_empty() {
            continue;
        }
        let item = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            path: path.to_path_buf(),
            line: index + 1,
            reason: e.to_string(),
        })?;
        items.push(item);
    }
    Ok(items)
}

/// Writes a pretty-printed JSON document.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CorpusError> {
    let io_err = |source| CorpusError::Io { path: path.to_path_buf(), source };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(io_err)?;
    }
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(std::io::Error::other(e)))?;
    text.push('\n');
    std::fs::write(path, text).map_err(io_err)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
    serde_json::from_str(&text).map_err(|e| CorpusError::Malformed {
        path: path.to_path_buf(),
        line: e.line(),
        reason: e.to_string(),
    })
}

/// Reads a plain text file with one entry per line, skipping blank lines.
pub fn read_lines(path: &Path) -> Result<Vec<String>, CorpusError> {
    let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io { path: PathBuf::from(path), source })?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(str::to_string).collect())
}
