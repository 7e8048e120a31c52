use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::io::{load_corpus, LoadOptions, SkippedLine};
use super::record::Task;
use super::stats::{compute_stats, CorpusStats};
use super::CorpusError;

/// One split file of a corpus.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitEntry {
    pub split: String,
    pub path: PathBuf,
    /// When set, records of any other task are rejected.
    #[serde(default)]
    pub task: Option<Task>,
}

/// A TOML list of split files:
///
/// ```toml
/// [[splits]]
/// task = "qc"
/// split = "train"
/// path = "qc_train.jsonl"
/// ```
///
/// Relative paths are resolved against the manifest's directory.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    pub splits: Vec<SplitEntry>,
}

#[derive(Debug, Clone, Default)]
pub struct ManifestStats {
    pub stats: CorpusStats,
    /// Lines skipped in lenient mode, per file.
    pub skipped: Vec<(PathBuf, Vec<SkippedLine>)>,
}

impl CorpusManifest {
    pub fn from_toml_file(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io { path: path.to_path_buf(), source })?;
        let mut manifest: Self = toml::from_str(&text)
            .map_err(|e| CorpusError::Malformed { path: path.to_path_buf(), line: 0, reason: e.to_string() })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for s in &mut manifest.splits {
            if s.path.is_relative() {
                s.path = base.join(&s.path);
            }
        }
        Ok(manifest)
    }

    /// Loads every split and tallies it.
    pub fn compute_stats(&self, options: &LoadOptions) -> Result<ManifestStats, CorpusError> {
        let mut out = ManifestStats::default();
        for split in &self.splits {
            let opts = LoadOptions { task: split.task.or(options.task), mode: options.mode };
            let report = load_corpus(&split.path, &opts)?;
            out.stats.merge(&compute_stats(&report.records, &split.split));
            if !report.skipped.is_empty() {
                out.skipped.push((split.path.clone(), report.skipped));
            }
        }
        Ok(out)
    }
}
