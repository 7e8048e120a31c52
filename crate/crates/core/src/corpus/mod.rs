//! Canonical record model for query-category and query-item relevance data,
//! plus line-delimited I/O, deduplication, statistics and training-file
//! emission.

mod category;
mod dedup;
mod io;
mod language;
mod manifest;
mod record;
mod stats;
mod template;

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;

pub use category::{CategoryPath, CategoryPathError};
pub use dedup::{dedup, DedupOutcome, LabelConflict};
pub use io::{
    load_corpus, read_corpus, read_json, read_jsonl, read_lines, write_corpus, write_json, write_jsonl, LoadOptions,
    LoadReport, ParseMode, SkippedLine,
};
pub use manifest::{CorpusManifest, ManifestStats, SplitEntry};
pub use language::{table_sort, EmptyLanguage, Language, TABLE_ORDER};
pub use record::{content_id, InvalidLabel, Label, Origin, RecordError, RelevanceRecord, Task, UnknownTask};
pub use stats::{compute_stats, CellCounts, CorpusStats};
pub use template::{emit_training_file, InstructionRecord, InstructionTemplate};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {reason}", path.display())]
    Malformed { path: PathBuf, line: usize, reason: String },
    #[error("invalid instruction template: {0}")]
    Template(String),
}

/// Ids whose `source_id` chain does not end at an `Original` record within
/// `ancestry` (which should include `records` themselves).
pub fn unresolved_lineage<'a>(
    records: &'a [RelevanceRecord],
    ancestry: impl IntoIterator<Item = &'a RelevanceRecord>,
) -> Vec<&'a str> {
    let by_id: HashMap<&str, &RelevanceRecord> = ancestry.into_iter().map(|r| (r.id.as_str(), r)).collect();
    records
        .iter()
        .filter(|r| {
            let mut current = *r;
            let mut visited = HashSet::new();
            loop {
                if current.origin == Origin::Original {
                    return false;
                }
                if !visited.insert(current.id.as_str()) {
                    return true;
                }
                match current.source_id.as_deref().and_then(|s| by_id.get(s)) {
                    Some(parent) => current = parent,
                    None => return true,
                }
            }
        })
        .map(|r| r.id.as_str())
        .collect()
}
