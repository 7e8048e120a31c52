use std::collections::{HashMap, HashSet};

use serde::Serialize;

use super::record::{RelevanceRecord, Task};

/// The same (task, query, candidate) seen with both labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LabelConflict {
    pub task: Task,
    pub query: String,
    pub candidate: String,
    pub relevant_id: String,
    pub irrelevant_id: String,
}

#[derive(Debug, Clone, Default)]
pub struct DedupOutcome {
    pub records: Vec<RelevanceRecord>,
    pub removed: usize,
    /// Reported only; both records are kept.
    pub conflicts: Vec<LabelConflict>,
}

/// Keeps the first record per (task, query, candidate, label), preserving order.
pub fn dedup(records: Vec<RelevanceRecord>) -> DedupOutcome {
    let mut seen = HashSet::with_capacity(records.len());
    // (task, query, candidate) -> (label, id) of the first kept record
    let mut pairs: HashMap<(Task, String, String), Vec<(bool, String)>> = HashMap::new();
    let mut kept = Vec::with_capacity(records.len());
    let mut removed = 0;
    let mut conflicts = Vec::new();

    for record in records {
        let key = (record.task, record.query.clone(), record.candidate.clone(), record.label);
        if !seen.insert(key) {
            removed += 1;
            continue;
        }
        let labels = pairs
            .entry((record.task, record.query.clone(), record.candidate.clone()))
            .or_default();
        let relevant = record.label.is_relevant();
        if let Some((_, other_id)) = labels.iter().find(|(l, _)| *l != relevant) {
            let (relevant_id, irrelevant_id) = if relevant {
                (record.id.clone(), other_id.clone())
            } else {
                (other_id.clone(), record.id.clone())
            };
            conflicts.push(LabelConflict {
                task: record.task,
                query: record.query.clone(),
                candidate: record.candidate.clone(),
                relevant_id,
                irrelevant_id,
            });
        }
        labels.push((relevant, record.id.clone()));
        kept.push(record);
    }

    DedupOutcome { records: kept, removed, conflicts }
}
