//! Exact cosine top-k over a dense, unit-normalized candidate matrix.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use serde::{Deserialize, Serialize};

use super::MiningError;
use crate::corpus::Task;
use crate::providers::{dot, Embedder, EmbeddingVector};

/// Position of a candidate in its catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CandidateId(pub u32);

impl CandidateId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Every candidate string of one task, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateCatalog {
    task: Task,
    entries: Vec<String>,
    first_id: HashMap<String, CandidateId>,
}

impl CandidateCatalog {
    pub fn new(task: Task, entries: impl IntoIterator<Item = String>) -> Result<Self, MiningError> {
        let entries: Vec<String> = entries.into_iter().collect();
        if entries.len() > u32::MAX as usize {
            return Err(MiningError::Config("catalog too large".into()));
        }
        let mut first_id = HashMap::with_capacity(entries.len());
        for (i, text) in entries.iter().enumerate() {
            if text.trim().is_empty() {
                return Err(MiningError::Config(format!("catalog entry {i} is empty")));
            }
            first_id.entry(text.clone()).or_insert(CandidateId(i as u32));
        }
        Ok(Self { task, entries, first_id })
    }

    /// Reads one candidate per non-blank line.
    pub fn from_lines(task: Task, lines: &[String]) -> Result<Self, MiningError> {
        Self::new(task, lines.iter().map(|l| l.trim()).filter(|l| !l.is_empty()).map(str::to_string))
    }

    /// Adds `text` unless present; returns its id.
    pub fn insert(&mut self, text: &str) -> Result<CandidateId, MiningError> {
        if let Some(id) = self.first_id.get(text) {
            return Ok(*id);
        }
        if text.trim().is_empty() {
            return Err(MiningError::Config("catalog entry is empty".into()));
        }
        let id = CandidateId(self.entries.len() as u32);
        self.entries.push(text.to_string());
        self.first_id.insert(text.to_string(), id);
        Ok(id)
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn text(&self, id: CandidateId) -> &str {
        &self.entries[id.index()]
    }

    pub fn entries(&self) -> &[String] {
        &self.entries
    }

    /// Id of the first entry with exactly this text.
    pub fn lookup(&self, text: &str) -> Option<CandidateId> {
        self.first_id.get(text).copied()
    }
}

/// Unit-length rows aligned with catalog order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingIndex {
    dimension: usize,
    rows: Vec<EmbeddingVector>,
}

impl EmbeddingIndex {
    pub fn from_vectors(rows: Vec<EmbeddingVector>) -> Result<Self, MiningError> {
        let dimension = rows.first().map(EmbeddingVector::dimension).ok_or(MiningError::EmptyCatalog)?;
        if let Some(bad) = rows.iter().find(|r| r.dimension() != dimension) {
            return Err(MiningError::DimensionMismatch { expected: dimension, found: bad.dimension() });
        }
        Ok(Self { dimension, rows })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, id: CandidateId) -> &EmbeddingVector {
        &self.rows[id.index()]
    }

    fn check_query(&self, query: &[f64], k: usize, exclude: Option<CandidateId>) -> Result<(), MiningError> {
        if query.len() != self.dimension {
            return Err(MiningError::DimensionMismatch { expected: self.dimension, found: query.len() });
        }
        let available = self.rows.len() - usize::from(exclude.is_some_and(|e| e.index() < self.rows.len()));
        if k == 0 || k > available {
            return Err(MiningError::Config(format!("k = {k} outside 1..={available}")));
        }
        Ok(())
    }
}

/// Embeds every catalog entry.
pub fn build_index(catalog: &CandidateCatalog, embedder: &dyn Embedder) -> Result<EmbeddingIndex, MiningError> {
    if catalog.is_empty() {
        return Err(MiningError::EmptyCatalog);
    }
    let texts: Vec<&str> = catalog.entries().iter().map(String::as_str).collect();
    let rows = embedder.embed(&texts)?;
    if rows.len() != texts.len() {
        return Err(MiningError::Config(format!("embedder returned {} rows for {} entries", rows.len(), texts.len())));
    }
    EmbeddingIndex::from_vectors(rows)
}

/// A scored neighbour. Ordered best-first: higher cosine, then lower id.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Neighbour {
    pub id: CandidateId,
    pub cosine: f64,
}

fn rank_order(a: &Neighbour, b: &Neighbour) -> Ordering {
    b.cosine.partial_cmp(&a.cosine).unwrap_or(Ordering::Equal).then(a.id.cmp(&b.id))
}

// Heap entry whose maximum is the worst neighbour kept so far.
struct Worst(Neighbour);

impl PartialEq for Worst {
    fn eq(&self, other: &Self) -> bool {
        rank_order(&self.0, &other.0) == Ordering::Equal
    }
}

impl Eq for Worst {}

impl PartialOrd for Worst {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Worst {
    fn cmp(&self, other: &Self) -> Ordering {
        rank_order(&self.0, &other.0)
    }
}

/// The `k` rows most similar to `query`, best first, using a bounded heap.
pub fn top_k_similar(
    index: &EmbeddingIndex,
    query: &[f64],
    k: usize,
    exclude: Option<CandidateId>,
) -> Result<Vec<Neighbour>, MiningError> {
    index.check_query(query, k, exclude)?;
    let mut heap: BinaryHeap<Worst> = BinaryHeap::with_capacity(k + 1);
    for (i, row) in index.rows.iter().enumerate() {
        let id = CandidateId(i as u32);
        if Some(id) == exclude {
            continue;
        }
        let n = Neighbour { id, cosine: dot(query, row.values()) };
        if heap.len() < k {
            heap.push(Worst(n));
        } else if let Some(top) = heap.peek() {
            if rank_order(&n, &top.0) == Ordering::Less {
                heap.pop();
                heap.push(Worst(n));
            }
        }
    }
    Ok(heap.into_sorted_vec().into_iter().map(|w| w.0).collect())
}

/// Reference implementation: score everything, sort, truncate.
pub fn top_k_exhaustive(
    index: &EmbeddingIndex,
    query: &[f64],
    k: usize,
    exclude: Option<CandidateId>,
) -> Result<Vec<Neighbour>, MiningError> {
    index.check_query(query, k, exclude)?;
    let mut all: Vec<Neighbour> = index
        .rows
        .iter()
        .enumerate()
        .map(|(i, row)| Neighbour { id: CandidateId(i as u32), cosine: dot(query, row.values()) })
        .filter(|n| Some(n.id) != exclude)
        .collect();
    all.sort_by(rank_order);
    all.truncate(k);
    Ok(all)
}
