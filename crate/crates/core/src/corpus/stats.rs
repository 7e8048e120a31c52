use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::language::table_sort;
use super::record::{RelevanceRecord, Task};
use super::Language;

/// Record and label counts for one (task, split, language) cell.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub total: usize,
    pub positive: usize,
    pub negative: usize,
}

impl CellCounts {
    pub fn positive_ratio(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.positive as f64 / self.total as f64
        }
    }

    fn add(&mut self, other: &CellCounts) {
        self.total += other.total;
        self.positive += other.positive;
        self.negative += other.negative;
    }
}

/// Counts grouped by task, split name and language.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub cells: BTreeMap<Task, BTreeMap<String, BTreeMap<Language, CellCounts>>>,
}

/// Tallies `records` under `split_name`.
pub fn compute_stats(records: &[RelevanceRecord], split_name: &str) -> CorpusStats {
    let mut stats = CorpusStats::default();
    for r in records {
        let cell = stats
            .cells
            .entry(r.task)
            .or_default()
            .entry(split_name.to_string())
            .or_default()
            .entry(r.language.clone())
            .or_default();
        cell.total += 1;
        if r.label.is_relevant() {
            cell.positive += 1;
        } else {
            cell.negative += 1;
        }
    }
    stats
}

fn split_rank(split: &str) -> (usize, &str) {
    let rank = match split {
        "train" => 0,
        "dev" => 1,
        "test" => 2,
        _ => 3,
    };
    (rank, split)
}

impl CorpusStats {
    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn merge(&mut self, other: &CorpusStats) {
        for (task, splits) in &other.cells {
            for (split, langs) in splits {
                for (lang, counts) in langs {
                    self.cells
                        .entry(*task)
                        .or_default()
                        .entry(split.clone())
                        .or_default()
                        .entry(lang.clone())
                        .or_default()
                        .add(counts);
                }
            }
        }
    }

    pub fn cell(&self, task: Task, split: &str, language: &str) -> CellCounts {
        let Ok(language) = Language::new(language) else {
            return CellCounts::default();
        };
        self.cells
            .get(&task)
            .and_then(|s| s.get(split))
            .and_then(|l| l.get(&language))
            .copied()
            .unwrap_or_default()
    }

    /// Label balance for (task, language) summed over every split.
    pub fn balance(&self, task: Task, language: &Language) -> CellCounts {
        let mut out = CellCounts::default();
        if let Some(splits) = self.cells.get(&task) {
            for langs in splits.values() {
                if let Some(c) = langs.get(language) {
                    out.add(c);
                }
            }
        }
        out
    }

    pub fn split_total(&self, task: Task, split: &str) -> usize {
        self.cells
            .get(&task)
            .and_then(|s| s.get(split))
            .map(|l| l.values().map(|c| c.total).sum())
            .unwrap_or(0)
    }

    pub fn total(&self) -> usize {
        self.cells
            .values()
            .flat_map(|s| s.values())
            .flat_map(|l| l.values())
            .map(|c| c.total)
            .sum()
    }

    /// Languages with at least one record, across all tasks and splits.
    pub fn languages(&self) -> BTreeSet<Language> {
        self.cells
            .values()
            .flat_map(|s| s.values())
            .flat_map(|l| l.iter())
            .filter(|(_, c)| c.total > 0)
            .map(|(lang, _)| lang.clone())
            .collect()
    }

    /// Languages in statistics-table column order.
    pub fn column_languages(&self) -> Vec<Language> {
        let mut langs: Vec<Language> = self.languages().into_iter().collect();
        table_sort(&mut langs);
        langs
    }

    /// (task, split) rows in display order.
    pub fn rows(&self) -> Vec<(Task, String)> {
        let mut rows = Vec::new();
        for (task, splits) in &self.cells {
            let mut names: Vec<&String> = splits.keys().collect();
            names.sort_by_key(|s| split_rank(s));
            rows.extend(names.into_iter().map(|s| (*task, s.clone())));
        }
        rows
    }

    /// Human-readable table: one row per (task, split), languages as columns,
    /// `--` for empty cells. Followed by a label balance table.
    pub fn render_table(&self) -> String {
        let langs = self.column_languages();
        let mut out = String::new();
        let header: Vec<String> = langs.iter().map(|l| l.to_string()).collect();
        let width = 8;

        let _ = write!(out, "{:<6}{:<8}", "task", "split");
        for h in &header {
            let _ = write!(out, "{h:>width$}");
        }
        let _ = writeln!(out, "{:>width$}", "total");
        for (task, split) in self.rows() {
            let _ = write!(out, "{:<6}{:<8}", task.as_str(), split);
            for lang in &langs {
                let n = self.cell(task, &split, lang.as_str()).total;
                if n == 0 {
                    let _ = write!(out, "{:>width$}", "--");
                } else {
                    let _ = write!(out, "{n:>width$}");
                }
            }
            let _ = writeln!(out, "{:>width$}", self.split_total(task, &split));
        }

        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:<6}{:<8}{:<8}{:>10}{:>10}{:>10}",
            "task", "split", "lang", "positive", "negative", "pos_ratio"
        );
        for (task, split) in self.rows() {
            for lang in &langs {
                let c = self.cell(task, &split, lang.as_str());
                if c.total == 0 {
                    continue;
                }
                let _ = writeln!(
                    out,
                    "{:<6}{:<8}{:<8}{:>10}{:>10}{:>10.4}",
                    task.as_str(),
                    split,
                    lang,
                    c.positive,
                    c.negative,
                    c.positive_ratio()
                );
            }
        }
        out
    }

    /// Machine-readable counterpart of [`render_table`](Self::render_table):
    /// `task,split,<lang>...,total` with plain integer counts.
    pub fn to_csv(&self) -> String {
        let langs = self.column_languages();
        let mut out = String::from("task,split");
        for l in &langs {
            out.push(',');
            out.push_str(l.as_str());
        }
        out.push_str(",total\n");
        for (task, split) in self.rows() {
            let _ = write!(out, "{},{}", task.as_str(), split);
            for lang in &langs {
                let _ = write!(out, ",{}", self.cell(task, &split, lang.as_str()).total);
            }
            let _ = writeln!(out, ",{}", self.split_total(task, &split));
        }
        out
    }
}
