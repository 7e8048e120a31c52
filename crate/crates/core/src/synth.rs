//! Deterministic synthetic corpora for tests, demos and the packaged fixture.
//!
//! Positive queries reuse words of their candidate, negative queries are
//! written for a different candidate, so the token-overlap mock scorer
//! separates the classes reasonably but not perfectly.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use crate::corpus::{write_corpus, CorpusError, Label, Language, RelevanceRecord, Task};
use crate::hashing::{derive_seed, SplitMix64};

const TOPS: &[&str] = &[
    "Electronics", "Home", "Fashion", "Sports", "Beauty", "Toys", "Garden", "Automotive", "Books", "Grocery",
];
const MIDS: &[&str] = &[
    "Audio", "Kitchen", "Shoes", "Outdoor", "Skincare", "Games", "Tools", "Lighting", "Storage", "Accessories",
    "Office", "Pets",
];
const ADJECTIVES: &[&str] = &[
    "wireless", "leather", "bamboo", "ceramic", "portable", "waterproof", "vintage", "organic", "folding", "smart",
    "cotton", "steel", "wooden", "electric", "mini", "classic",
];
const NOUNS: &[&str] = &[
    "headphones", "boots", "lamp", "mug", "speaker", "backpack", "blender", "jacket", "tent", "brush", "charger",
    "chair", "bottle", "watch", "puzzle", "drill", "scarf", "kettle", "mat", "cable",
];
const BRANDS: &[&str] = &["Acme", "Norda", "Kumo", "Vela", "Orbit", "Lumen", "Tessa", "Brio"];
const NOISE: &[&str] = &[
    "cheap", "best", "new", "sale", "gift", "large", "small", "black", "red", "blue", "set", "pro", "kids",
];

/// A short function word per language so each language has its own surface.
fn marker(language: &Language) -> String {
    let word = match language.as_str() {
        "en" => "for",
        "fr" => "pour",
        "es" => "para",
        "ko" => "용",
        "pt" => "pro",
        "ja" => "用の",
        "de" => "für",
        "it" => "per",
        "pl" => "dla",
        "ar" => "لـ",
        "th" => "สำหรับ",
        "vi" => "cho",
        "id" => "untuk",
        other => return format!("[{other}]"),
    };
    word.to_string()
}

fn pick<'a>(rng: &mut SplitMix64, items: &[&'a str]) -> &'a str {
    items[rng.below(items.len() as u64) as usize]
}

/// `size` distinct candidates: category paths for QC, item titles for QI.
pub fn synth_catalog(task: Task, size: usize, seed: u64) -> Vec<String> {
    let mut rng = SplitMix64::new(derive_seed(seed, &["catalog", task.as_str()]));
    let mut seen = HashSet::with_capacity(size);
    let mut out = Vec::with_capacity(size);
    let mut model = 100;
    while out.len() < size {
        let leaf = format!("{} {}", capitalize(pick(&mut rng, ADJECTIVES)), capitalize(pick(&mut rng, NOUNS)));
        let entry = match task {
            Task::Qc => format!("{} > {} > {leaf}", pick(&mut rng, TOPS), pick(&mut rng, MIDS)),
            Task::Qi => {
                model += 1 + rng.below(7) as usize;
                format!("{} {leaf} {}{model}", pick(&mut rng, BRANDS), (b'A' + rng.below(26) as u8) as char)
            }
        };
        if seen.insert(entry.clone()) {
            out.push(entry);
        }
    }
    out
}

fn capitalize(word: &str) -> String {
    let mut chars = word.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// A query someone looking for `candidate` might type.
fn query_for(candidate: &str, task: Task, language: &Language, rng: &mut SplitMix64) -> String {
    let words: Vec<String> = candidate.split_whitespace().filter(|w| *w != ">").map(str::to_lowercase).collect();
    // the last two words of a path are the leaf; titles carry it at positions 1..3
    let leaf: &[String] = match task {
        Task::Qc => &words[words.len().saturating_sub(2)..],
        Task::Qi => &words[1.min(words.len())..3.min(words.len())],
    };
    let mut query: Vec<String> = Vec::with_capacity(5);
    if rng.below(3) == 0 && !words.is_empty() {
        query.push(words[rng.below(words.len() as u64) as usize].clone());
    }
    query.extend(leaf.iter().cloned());
    query.push(pick(rng, NOISE).to_string());
    query.push(marker(language));
    query.join(" ")
}

/// One (task, split) slice of a synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub task: Task,
    pub split: String,
    pub languages: Vec<(Language, usize)>,
    /// Share of records labelled relevant before noise is applied.
    pub positive_share: f64,
    /// Share of records whose label is flipped after generation.
    pub flip_rate: f64,
    pub seed: u64,
}

/// Generates the records of `spec` against `catalog`. Every record is
/// distinct and the output is a pure function of the arguments.
pub fn synth_records(spec: &SynthSpec, catalog: &[String]) -> Vec<RelevanceRecord> {
    assert!(catalog.len() >= 2, "synthetic corpora need at least two candidates");
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (language, count) in &spec.languages {
        let mut rng =
            SplitMix64::new(derive_seed(spec.seed, &["records", spec.task.as_str(), &spec.split, language.as_str()]));
        let mut produced = 0;
        while produced < *count {
            let target = &catalog[rng.below(catalog.len() as u64) as usize];
            let relevant = rng.next_f64() < spec.positive_share;
            let query = if relevant {
                query_for(target, spec.task, language, &mut rng)
            } else {
                let other = loop {
                    let c = &catalog[rng.below(catalog.len() as u64) as usize];
                    if c != target {
                        break c;
                    }
                };
                query_for(other, spec.task, language, &mut rng)
            };
            let flip = rng.next_f64() < spec.flip_rate;
            let label = Label::from_bool(relevant != flip);
            let record = RelevanceRecord::original(spec.task, query, language.clone(), target.clone(), label)
                .expect("generated fields are non-empty");
            if seen.insert(record.id.clone()) {
                out.push(record);
                produced += 1;
            }
        }
    }
    out
}

pub const FIXTURE_SEED: u64 = 20_240_601;
pub const FIXTURE_TRAIN_LANGUAGES: &[&str] = &["en", "fr", "es", "ko", "pt", "ja"];
pub const FIXTURE_DEV_LANGUAGES: &[&str] = &["en", "fr", "es", "ko", "pt", "ja", "de", "it", "pl", "ar"];

/// The packaged QC fixture: catalog, train split and dev split.
pub struct Fixture {
    pub catalog: Vec<String>,
    pub train: Vec<RelevanceRecord>,
    pub dev: Vec<RelevanceRecord>,
}

pub fn fixture() -> Fixture {
    let lang = |c: &&str| Language::new(c).expect("static code");
    let catalog = synth_catalog(Task::Qc, 160, FIXTURE_SEED);
    let train = synth_records(
        &SynthSpec {
            task: Task::Qc,
            split: "train".into(),
            languages: FIXTURE_TRAIN_LANGUAGES.iter().map(|c| (lang(c), 40)).collect(),
            positive_share: 0.35,
            flip_rate: 0.04,
            seed: FIXTURE_SEED,
        },
        &catalog,
    );
    let dev = synth_records(
        &SynthSpec {
            task: Task::Qc,
            split: "dev".into(),
            languages: FIXTURE_DEV_LANGUAGES.iter().map(|c| (lang(c), 20)).collect(),
            positive_share: 0.4,
            flip_rate: 0.0,
            seed: FIXTURE_SEED,
        },
        &catalog,
    );
    Fixture { catalog, train, dev }
}

/// Declarative pipeline config for the packaged fixture.
pub const FIXTURE_PIPELINE_TOML: &str = r#"# Pipeline over the packaged synthetic QC corpus, mock providers only.
task = "qc"
seed = 42

[inputs]
train = "train.jsonl"
dev = "dev.jsonl"
catalog = "categories.txt"

[output]
dir = "out"

[stages]
augment = true
negatives = true
filter = true
threshold = true

[augment]
quota = 30

[negatives]
k_min = 5
k_max = 20
ratio = 1.0

[filter]
tau = 0.9
action = "remove"

[calibrate]
grid_step = 0.01

[providers]
kind = "mock"
"#;

/// Writes the fixture files into `dir`; returns the pipeline config path.
pub fn write_fixture(dir: &Path) -> Result<PathBuf, CorpusError> {
    let f = fixture();
    write_corpus(&dir.join("train.jsonl"), &f.train)?;
    write_corpus(&dir.join("dev.jsonl"), &f.dev)?;
    let io_err = |path: PathBuf| move |source| CorpusError::Io { path, source };
    let catalog_path = dir.join("categories.txt");
    std::fs::write(&catalog_path, f.catalog.join("\n") + "\n").map_err(io_err(catalog_path.clone()))?;
    let config = dir.join("pipeline.toml");
    std::fs::write(&config, FIXTURE_PIPELINE_TOML).map_err(io_err(config.clone()))?;
    Ok(config)
}

/// One (task, split) row: per-language record counts.
pub type LayoutRow = (Task, &'static str, Vec<(&'static str, usize)>);

/// Record counts per (task, split, language) of the competition corpus.
pub fn competition_layout() -> Vec<LayoutRow> {
    const QC_TRAIN: &[&str] = &["en", "fr", "es", "ko", "pt", "ja"];
    const QC_EVAL: &[&str] = &["en", "fr", "es", "ko", "pt", "ja", "de", "it", "pl", "ar"];
    const QI_ALL: &[&str] = &["en", "fr", "es", "ko", "pt", "ja", "de", "it", "pl", "ar", "th", "vi", "id"];
    let each = |langs: &[&'static str], n: usize| langs.iter().map(|l| (*l, n)).collect::<Vec<_>>();
    let qi_train = vec![("en", 40_000), ("fr", 40_000), ("es", 40_000), ("ko", 45_000), ("pt", 40_000), ("ja", 45_000), ("th", 40_000)];
    let mut qi_dev = vec![("en", 10_000)];
    qi_dev.extend(each(&QI_ALL[1..], 5_000));
    vec![
        (Task::Qc, "train", each(QC_TRAIN, 50_000)),
        (Task::Qc, "dev", each(QC_EVAL, 10_000)),
        (Task::Qc, "test", each(QC_EVAL, 10_000)),
        (Task::Qi, "train", qi_train),
        (Task::Qi, "dev", qi_dev),
        (Task::Qi, "test", each(QI_ALL, 10_000)),
    ]
}

/// Writes a corpus with exactly the [`competition_layout`] counts (minimal record
/// bodies, half of each cell relevant) plus a corpus manifest listing the
/// split files. Returns the manifest path.
pub fn write_competition_corpus(dir: &Path) -> Result<PathBuf, CorpusError> {
    use std::io::Write;
    let mut manifest = String::new();
    for (task, split, cells) in competition_layout() {
        let name = format!("{task}_{split}.jsonl");
        let path = dir.join(&name);
        let io_err = |source| CorpusError::Io { path: path.clone(), source };
        let file = std::fs::File::create(&path).map_err(io_err)?;
        let mut w = std::io::BufWriter::new(file);
        for (lang, count) in cells {
            for i in 0..count {
                writeln!(
                    w,
                    r#"{{"task":"{task}","query":"q {lang} {i}","language":"{lang}","candidate":"c {}","label":{}}}"#,
                    i % 97,
                    i % 2
                )
                .map_err(io_err)?;
            }
        }
        w.flush().map_err(io_err)?;
        manifest.push_str(&format!("[[splits]]\ntask = \"{task}\"\nsplit = \"{split}\"\npath = \"{name}\"\n\n"));
    }
    let path = dir.join("corpus.toml");
    std::fs::write(&path, manifest).map_err(|source| CorpusError::Io { path: path.clone(), source })?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::mock::MockScorer;

    #[test]
    fn catalog_is_distinct_and_deterministic() {
        let a = synth_catalog(Task::Qc, 200, 1);
        assert_eq!(a, synth_catalog(Task::Qc, 200, 1));
        assert_eq!(a.iter().collect::<HashSet<_>>().len(), 200);
        assert!(a[0].contains(" > "));
        let qi = synth_catalog(Task::Qi, 50, 1);
        assert_eq!(qi.iter().collect::<HashSet<_>>().len(), 50);
    }

    #[test]
    fn records_respect_counts() {
        let catalog = synth_catalog(Task::Qi, 50, 3);
        let spec = SynthSpec {
            task: Task::Qi,
            split: "train".into(),
            languages: vec![(Language::new("th").unwrap(), 30), (Language::new("en").unwrap(), 10)],
            positive_share: 0.5,
            flip_rate: 0.0,
            seed: 3,
        };
        let recs = synth_records(&spec, &catalog);
        assert_eq!(recs.len(), 40);
        assert_eq!(recs, synth_records(&spec, &catalog));
        assert_eq!(recs.iter().filter(|r| r.language.as_str() == "th").count(), 30);
    }

    #[test]
    fn positives_overlap_more_than_negatives() {
        let f = fixture();
        let mean = |label: Label| {
            let xs: Vec<f64> = f
                .dev
                .iter()
                .filter(|r| r.label == label)
                .map(|r| MockScorer::jaccard(&r.query, &r.candidate))
                .collect();
            xs.iter().sum::<f64>() / xs.len() as f64
        };
        assert!(mean(Label::Relevant) > mean(Label::Irrelevant) + 0.1);
    }

    #[test]
    fn competition_totals() {
        let layout = competition_layout();
        let total: usize = layout.iter().flat_map(|(_, _, c)| c.iter().map(|(_, n)| n)).sum();
        assert_eq!(total, 300_000 + 200_000 + 290_000 + 70_000 + 130_000);
    }
}
