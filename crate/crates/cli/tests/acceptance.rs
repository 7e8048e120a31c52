//! Acceptance checks 1-10. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relpipe::augment::{augment_by_translation, AugmentPlan, SourcePolicy};
use relpipe::corpus::{Label, Language, Origin, RelevanceRecord, Task};
use relpipe::evalreport::{
    average_f1, build_report, confusion, display_metric, f1_positive, ConfusionCounts, Judgement,
};
use relpipe::negmine::{
    build_index, mine_hard_negatives, top_k_similar, CandidateCatalog, CandidateId, EmbeddingIndex, ExclusionSet,
    NegativeMiningConfig, QueryMode,
};
use relpipe::pipeline::{Ledger, RunManifest};
use relpipe::providers::{EmbeddingVector, MockEmbedder, MockScorer, MockTranslator, ScorePair};
use relpipe::scoring::{calibrate_threshold, normalize_yes, score_records, threshold_grid};
use relpipe::selfcheck::{validate_corpus, FilterAction, FilterConfig};
use relpipe::synth::{fixture, synth_catalog, synth_records, write_competition_corpus, SynthSpec};

type Outcome = Result<(), String>;
type Check = (&'static str, fn() -> Outcome);

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        let holds: bool = $cond;
        if !holds {
            return Err(format!($($msg)+));
        }
    };
}

fn within(start: Instant, budget: Duration) -> Outcome {
    let elapsed = start.elapsed();
    check!(elapsed <= budget, "took {elapsed:.2?}, budget {budget:?}");
    Ok(())
}

fn lang(code: &str) -> Language {
    Language::new(code).unwrap()
}

fn c1_average_f1() -> Outcome {
    let a = average_f1(0.8965, 0.8897);
    check!(display_metric(a) == "0.8931", "average_f1(0.8965, 0.8897) shows {}", display_metric(a));
    check!((a - 0.8931).abs() < 1e-12, "average_f1(0.8965, 0.8897) = {a}");
    let b = average_f1(0.8896, 0.8833);
    check!(display_metric(b) == "0.8865", "average_f1(0.8896, 0.8833) shows {}", display_metric(b));
    Ok(())
}

fn p_yes(logp_yes: f64, logp_no: f64) -> f64 {
    normalize_yes(ScorePair { logp_yes, logp_no }).unwrap()
}

fn c2_normalization() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for i in 0..10_000 {
        // mix of tight and very wide ranges
        let span = if i % 2 == 0 { 30.0 } else { 1000.0 };
        let a: f64 = rng.gen_range(-span..span);
        let b: f64 = rng.gen_range(-span..span);
        let c: f64 = rng.gen_range(-100.0..100.0);
        let (p, q) = (p_yes(a, b), p_yes(b, a));
        check!((p + q - 1.0).abs() <= 1e-12, "p_yes + p_no = {} for ({a}, {b})", p + q);
        let shifted = p_yes(a + c, b + c);
        check!((shifted - p).abs() <= 1e-12, "shift by {c} moved ({a}, {b}) from {p} to {shifted}");
        check!(p_yes(a, a) == 0.5, "equal inputs {a} gave {}", p_yes(a, a));
    }
    for (a, b) in [(1000.0, -1000.0), (-1000.0, 1000.0), (1000.0, 1000.0), (-1000.0, -1000.0), (0.0, -1000.0)] {
        let p = p_yes(a, b);
        check!(p.is_finite() && (0.0..=1.0).contains(&p), "({a}, {b}) gave {p}");
    }
    within(start, Duration::from_secs(1))
}

/// Plain sweep over t = i/100 with its own counting and F1; first best wins.
fn brute_force_sweep(data: &[(f64, bool)]) -> (f64, f64) {
    let mut best = (f64::NAN, -1.0);
    for i in 0..=100u32 {
        let t = i as f64 / 100.0;
        let (mut tp, mut fp, mut fneg) = (0u64, 0u64, 0u64);
        for &(p, relevant) in data {
            match (p >= t, relevant) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                (false, false) => {}
            }
        }
        let precision = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let recall = if tp + fneg == 0 { 0.0 } else { tp as f64 / (tp + fneg) as f64 };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        if f1 > best.1 {
            best = (t, f1);
        }
    }
    best
}

fn c3_calibration() -> Outcome {
    let start = Instant::now();
    let catalog = synth_catalog(Task::Qc, 300, 3);
    let spec = SynthSpec {
        task: Task::Qc,
        split: "dev".into(),
        languages: ["en", "fr", "es", "ko", "de"].iter().map(|l| (lang(l), 200)).collect(),
        positive_share: 0.4,
        flip_rate: 0.1,
        seed: 3,
    };
    let records = synth_records(&spec, &catalog);
    check!(records.len() == 1000, "fixture has {} records", records.len());
    let scored: Vec<_> =
        score_records(&records, &MockScorer, 16).into_iter().collect::<Result<_, _>>().map_err(|e| e.to_string())?;
    let result = calibrate_threshold(&scored, 0.01).map_err(|e| e.to_string())?;
    let data: Vec<(f64, bool)> = scored.iter().map(|s| (s.p_yes, s.label.unwrap().is_relevant())).collect();
    let (t, f1) = brute_force_sweep(&data);
    check!(
        (result.best_threshold, result.best_f1) == (t, f1),
        "sweep gave ({}, {}), brute force ({t}, {f1})",
        result.best_threshold,
        result.best_f1
    );
    let grid = threshold_grid(0.01).map_err(|e| e.to_string())?;
    check!(grid.contains(&0.4) && grid.contains(&0.2), "0.4 or 0.2 missing from the grid");
    within(start, Duration::from_secs(5))
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / norm).collect()
}

fn full_sort(rows: &[Vec<f64>], query: &[f64], exclude: Option<usize>) -> Vec<u32> {
    let mut all: Vec<(f64, u32)> = rows
        .iter()
        .enumerate()
        .filter(|(i, _)| Some(*i) != exclude)
        .map(|(i, r)| (r.iter().zip(query).map(|(a, b)| a * b).sum(), i as u32))
        .collect();
    all.sort_by(|x, y| y.0.partial_cmp(&x.0).unwrap().then(x.1.cmp(&y.1)));
    all.into_iter().map(|x| x.1).collect()
}

fn c4_top_k() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for catalog in 0..20 {
        let n = rng.gen_range(51..=2000);
        let rows: Vec<Vec<f64>> = (0..n).map(|_| unit(&mut rng, 64)).collect();
        let vectors = rows.iter().map(|r| EmbeddingVector::normalized(r.clone()).unwrap()).collect();
        let index = EmbeddingIndex::from_vectors(vectors).map_err(|e| e.to_string())?;
        let self_row = rng.gen_range(0..n);
        let queries = [(unit(&mut rng, 64), None), (rows[self_row].clone(), Some(self_row))];
        for (query, exclude) in &queries {
            let oracle = full_sort(&rows, query, *exclude);
            let available = oracle.len();
            for k in [1, 20, 50, n - 1] {
                if k > available {
                    continue;
                }
                let got: Vec<u32> = top_k_similar(&index, query, k, exclude.map(|i| CandidateId(i as u32)))
                    .map_err(|e| e.to_string())?
                    .iter()
                    .map(|nb| nb.id.0)
                    .collect();
                check!(got == oracle[..k], "catalog {catalog} (N={n}), k={k}, exclude={exclude:?}: mismatch");
            }
        }
    }
    within(start, Duration::from_secs(30))
}

fn c5_negative_mining() -> Outcome {
    let start = Instant::now();
    let entries = synth_catalog(Task::Qc, 2_000, 5);
    let spec = SynthSpec {
        task: Task::Qc,
        split: "train".into(),
        languages: ["en", "fr", "es", "ko", "pt"].iter().map(|l| (lang(l), 1_000)).collect(),
        positive_share: 1.0,
        flip_rate: 0.0,
        seed: 5,
    };
    let positives = synth_records(&spec, &entries);
    check!(positives.len() == 5_000, "fixture has {} positives", positives.len());
    let catalog = CandidateCatalog::new(Task::Qc, entries).map_err(|e| e.to_string())?;
    let index = build_index(&catalog, &MockEmbedder::default()).map_err(|e| e.to_string())?;
    let exclusions = ExclusionSet::from_records(&positives);
    let config = NegativeMiningConfig { master_seed: 55, query_mode: QueryMode::SameLanguage, ..Default::default() };
    let mine = || {
        mine_hard_negatives(&positives, &catalog, &index, None, &exclusions, &config, 16).map_err(|e| e.to_string())
    };
    let first = mine()?;
    let second = mine()?;

    let known: HashSet<(&str, &str)> = positives.iter().map(|p| (p.query.as_str(), p.candidate.as_str())).collect();
    let rows: Vec<Vec<f64>> = (0..catalog.len()).map(|i| index.row(CandidateId(i as u32)).values().to_vec()).collect();
    let mut neighbourhoods: HashMap<CandidateId, Vec<u32>> = HashMap::new();
    for (r, t) in first.records.iter().zip(&first.trace) {
        check!(r.label == Label::Irrelevant, "{} has label {:?}", r.id, r.label);
        check!(r.id == t.record_id, "trace out of step at {}", r.id);
        check!((config.k_min..=config.k_max).contains(&t.k), "{}: K = {} out of range", r.id, t.k);
        let ranked = neighbourhoods
            .entry(t.source_candidate)
            .or_insert_with(|| full_sort(&rows, &rows[t.source_candidate.index()], Some(t.source_candidate.index())));
        let chosen = catalog.lookup(&r.candidate).ok_or_else(|| format!("{}: candidate not in catalog", r.id))?;
        check!(ranked[..t.k].contains(&chosen.0), "{}: candidate outside the recomputed top-{}", r.id, t.k);
        check!(!known.contains(&(r.query.as_str(), r.candidate.as_str())), "{} is a known positive pair", r.id);
    }
    let skipped = first.report.exhausted.len() + first.report.translation_failures.len();
    check!(
        first.records.len() + skipped == positives.len(),
        "{} mined + {skipped} skipped != {} positives",
        first.records.len(),
        positives.len()
    );
    let bytes = |o: &relpipe::negmine::MiningOutcome| serde_json::to_vec(&(&o.records, &o.trace)).unwrap();
    check!(bytes(&first) == bytes(&second), "two runs with the same seed differ");
    within(start, Duration::from_secs(60))
}

fn c6_augmentation() -> Outcome {
    let start = Instant::now();
    let train = fixture().train;
    let languages: BTreeSet<&str> = train.iter().map(|r| r.language.as_str()).collect();
    check!(languages.len() == 6, "fixture has {} languages", languages.len());
    let targets: BTreeSet<Language> = ["de", "it", "pl", "ar"].iter().map(|l| lang(l)).collect();
    let quota = 30;
    let plan = AugmentPlan {
        task: Task::Qc,
        target_languages: targets.clone(),
        per_language_quota: quota,
        source_policy: SourcePolicy::Uniform,
        master_seed: 6,
    };
    let out = augment_by_translation(&train, &plan, &MockTranslator, 16).map_err(|e| e.to_string())?;
    let by_id: HashMap<&str, &RelevanceRecord> = train.iter().map(|r| (r.id.as_str(), r)).collect();
    for target in &targets {
        let n = out.records.iter().filter(|r| &r.language == target && r.origin == Origin::Translated).count();
        check!(n == quota, "{target}: {n} translated records, expected {quota}");
    }
    for r in &out.records {
        let source = r.source_id.as_deref().and_then(|id| by_id.get(id)).ok_or_else(|| format!("{}: no source", r.id))?;
        check!(r.candidate.as_bytes() == source.candidate.as_bytes(), "{}: candidate changed", r.id);
        check!(r.label == source.label, "{}: label changed", r.id);
    }
    within(start, Duration::from_secs(10))
}

fn c7_filter() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut records = Vec::new();
    let mut flipped = BTreeSet::new();
    let word = |i: usize, j: usize| format!("w{i}x{j}");
    for i in 0..1000 {
        let candidate: Vec<String> = (0..12).map(|j| word(i, j)).collect();
        let truth = rng.gen_bool(0.5);
        let is_flipped = i % 10 == 0;
        // overlap sets the mock's p(yes): 12/12 = 1, 11/12 ~ 0.92, 9/12 = 0.75, 0
        let shared = match (truth, is_flipped, i % 20) {
            (true, true, 0) => 11,
            (true, true, _) => 12,
            (false, true, _) => 0,
            (true, false, _) if i % 3 == 0 => 9,
            (true, false, _) => 12,
            (false, false, _) => 0,
        };
        let mut query: Vec<String> = candidate[..shared].to_vec();
        if query.is_empty() {
            query.push(format!("other{i}"));
        }
        let label = Label::from_bool(truth ^ is_flipped);
        let r = RelevanceRecord::original(Task::Qi, query.join(" "), lang("en"), candidate.join(" "), label)
            .map_err(|e| e.to_string())?;
        if is_flipped {
            flipped.insert(r.id.clone());
        }
        records.push(r);
    }
    check!(flipped.len() == 100, "{} flipped", flipped.len());
    let removed = |tau: f64| -> Result<BTreeSet<String>, String> {
        let config = FilterConfig { tau, action: FilterAction::Remove };
        let out = validate_corpus(&records, &MockScorer, &config, 16).map_err(|e| e.to_string())?;
        Ok(out.verdicts.into_iter().filter(|v| v.removed).map(|v| v.id).collect())
    };
    let at_90 = removed(0.9)?;
    let at_95 = removed(0.95)?;
    check!(at_90 == flipped, "removed {} at tau 0.9, {} flipped", at_90.len(), flipped.len());
    check!(at_95.is_subset(&at_90), "removed(0.95) is not a subset of removed(0.9)");
    within(start, Duration::from_secs(10))
}

fn c8_f1_conventions() -> Outcome {
    let m = f1_positive(&ConfusionCounts { tp: 3, fp: 1, fn_: 1, tn: 0 });
    check!(m.f1 == 0.75 && m.precision == 0.75 && m.recall == 0.75, "tp=3,fp=1,fn=1 gave {m:?}");
    let z = f1_positive(&ConfusionCounts::default());
    check!(z.f1 == 0.0 && z.degenerate.f1 && z.degenerate.precision && z.degenerate.recall, "all-zero gave {z:?}");

    // hand-computed: en tp2 fp1 fn1 tn1, pl tp1 fp0 fn1 tn2, ar tp2 fp2 fn1 tn1
    let rows = [
        ("en", 1, 1), ("en", 1, 1), ("en", 0, 1), ("en", 1, 0), ("en", 0, 0),
        ("pl", 1, 1), ("pl", 1, 0), ("pl", 0, 0), ("pl", 0, 0),
        ("ar", 1, 1), ("ar", 1, 1), ("ar", 0, 1), ("ar", 0, 1), ("ar", 1, 0), ("ar", 0, 0),
    ];
    let judgements: Vec<Judgement> = rows
        .iter()
        .map(|&(l, y, p)| Judgement {
            task: Task::Qc,
            language: lang(l),
            origin: Origin::Original,
            label: Label::from_bool(y == 1),
            pred: Label::from_bool(p == 1),
        })
        .collect();
    let report = build_report(&judgements, &BTreeMap::new());
    let qc = &report.tasks[&Task::Qc];
    let expect = [("en", 2.0 / 3.0), ("pl", 2.0 / 3.0), ("ar", 4.0 / 7.0)];
    for (l, f1) in expect {
        let got = qc.per_language[&lang(l)].metrics.f1;
        check!((got - f1).abs() < 1e-12, "{l}: f1 {got}, expected {f1}");
    }
    let mut summed = ConfusionCounts::default();
    for g in qc.per_language.values() {
        summed.merge(&g.counts);
    }
    check!(summed == qc.overall.counts, "overall {:?} != summed {summed:?}", qc.overall.counts);
    check!(summed == ConfusionCounts { tp: 5, fp: 3, fn_: 3, tn: 4 }, "summed counts {summed:?}");
    let preds: Vec<Label> = judgements.iter().map(|j| j.pred).collect();
    let labels: Vec<Label> = judgements.iter().map(|j| j.label).collect();
    check!(confusion(&preds, &labels).map_err(|e| e.to_string())? == summed, "flat confusion disagrees");
    check!((qc.overall.metrics.f1 - 0.625).abs() < 1e-12, "overall f1 {}", qc.overall.metrics.f1);
    Ok(())
}

fn relpipe_bin(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_relpipe"))
        .args(args)
        .env_remove("PROVIDER_TRANSLATE_URL")
        .env_remove("PROVIDER_EMBED_URL")
        .env_remove("PROVIDER_SCORE_URL")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("relpipe {args:?} failed: {}", String::from_utf8_lossy(&out.stderr)));
    }
    String::from_utf8(out.stdout).map_err(|e| e.to_string())
}

fn count_lines(path: &Path) -> Result<usize, String> {
    Ok(std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?.lines().count())
}

fn c9_reproducibility() -> Outcome {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/synthetic/pipeline.toml");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = dir.path().join("run");
    let (config, out_s) = (config.to_str().unwrap(), out.to_str().unwrap());
    let mut manifests = Vec::new();
    for _ in 0..2 {
        relpipe_bin(&["--config", config, "run", "--out", out_s])?;
        let bytes = std::fs::read(out.join("manifest.json")).map_err(|e| e.to_string())?;
        manifests.push(bytes);
    }
    check!(manifests[0] == manifests[1], "manifest.json differs between runs");
    let m = RunManifest::load(&out.join("manifest.json")).map_err(|e| e.to_string())?;
    check!(m.stage_order.len() == 7, "stages: {:?}", m.stage_order);
    // a second output directory must produce the same artifact digests
    let other = dir.path().join("again");
    relpipe_bin(&["--config", config, "run", "--out", other.to_str().unwrap()])?;
    let m2 = RunManifest::load(&other.join("manifest.json")).map_err(|e| e.to_string())?;
    check!(m.stage_digests() == m2.stage_digests(), "stage digests differ across output directories");

    // ledger recomputed from the artifacts themselves
    let train = Path::new(config).parent().unwrap().join("train.jsonl");
    let input = count_lines(&train)?;
    let augmented = count_lines(&out.join("augment/records.jsonl"))?;
    let negatives = count_lines(&out.join("negatives/records.jsonl"))?;
    let verdicts = std::fs::read_to_string(out.join("filter/verdicts.jsonl")).map_err(|e| e.to_string())?;
    let filtered = verdicts.lines().filter(|l| l.contains("\"removed\":true")).count();
    let output = count_lines(&out.join("train.corpus.jsonl"))?;
    let filter_input = count_lines(&out.join("negatives/corpus.jsonl"))?;
    check!(filter_input - filtered == output, "filter: {filter_input} - {filtered} != {output}");
    let deduped = input + augmented + negatives - filtered - output;
    let recomputed = Ledger { input, augmented, negatives, filtered, deduped, output };
    check!(m.ledger == recomputed, "manifest ledger {:?} != artifacts {recomputed:?}", m.ledger);
    check!(m.ledger.balances(), "ledger does not balance");
    Ok(())
}

fn c10_stats() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let manifest = write_competition_corpus(dir.path()).map_err(|e| e.to_string())?;
    let json: serde_json::Value =
        serde_json::from_str(&relpipe_bin(&["stats", "--json", "--manifest", manifest.to_str().unwrap()])?)
            .map_err(|e| e.to_string())?;
    // every cell of the competition corpus, in thousands
    let columns = ["en", "fr", "es", "ko", "pt", "ja", "de", "it", "pl", "ar", "th", "vi", "id"];
    let table: [(&str, &str, [u32; 13]); 6] = [
        ("qc", "train", [50, 50, 50, 50, 50, 50, 0, 0, 0, 0, 0, 0, 0]),
        ("qc", "dev", [10, 10, 10, 10, 10, 10, 10, 10, 10, 10, 0, 0, 0]),
        ("qc", "test", [10, 10, 10, 10, 10, 10, 10, 10, 10, 10, 0, 0, 0]),
        ("qi", "train", [40, 40, 40, 45, 40, 45, 0, 0, 0, 0, 40, 0, 0]),
        ("qi", "dev", [10, 5, 5, 5, 5, 5, 5, 5, 5, 5, 5, 5, 5]),
        ("qi", "test", [10, 10, 10, 10, 10, 10, 10, 10, 10, 10, 10, 10, 10]),
    ];
    for (task, split, cells) in table {
        for (lang, k) in columns.iter().zip(cells) {
            let got = json["cells"][task][split][lang]["total"].as_u64().unwrap_or(0);
            check!(got == k as u64 * 1000, "{task} {split} {lang}: {got}, expected {}k", k);
        }
    }
    let human = relpipe_bin(&["stats", "--manifest", manifest.to_str().unwrap()])?;
    let row = human.lines().find(|l| l.starts_with("qc    train")).ok_or("no qc train row")?;
    check!(row.split_whitespace().nth(2) == Some("50000"), "qc train row: {row}");
    println!("       stats on the competition-sized corpus took {:.2?}", start.elapsed());
    Ok(())
}

fn main() {
    let checks: [Check; 10] = [
        ("average F1 arithmetic and half-up display", c1_average_f1),
        ("two-token normalization", c2_normalization),
        ("threshold calibration vs brute force", c3_calibration),
        ("top-k equals full sort", c4_top_k),
        ("hard-negative soundness and determinism", c5_negative_mining),
        ("augmentation contract", c6_augmentation),
        ("filter exactness and monotonicity", c7_filter),
        ("F1 conventions and micro consistency", c8_f1_conventions),
        ("end-to-end reproducibility and ledger", c9_reproducibility),
        ("stats fidelity on the competition-sized corpus", c10_stats),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let result = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        match result {
            Ok(()) => println!("PASS criterion {}: {name} ({:.2?})", i + 1, start.elapsed()),
            Err(reason) => {
                failed += 1;
                println!("FAIL criterion {}: {name}: {reason}", i + 1);
            }
        }
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
