use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use relpipe::corpus::{Label, Language, Origin, Task};
use relpipe::providers::mock::MockScorer;
use relpipe::providers::ScorePair;
use relpipe::scoring::{
    calibrate_exact, calibrate_on, calibrate_threshold, decide, normalize_yes, threshold_grid, ScoredRecord,
};

fn p(a: f64, b: f64) -> f64 {
    normalize_yes(ScorePair { logp_yes: a, logp_no: b }).unwrap()
}

proptest! {
    #[test]
    fn complement_sums_to_one(a in -1e3f64..1e3, b in -1e3f64..1e3) {
        prop_assert!((p(a, b) + p(b, a) - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn shift_invariant(a in -500f64..500.0, b in -500f64..500.0, c in -500f64..500.0) {
        prop_assert!((p(a + c, b + c) - p(a, b)).abs() <= 1e-12);
    }

    #[test]
    // log-odds gap kept within 20 so the result stays resolvable below 1.0
    fn strictly_increasing_in_yes(a in -8f64..8.0, d in 1e-3f64..4.0, b in -8f64..8.0) {
        prop_assert!(p(a + d, b) > p(a, b));
    }

    #[test]
    fn decide_is_monotone(p1 in 0f64..=1.0, p2 in 0f64..=1.0, t in 0f64..=1.0) {
        let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
        prop_assert!(decide(lo, t) <= decide(hi, t));
    }

    #[test]
    fn argmax_invariant_under_increasing_transform(
        data in prop::collection::vec((0u32..=100, any::<bool>()), 1..80),
    ) {
        prop_assume!(data.iter().any(|(_, l)| *l));
        let grid = threshold_grid(0.01).unwrap();
        let pairs: Vec<(f64, Label)> = data.iter().map(|&(s, l)| (s as f64 / 100.0, Label::from_bool(l))).collect();
        let (_, best, _) = calibrate_on(&pairs, &grid).unwrap();
        // x -> x^3 + 2x is strictly increasing; apply it to scores and grid alike
        let f = |x: f64| x * x * x + 2.0 * x;
        let moved: Vec<(f64, Label)> = pairs.iter().map(|&(s, l)| (f(s), l)).collect();
        let moved_grid: Vec<f64> = grid.iter().map(|&t| f(t)).collect();
        let (_, best_moved, _) = calibrate_on(&moved, &moved_grid).unwrap();
        prop_assert_eq!(best, best_moved);
    }

    #[test]
    fn exact_agrees_with_grid_on_grid_scores(
        data in prop::collection::vec((0u32..=100, any::<bool>()), 1..60),
    ) {
        prop_assume!(data.iter().any(|(_, l)| *l));
        let grid = threshold_grid(0.01).unwrap();
        let recs: Vec<ScoredRecord> = data.iter().enumerate().map(|(i, &(s, l))| scored(i, grid[s as usize], l)).collect();
        let g = calibrate_threshold(&recs, 0.01).unwrap();
        let e = calibrate_exact(&recs).unwrap();
        prop_assert_eq!(g.best_f1, e.best_f1);
    }

    #[test]
    fn exact_never_below_grid(data in prop::collection::vec((0f64..=1.0, any::<bool>()), 1..60)) {
        prop_assume!(data.iter().any(|(_, l)| *l));
        let recs: Vec<ScoredRecord> = data.iter().enumerate().map(|(i, &(s, l))| scored(i, s, l)).collect();
        let g = calibrate_threshold(&recs, 0.01).unwrap();
        let e = calibrate_exact(&recs).unwrap();
        prop_assert!(e.best_f1 >= g.best_f1);
    }
}

fn scored(i: usize, p_yes: f64, relevant: bool) -> ScoredRecord {
    ScoredRecord {
        id: format!("r{i}"),
        task: Task::Qc,
        language: Language::new("en").unwrap(),
        origin: Origin::Original,
        label: Some(Label::from_bool(relevant)),
        logp_yes: 0.0,
        logp_no: 0.0,
        p_yes,
    }
}

/// Straightforward O(n * grid) sweep with its own F1 arithmetic.
fn brute_force(data: &[(f64, bool)], step_count: u32) -> (f64, f64) {
    let mut best = (f64::NAN, -1.0);
    for i in 0..=step_count {
        let t = i as f64 / step_count as f64;
        let (mut tp, mut fp, mut fneg) = (0u32, 0u32, 0u32);
        for &(score, label) in data {
            match (score >= t, label) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                _ => {}
            }
        }
        let prec = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let rec = if tp + fneg == 0 { 0.0 } else { tp as f64 / (tp + fneg) as f64 };
        let f1 = if prec + rec == 0.0 { 0.0 } else { 2.0 * prec * rec / (prec + rec) };
        if f1 > best.1 {
            best = (t, f1);
        }
    }
    best
}

#[test]
fn calibration_matches_brute_force_on_mock_scores() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let words = ["red", "blue", "shoes", "lamp", "steel", "mug", "cheap", "kids", "pro", "set"];
    let mut recs = Vec::new();
    let mut raw = Vec::new();
    for i in 0..200 {
        let pick = |rng: &mut ChaCha8Rng, n: usize| -> String {
            (0..n).map(|_| words[rng.gen_range(0..words.len())]).collect::<Vec<_>>().join(" ")
        };
        let q = pick(&mut rng, 3);
        let c = pick(&mut rng, 3);
        let s = MockScorer::jaccard(&q, &c);
        let relevant = rng.gen_bool((0.15 + 0.8 * s).min(1.0));
        let pair = MockScorer::pair_for_overlap(s);
        let py = normalize_yes(pair).unwrap();
        raw.push((py, relevant));
        recs.push(scored(i, py, relevant));
    }
    let c = calibrate_threshold(&recs, 0.01).unwrap();
    let (t, f1) = brute_force(&raw, 100);
    assert_eq!((c.best_threshold, c.best_f1), (t, f1));
}

#[test]
fn published_thresholds_are_grid_points() {
    let g = threshold_grid(0.01).unwrap();
    assert!(g.contains(&0.4));
    assert!(g.contains(&0.2));
}
