use std::collections::BTreeMap;

use proptest::prelude::*;
use relpipe::corpus::{Label, Language, Origin, Task};
use relpipe::evalreport::{
    average_f1, build_report, confusion, f1_positive, per_language_breakdown, ConfusionCounts, Judgement,
};

fn arb_counts() -> impl Strategy<Value = ConfusionCounts> {
    (0u64..200, 0u64..200, 0u64..200, 0u64..200).prop_map(|(tp, fp, fn_, tn)| ConfusionCounts { tp, fp, fn_, tn })
}

proptest! {
    #[test]
    fn f1_is_a_harmonic_mean(c in arb_counts()) {
        let m = f1_positive(&c);
        prop_assert!(m.f1 <= 2.0 * m.precision.min(m.recall) + 1e-12);
        prop_assert!(m.f1 <= m.precision.max(m.recall) + 1e-12);
        for x in [m.precision, m.recall, m.f1] {
            prop_assert!((0.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn metrics_ignore_order(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..100), seed in any::<u64>()) {
        let preds: Vec<Label> = pairs.iter().map(|p| Label::from_bool(p.0)).collect();
        let labels: Vec<Label> = pairs.iter().map(|p| Label::from_bool(p.1)).collect();
        let mut order: Vec<usize> = (0..pairs.len()).collect();
        // deterministic shuffle keyed by seed
        order.sort_by_key(|i| (*i as u64).wrapping_mul(seed | 1).rotate_left(17));
        let p2: Vec<Label> = order.iter().map(|&i| preds[i]).collect();
        let l2: Vec<Label> = order.iter().map(|&i| labels[i]).collect();
        prop_assert_eq!(confusion(&preds, &labels).unwrap(), confusion(&p2, &l2).unwrap());
        prop_assert_eq!(confusion(&preds, &labels).unwrap().total(), pairs.len() as u64);
    }

    #[test]
    fn average_is_symmetric_and_bounded(a in 0f64..=1.0, b in 0f64..=1.0) {
        prop_assert_eq!(average_f1(a, b), average_f1(b, a));
        prop_assert!(average_f1(a, b) >= a.min(b) && average_f1(a, b) <= a.max(b));
    }

    #[test]
    fn overall_is_sum_of_languages(js in prop::collection::vec((0usize..3, any::<bool>(), any::<bool>()), 1..120)) {
        let langs = ["en", "de", "ja"];
        let judgements: Vec<Judgement> = js.iter().map(|&(l, label, pred)| judgement(langs[l], label, pred)).collect();
        let report = build_report(&judgements, &BTreeMap::new());
        let qc = &report.tasks[&Task::Qc];
        let mut sum = ConfusionCounts::default();
        for g in qc.per_language.values() {
            sum.merge(&g.counts);
        }
        prop_assert_eq!(sum, qc.overall.counts);
    }
}

fn judgement(lang: &str, label: bool, pred: bool) -> Judgement {
    Judgement {
        task: Task::Qc,
        language: Language::new(lang).unwrap(),
        origin: Origin::Original,
        label: Label::from_bool(label),
        pred: Label::from_bool(pred),
    }
}

#[test]
fn breakdown_examples() {
    let single: Vec<_> = [(true, true), (false, true), (true, false)].iter().map(|&(l, p)| judgement("fr", l, p)).collect();
    let report = build_report(&single, &BTreeMap::new());
    let qc = &report.tasks[&Task::Qc];
    assert_eq!(qc.per_language[&Language::new("fr").unwrap()].metrics, qc.overall.metrics);

    let mut two: Vec<_> = (0..4).map(|i| judgement("en", i % 2 == 0, i % 2 == 0)).collect();
    two.extend((0..4).map(|i| judgement("ko", i % 2 == 0, i % 2 != 0)));
    let by_lang = per_language_breakdown(&two);
    assert_eq!(by_lang[&Language::new("en").unwrap()].metrics.f1, 1.0);
    assert_eq!(by_lang[&Language::new("ko").unwrap()].metrics.f1, 0.0);
}

#[test]
fn three_language_cells_match_subset_recomputation() {
    let raw = [
        ("en", 1, 1), ("en", 1, 0), ("en", 0, 0), ("en", 0, 1), ("en", 1, 1),
        ("pl", 1, 1), ("pl", 0, 0), ("pl", 0, 0), ("pl", 1, 0),
        ("ar", 0, 1), ("ar", 0, 0), ("ar", 1, 1), ("ar", 1, 1), ("ar", 1, 0), ("ar", 0, 1),
    ];
    let js: Vec<_> = raw.iter().map(|&(l, y, p)| judgement(l, y == 1, p == 1)).collect();
    let by_lang = per_language_breakdown(&js);
    for lang in ["en", "pl", "ar"] {
        let (mut tp, mut fp, mut fneg) = (0.0, 0.0, 0.0);
        for &(l, y, p) in &raw {
            if l != lang {
                continue;
            }
            match (p, y) {
                (1, 1) => tp += 1.0,
                (1, 0) => fp += 1.0,
                (0, 1) => fneg += 1.0,
                _ => {}
            }
        }
        let f1 = 2.0 * tp / (2.0 * tp + fp + fneg);
        let got = by_lang[&Language::new(lang).unwrap()].metrics.f1;
        assert!((got - f1).abs() < 1e-12, "{lang}: {got} vs {f1}");
    }
}
