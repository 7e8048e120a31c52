use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use relpipe::augment::{augment_by_translation, AugmentPlan, SourcePolicy};
use relpipe::corpus::{Label, Language, Origin, RelevanceRecord, Task};
use relpipe::providers::mock::MockTranslator;

fn lang(c: &str) -> Language {
    Language::new(c).unwrap()
}

fn arb_records() -> impl Strategy<Value = Vec<RelevanceRecord>> {
    prop::collection::vec(("[a-z]{1,8}( [a-z]{1,8}){0,2}", "[A-Z][a-z]{2,8}", any::<bool>(), 0usize..3), 1..40)
        .prop_map(|rows| {
            let langs = ["en", "fr", "ja"];
            let mut seen = BTreeSet::new();
            rows.into_iter()
                .map(|(q, c, l, li)| {
                    RelevanceRecord::original(Task::Qi, q, lang(langs[li]), c, Label::from_bool(l)).unwrap()
                })
                .filter(|r| seen.insert(r.id.clone()))
                .collect()
        })
}

fn plan(quota: usize, seed: u64, policy: SourcePolicy) -> AugmentPlan {
    AugmentPlan {
        task: Task::Qi,
        target_languages: ["de", "pl"].iter().map(|c| lang(c)).collect(),
        per_language_quota: quota,
        source_policy: policy,
        master_seed: seed,
    }
}

proptest! {
    #[test]
    fn translation_keeps_label_and_candidate(records in arb_records(), quota in 1usize..50, seed in any::<u64>()) {
        let out = augment_by_translation(&records, &plan(quota, seed, SourcePolicy::Uniform), &MockTranslator, 4).unwrap();
        let by_id: BTreeMap<&str, &RelevanceRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
        for r in &out.records {
            let src = by_id[r.source_id.as_deref().unwrap()];
            prop_assert_eq!(r.label, src.label);
            prop_assert_eq!(&r.candidate, &src.candidate);
            prop_assert_eq!(r.origin, Origin::Translated);
            prop_assert!(r.language == lang("de") || r.language == lang("pl"));
        }
        for target in ["de", "pl"] {
            let n = out.records.iter().filter(|r| r.language == lang(target)).count();
            prop_assert_eq!(n, quota.min(records.len()));
            prop_assert_eq!(out.report.produced[&lang(target)], n);
        }
    }

    #[test]
    fn same_seed_same_output(records in arb_records(), seed in any::<u64>()) {
        let p = plan(7, seed, SourcePolicy::Uniform);
        let a = augment_by_translation(&records, &p, &MockTranslator, 1).unwrap();
        let b = augment_by_translation(&records, &p, &MockTranslator, 16).unwrap();
        prop_assert_eq!(a.records, b.records);
    }

    #[test]
    fn weighted_policy_draws_only_from_weighted_languages(records in arb_records(), seed in any::<u64>()) {
        let weights: BTreeMap<Language, f64> = [(lang("en"), 3.0), (lang("fr"), 1.0)].into_iter().collect();
        let out = augment_by_translation(&records, &plan(10, seed, SourcePolicy::Weighted(weights)), &MockTranslator, 4).unwrap();
        let by_id: BTreeMap<&str, &RelevanceRecord> = records.iter().map(|r| (r.id.as_str(), r)).collect();
        for r in &out.records {
            prop_assert_ne!(&by_id[r.source_id.as_deref().unwrap()].language, &lang("ja"));
        }
    }
}

#[test]
fn different_seeds_pick_different_sources() {
    let records: Vec<RelevanceRecord> = (0..200)
        .map(|i| RelevanceRecord::original(Task::Qi, format!("q{i}"), lang("en"), format!("C{i}"), Label::Relevant).unwrap())
        .collect();
    let a = augment_by_translation(&records, &plan(20, 1, SourcePolicy::Uniform), &MockTranslator, 4).unwrap();
    let b = augment_by_translation(&records, &plan(20, 2, SourcePolicy::Uniform), &MockTranslator, 4).unwrap();
    assert_ne!(a.records, b.records);
}
