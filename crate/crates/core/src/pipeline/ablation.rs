use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{manifest_digest, run_with, PipelineConfig, PipelineError, RunManifest, Toggle};
use crate::evalreport::display_metric;
use crate::providers::Providers;

/// One combination of the ablation matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub label: String,
    pub toggles: BTreeMap<Toggle, bool>,
    pub manifest_sha256: String,
    pub manifest: RunManifest,
}

fn label(toggles: &BTreeMap<Toggle, bool>) -> String {
    let on: Vec<&str> = toggles.iter().filter(|(_, on)| **on).map(|(t, _)| t.as_str()).collect();
    if on.is_empty() {
        "baseline".to_string()
    } else {
        on.join("+")
    }
}

/// Runs every on/off combination of `toggles` (2^n runs, baseline first);
/// stages not listed keep their setting from `base`. Each run writes to
/// `<output>/ablation/<label>`.
pub fn ablation_matrix(
    base: &PipelineConfig,
    toggles: &[Toggle],
    providers: &Providers,
) -> Result<Vec<AblationRun>, PipelineError> {
    let mut unique = toggles.to_vec();
    unique.sort();
    unique.dedup();
    if unique.len() != toggles.len() {
        return Err(PipelineError::Config("ablation toggles must be distinct".into()));
    }
    if toggles.len() > 8 {
        return Err(PipelineError::Config("at most 8 ablation toggles".into()));
    }
    let mut runs = Vec::with_capacity(1 << toggles.len());
    for mask in 0u32..(1 << toggles.len()) {
        let mut config = base.clone();
        let mut state = BTreeMap::new();
        for (bit, toggle) in toggles.iter().enumerate() {
            let on = mask & (1 << bit) != 0;
            config.stages.set(*toggle, on);
            state.insert(*toggle, on);
        }
        let label = label(&state);
        config.output.dir = base.output.dir.join("ablation").join(&label);
        log::info!("ablation run {label}");
        let manifest = run_with(&config, providers)?;
        runs.push(AblationRun { manifest_sha256: manifest_digest(&manifest), label, toggles: state, manifest });
    }
    Ok(runs)
}

/// Comparison table: corpus size, balance and dev F1 per combination.
pub fn ablation_table(runs: &[AblationRun]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<34}{:>8}{:>8}{:>8}{:>8}{:>8}{:>8}{:>8}{:>10}{:>10}",
        "run", "input", "+aug", "+neg", "-filt", "-dup", "output", "pos%", "threshold", "dev_f1"
    );
    for run in runs {
        let l = run.manifest.ledger;
        let totals = run.manifest.output_totals();
        let pos_share = if totals.total == 0 { 0.0 } else { totals.positive as f64 / totals.total as f64 * 100.0 };
        let (threshold, f1) = match &run.manifest.metrics {
            Some(m) => (display_metric(m.threshold), display_metric(m.f1)),
            None => ("-".into(), "-".into()),
        };
        let _ = writeln!(
            out,
            "{:<34}{:>8}{:>8}{:>8}{:>8}{:>8}{:>8}{:>8.1}{:>10}{:>10}",
            run.label, l.input, l.augmented, l.negatives, l.filtered, l.deduped, l.output, pos_share, threshold, f1
        );
    }
    out
}
