//! End-to-end run: ingest, augment, mine negatives, filter, then (with a dev
//! set) score, calibrate and evaluate. Every intermediate artifact is written
//! under the output directory and recorded in `manifest.json` with its
//! SHA-256 digest.

mod ablation;
mod config;

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use ablation::{ablation_matrix, ablation_table, AblationRun};
pub use config::{
    AugmentSettings, CalibrateSettings, Inputs, NegativeSettings, OutputSettings, PipelineConfig, StageToggles, Toggle,
    UNCALIBRATED_THRESHOLD,
};

use crate::augment::{augment_by_translation, default_quota, missing_languages, AugmentPlan};
use crate::corpus::{
    compute_stats, dedup, emit_training_file, load_corpus, unresolved_lineage, write_corpus, write_json, write_jsonl,
    CellCounts, CorpusError, InstructionTemplate, Label, Language, LoadOptions, Origin, ParseMode, RelevanceRecord,
};
use crate::evalreport::{build_report, f1_positive, EvalReport, Judgement};
use crate::hashing::{derive_seed, sha256_file, sha256_hex};
use crate::negmine::{
    build_index, mine_hard_negatives, CandidateCatalog, ExclusionSet, MiningError, NegativeMiningConfig, QueryMode,
};
use crate::providers::{ProviderError, Providers};
use crate::scoring::{calibrate_exact, calibrate_threshold, decide, score_records, CalibrationMode, ScoreFailure};
use crate::selfcheck::{filter_report, validate_corpus, DEFAULT_TOP_N};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

/// Broad failure class, used by the command line for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FailureKind {
    Config,
    Data,
    Provider,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid pipeline configuration: {0}")]
    Config(String),
    #[error("stage `{stage}` failed: {message} (manifest: {})", manifest.display())]
    Stage { stage: String, kind: FailureKind, message: String, manifest: PathBuf },
}

impl PipelineError {
    pub fn kind(&self) -> FailureKind {
        match self {
            PipelineError::Config(_) => FailureKind::Config,
            PipelineError::Stage { kind, .. } => *kind,
        }
    }
}

/// A stage failure before it is tied to a manifest.
#[derive(Debug)]
struct StageFailure {
    kind: FailureKind,
    message: String,
}

impl From<CorpusError> for StageFailure {
    fn from(e: CorpusError) -> Self {
        let kind = match e {
            CorpusError::Template(_) => FailureKind::Config,
            _ => FailureKind::Data,
        };
        Self { kind, message: e.to_string() }
    }
}

impl From<ProviderError> for StageFailure {
    fn from(e: ProviderError) -> Self {
        Self { kind: FailureKind::Provider, message: e.to_string() }
    }
}

impl From<MiningError> for StageFailure {
    fn from(e: MiningError) -> Self {
        let kind = match e {
            MiningError::Provider(_) => FailureKind::Provider,
            MiningError::InvalidPositive { .. } => FailureKind::Data,
            _ => FailureKind::Config,
        };
        Self { kind, message: e.to_string() }
    }
}

impl From<ScoreFailure> for StageFailure {
    fn from(e: ScoreFailure) -> Self {
        let kind = match e {
            ScoreFailure::Provider { .. } => FailureKind::Provider,
            ScoreFailure::Scoring { .. } => FailureKind::Data,
        };
        Self { kind, message: e.to_string() }
    }
}

fn config_failure(e: impl ToString) -> StageFailure {
    StageFailure { kind: FailureKind::Config, message: e.to_string() }
}

fn data_failure(e: impl ToString) -> StageFailure {
    StageFailure { kind: FailureKind::Data, message: e.to_string() }
}

/// A file consumed or produced by a stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    pub name: String,
    /// Relative to the output directory for produced files.
    pub path: String,
    pub sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub records: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub inputs: Vec<Artifact>,
    pub outputs: Vec<Artifact>,
    pub summary: serde_json::Value,
}

impl StageRecord {
    pub fn output(&self, name: &str) -> Option<&Artifact> {
        self.outputs.iter().find(|a| a.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "state")]
pub enum RunStatus {
    Completed,
    Failed { stage: String, kind: FailureKind, error: String },
}

/// Record counts that must satisfy
/// `output = input + augmented + negatives - filtered - deduped`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ledger {
    pub input: usize,
    pub augmented: usize,
    pub negatives: usize,
    pub filtered: usize,
    pub deduped: usize,
    pub output: usize,
}

impl Ledger {
    pub fn balances(&self) -> bool {
        (self.input + self.augmented + self.negatives).checked_sub(self.filtered + self.deduped) == Some(self.output)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub threshold: f64,
    pub calibrated: bool,
    pub dev_records: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub config: PipelineConfig,
    pub stage_order: Vec<String>,
    pub stages: Vec<StageRecord>,
    pub ledger: Ledger,
    /// Label balance of the final training corpus.
    pub output_balance: BTreeMap<Language, CellCounts>,
    pub outputs: Vec<Artifact>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub metrics: Option<RunMetrics>,
    pub status: RunStatus,
}

impl RunManifest {
    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    /// Stage name and output digests, the part that must match across re-runs.
    pub fn stage_digests(&self) -> Vec<(String, Vec<(String, String)>)> {
        self.stages
            .iter()
            .map(|s| (s.name.clone(), s.outputs.iter().map(|a| (a.name.clone(), a.sha256.clone())).collect()))
            .collect()
    }

    pub fn output_totals(&self) -> CellCounts {
        let mut total = CellCounts::default();
        for c in self.output_balance.values() {
            total.total += c.total;
            total.positive += c.positive;
            total.negative += c.negative;
        }
        total
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        crate::corpus::read_json(path)
    }
}

struct Runner<'a> {
    config: &'a PipelineConfig,
    providers: &'a Providers,
    out: PathBuf,
    stages: Vec<StageRecord>,
    ledger: Ledger,
    /// Every record that has ever been part of the corpus, for lineage checks.
    ancestry: Vec<RelevanceRecord>,
    corpus: Vec<RelevanceRecord>,
}

impl<'a> Runner<'a> {
    fn path(&self, rel: &str) -> PathBuf {
        self.out.join(rel)
    }

    fn produced(&self, name: &str, rel: &str, records: Option<usize>) -> Result<Artifact, StageFailure> {
        let path = self.path(rel);
        let sha256 = sha256_file(&path).map_err(|e| data_failure(format!("{}: {e}", path.display())))?;
        Ok(Artifact { name: name.into(), path: rel.into(), sha256, records })
    }

    fn consumed(&self, name: &str, path: &Path, records: Option<usize>) -> Result<Artifact, StageFailure> {
        let sha256 = sha256_file(path).map_err(|e| data_failure(format!("{}: {e}", path.display())))?;
        Ok(Artifact { name: name.into(), path: path.display().to_string(), sha256, records })
    }

    fn write_records(&self, name: &str, rel: &str, records: &[RelevanceRecord]) -> Result<Artifact, StageFailure> {
        let n = write_corpus(&self.path(rel), records)?;
        self.produced(name, rel, Some(n))
    }

    fn write_summary<T: Serialize>(&self, rel: &str, value: &T) -> Result<(Artifact, serde_json::Value), StageFailure> {
        write_json(&self.path(rel), value)?;
        let json = serde_json::to_value(value).map_err(data_failure)?;
        Ok((self.produced("report", rel, None)?, json))
    }

    fn corpus_artifact(&self, stage: &str) -> Result<Artifact, StageFailure> {
        self.write_records("corpus", &format!("{stage}/corpus.jsonl"), &self.corpus)
    }

    fn load_options(&self) -> LoadOptions {
        let mut options = LoadOptions::for_task(self.config.task);
        if self.config.lenient {
            options.mode = ParseMode::Lenient;
        }
        options
    }

    /// Appends `added` to the corpus and removes exact duplicates.
    fn merge(&mut self, added: &[RelevanceRecord]) -> usize {
        self.ancestry.extend_from_slice(added);
        let mut all = std::mem::take(&mut self.corpus);
        all.extend_from_slice(added);
        let outcome = dedup(all);
        self.corpus = outcome.records;
        self.ledger.deduped += outcome.removed;
        outcome.removed
    }

    fn ingest(&mut self) -> Result<StageRecord, StageFailure> {
        let train = &self.config.inputs.train;
        let report = load_corpus(train, &self.load_options())?;
        let input = self.consumed("train", train, Some(report.records.len() + report.skipped.len()))?;
        self.ledger.input = report.records.len();
        let outcome = dedup(report.records);
        self.ledger.deduped += outcome.removed;
        self.ancestry = outcome.records.clone();
        self.corpus = outcome.records;
        let summary = serde_json::json!({
            "loaded": self.ledger.input,
            "skipped_lines": report.skipped,
            "duplicates_removed": outcome.removed,
            "label_conflicts": outcome.conflicts,
            "assigned_ids": report.assigned_ids,
        });
        let corpus = self.corpus_artifact("ingest")?;
        let (report, summary) = self.write_summary("ingest/report.json", &summary)?;
        Ok(StageRecord { name: "ingest".into(), inputs: vec![input], outputs: vec![corpus, report], summary })
    }

    fn dev_records(&self) -> Result<Option<(Vec<RelevanceRecord>, Artifact)>, StageFailure> {
        let Some(dev) = &self.config.inputs.dev else { return Ok(None) };
        let report = load_corpus(dev, &self.load_options())?;
        let artifact = self.consumed("dev", dev, Some(report.records.len()))?;
        Ok(Some((report.records, artifact)))
    }

    fn augment(&mut self) -> Result<StageRecord, StageFailure> {
        let settings = &self.config.augment;
        let train_stats = compute_stats(&self.corpus, "train");
        let mut inputs = Vec::new();
        let targets: BTreeSet<Language> = match &settings.targets {
            Some(t) => t.clone(),
            None => {
                let (dev, artifact) = self.dev_records()?.ok_or_else(|| config_failure("no augmentation targets"))?;
                inputs.push(artifact);
                let eval: BTreeSet<Language> = dev.iter().map(|r| r.language.clone()).collect();
                missing_languages(&train_stats, &eval)
            }
        };
        let quota = match settings.quota {
            Some(q) => q,
            None => default_quota(&train_stats, self.config.task)
                .ok_or_else(|| data_failure("training corpus is empty; cannot derive a quota"))?,
        };
        let plan = AugmentPlan {
            task: self.config.task,
            target_languages: targets,
            per_language_quota: quota,
            source_policy: settings.policy.clone(),
            master_seed: derive_seed(self.config.seed, &["augment"]),
        };
        let outcome = augment_by_translation(
            &self.corpus,
            &plan,
            self.providers.translator.as_ref(),
            self.config.max_in_flight,
        )
        .map_err(config_failure)?;
        self.ledger.augmented += outcome.records.len();
        let records = self.write_records("records", "augment/records.jsonl", &outcome.records)?;
        let deduped = self.merge(&outcome.records);
        let corpus = self.corpus_artifact("augment")?;
        let summary = serde_json::json!({ "plan": plan, "report": outcome.report, "duplicates_removed": deduped });
        let (report, summary) = self.write_summary("augment/report.json", &summary)?;
        Ok(StageRecord { name: "augment".into(), inputs, outputs: vec![records, corpus, report], summary })
    }

    fn negatives(&mut self) -> Result<StageRecord, StageFailure> {
        let catalog_path = self.config.inputs.catalog.as_ref().ok_or_else(|| config_failure("no catalog"))?;
        let lines = crate::corpus::read_lines(catalog_path)?;
        let mut catalog = CandidateCatalog::from_lines(self.config.task, &lines)?;
        let file_entries = catalog.len();
        for r in &self.corpus {
            catalog.insert(&r.candidate)?;
        }
        let input = self.consumed("catalog", catalog_path, Some(file_entries))?;
        let index = build_index(&catalog, self.providers.embedder.as_ref())?;

        let settings = &self.config.negatives;
        let mining = NegativeMiningConfig {
            k_min: settings.k_min,
            k_max: settings.k_max,
            ratio: settings.ratio,
            master_seed: derive_seed(self.config.seed, &["negatives"]),
            query_mode: match &settings.translate_targets {
                Some(t) => QueryMode::Translate(t.clone()),
                None => QueryMode::SameLanguage,
            },
        };
        let positives: Vec<RelevanceRecord> = self
            .corpus
            .iter()
            .filter(|r| r.origin == Origin::Original && r.label == Label::Relevant)
            .cloned()
            .collect();
        let exclusions = ExclusionSet::from_records(&self.corpus);
        let outcome = mine_hard_negatives(
            &positives,
            &catalog,
            &index,
            Some(self.providers.translator.as_ref()),
            &exclusions,
            &mining,
            self.config.max_in_flight,
        )?;
        self.ledger.negatives += outcome.records.len();
        let records = self.write_records("records", "negatives/records.jsonl", &outcome.records)?;
        let n = write_jsonl(&self.path("negatives/trace.jsonl"), &outcome.trace)?;
        let trace = self.produced("trace", "negatives/trace.jsonl", Some(n))?;
        let deduped = self.merge(&outcome.records);
        let corpus = self.corpus_artifact("negatives")?;
        let summary = serde_json::json!({
            "catalog_size": catalog.len(),
            "catalog_file_entries": file_entries,
            "config": mining,
            "report": outcome.report,
            "duplicates_removed": deduped,
        });
        let (report, summary) = self.write_summary("negatives/report.json", &summary)?;
        Ok(StageRecord { name: "negatives".into(), inputs: vec![input], outputs: vec![records, trace, corpus, report], summary })
    }

    fn template(&self) -> Result<InstructionTemplate, StageFailure> {
        match &self.config.inputs.template {
            Some(p) => Ok(InstructionTemplate::from_toml_file(p)?),
            None => Ok(InstructionTemplate::default_for(self.config.task)),
        }
    }

    fn filter(&mut self) -> Result<StageRecord, StageFailure> {
        // the training file the filter model would be fine-tuned on
        let n = emit_training_file(&self.corpus, &self.template()?, &self.path("filter/train.prefilter.jsonl"))?;
        let prefilter = self.produced("prefilter_training_file", "filter/train.prefilter.jsonl", Some(n))?;
        let outcome = validate_corpus(
            &self.corpus,
            self.providers.scorer.as_ref(),
            &self.config.filter,
            self.config.max_in_flight,
        )
        .map_err(config_failure)?;
        let removed = self.corpus.len() - outcome.kept.len();
        self.ledger.filtered += removed;
        self.corpus = outcome.kept;
        let n = write_jsonl(&self.path("filter/verdicts.jsonl"), &outcome.verdicts)?;
        let verdicts = self.produced("verdicts", "filter/verdicts.jsonl", Some(n))?;
        let corpus = self.corpus_artifact("filter")?;
        let summary = filter_report(&outcome.verdicts, DEFAULT_TOP_N);
        let (report, summary) = self.write_summary("filter/report.json", &summary)?;
        Ok(StageRecord {
            name: "filter".into(),
            inputs: vec![],
            outputs: vec![prefilter, verdicts, corpus, report],
            summary,
        })
    }

    fn finish_training(&mut self) -> Result<Vec<Artifact>, StageFailure> {
        let unresolved = unresolved_lineage(&self.corpus, &self.ancestry);
        if let Some(first) = unresolved.first() {
            return Err(data_failure(format!(
                "{} output records do not trace back to an original record (first: {first})",
                unresolved.len()
            )));
        }
        self.ledger.output = self.corpus.len();
        let corpus = self.write_records("training_corpus", "train.corpus.jsonl", &self.corpus)?;
        let n = emit_training_file(&self.corpus, &self.template()?, &self.path("train.instructions.jsonl"))?;
        let instructions = self.produced("training_file", "train.instructions.jsonl", Some(n))?;
        Ok(vec![corpus, instructions])
    }

    /// Score, optionally calibrate, and evaluate the dev set.
    fn evaluate_dev(&mut self) -> Result<Option<RunMetrics>, StageFailure> {
        let Some((dev, dev_artifact)) = self.dev_records()? else { return Ok(None) };

        let scored: Vec<_> = score_records(&dev, self.providers.scorer.as_ref(), self.config.max_in_flight)
            .into_iter()
            .collect::<Result<_, _>>()?;
        let n = write_jsonl(&self.path("score/dev.scored.jsonl"), &scored)?;
        let scored_artifact = self.produced("scored", "score/dev.scored.jsonl", Some(n))?;
        self.stages.push(StageRecord {
            name: "score".into(),
            inputs: vec![dev_artifact],
            outputs: vec![scored_artifact.clone()],
            summary: serde_json::json!({ "scored": n }),
        });

        let task = self.config.task;
        let (threshold, calibrated) = if self.config.stages.threshold {
            let result = match self.config.calibrate.mode {
                CalibrationMode::Grid => calibrate_threshold(&scored, self.config.calibrate.grid_step),
                CalibrationMode::Exact => calibrate_exact(&scored),
            }
            .map_err(data_failure)?;
            write_json(&self.path("calibrate/calibration.json"), &result)?;
            let calib = self.produced("calibration", "calibrate/calibration.json", None)?;
            std::fs::write(self.path("calibrate/sweep.csv"), result.to_csv()).map_err(data_failure)?;
            let sweep = self.produced("sweep_csv", "calibrate/sweep.csv", Some(result.sweep.len()))?;
            self.stages.push(StageRecord {
                name: "calibrate".into(),
                inputs: vec![scored_artifact.clone()],
                outputs: vec![calib, sweep],
                summary: serde_json::json!({
                    "mode": result.mode,
                    "best_threshold": result.best_threshold,
                    "best_f1": result.best_f1,
                }),
            });
            (result.best_threshold, true)
        } else {
            (UNCALIBRATED_THRESHOLD, false)
        };

        let judgements: Vec<Judgement> = scored
            .iter()
            .map(|s| Judgement {
                task: s.task,
                language: s.language.clone(),
                origin: s.origin,
                label: s.label.expect("dev records are labelled"),
                pred: decide(s.p_yes, threshold),
            })
            .collect();
        let report: EvalReport = build_report(&judgements, &BTreeMap::from([(task, threshold)]));
        write_json(&self.path("evaluate/report.json"), &report)?;
        let json = self.produced("report", "evaluate/report.json", None)?;
        std::fs::write(self.path("evaluate/report.txt"), report.render_table()).map_err(data_failure)?;
        let table = self.produced("table", "evaluate/report.txt", None)?;
        let overall = report.tasks.get(&task).map(|t| t.overall.counts).unwrap_or_default();
        let m = f1_positive(&overall);
        let metrics = RunMetrics {
            threshold,
            calibrated,
            dev_records: judgements.len(),
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
        };
        self.stages.push(StageRecord {
            name: "evaluate".into(),
            inputs: vec![scored_artifact],
            outputs: vec![json, table],
            summary: serde_json::to_value(metrics).map_err(data_failure)?,
        });
        Ok(Some(metrics))
    }

    fn manifest(&self, outputs: Vec<Artifact>, metrics: Option<RunMetrics>, status: RunStatus) -> RunManifest {
        let mut output_balance = BTreeMap::new();
        for r in &self.corpus {
            let c: &mut CellCounts = output_balance.entry(r.language.clone()).or_default();
            c.total += 1;
            if r.label.is_relevant() {
                c.positive += 1;
            } else {
                c.negative += 1;
            }
        }
        RunManifest {
            format_version: MANIFEST_VERSION,
            config: self.config.clone(),
            stage_order: self.stages.iter().map(|s| s.name.clone()).collect(),
            stages: self.stages.clone(),
            ledger: self.ledger,
            output_balance,
            outputs,
            metrics,
            status,
        }
    }

    fn run_all(&mut self) -> Result<(Vec<Artifact>, Option<RunMetrics>), (String, StageFailure)> {
        let tag = |name: &str| {
            let name = name.to_string();
            move |e: StageFailure| (name, e)
        };
        let stage = self.ingest().map_err(tag("ingest"))?;
        self.stages.push(stage);
        if self.config.stages.augment {
            let stage = self.augment().map_err(tag("augment"))?;
            self.stages.push(stage);
        }
        if self.config.stages.negatives {
            let stage = self.negatives().map_err(tag("negatives"))?;
            self.stages.push(stage);
        }
        if self.config.stages.filter {
            let stage = self.filter().map_err(tag("filter"))?;
            self.stages.push(stage);
        }
        let outputs = self.finish_training().map_err(tag("emit"))?;
        let metrics = self.evaluate_dev().map_err(tag("evaluate"))?;
        Ok((outputs, metrics))
    }
}

/// Runs the pipeline with providers built from the config (plus the
/// `PROVIDER_*` environment variables in http mode).
pub fn run(config: &PipelineConfig) -> Result<RunManifest, PipelineError> {
    let providers = Providers::from_settings(&config.providers.clone().with_env());
    run_with(config, &providers)
}

/// Runs the pipeline with explicit providers. Writes `manifest.json` into the
/// output directory whether the run succeeds or fails.
pub fn run_with(config: &PipelineConfig, providers: &Providers) -> Result<RunManifest, PipelineError> {
    config.validate()?;
    std::fs::create_dir_all(&config.output.dir)
        .map_err(|e| PipelineError::Config(format!("{}: {e}", config.output.dir.display())))?;
    let mut runner = Runner {
        config,
        providers,
        out: config.output.dir.clone(),
        stages: Vec::new(),
        ledger: Ledger::default(),
        ancestry: Vec::new(),
        corpus: Vec::new(),
    };
    let manifest_path = config.output.dir.join(MANIFEST_FILE);
    let write_manifest = |m: &RunManifest| {
        write_json(&manifest_path, m).map_err(|e| PipelineError::Config(format!("writing manifest: {e}")))
    };
    match runner.run_all() {
        Ok((outputs, metrics)) => {
            let manifest = runner.manifest(outputs, metrics, RunStatus::Completed);
            debug_assert!(manifest.ledger.balances());
            write_manifest(&manifest)?;
            Ok(manifest)
        }
        Err((stage, failure)) => {
            log::error!("stage {stage} failed: {}", failure.message);
            let status = RunStatus::Failed { stage: stage.clone(), kind: failure.kind, error: failure.message.clone() };
            let manifest = runner.manifest(Vec::new(), None, status);
            write_manifest(&manifest)?;
            Err(PipelineError::Stage { stage, kind: failure.kind, message: failure.message, manifest: manifest_path })
        }
    }
}

/// Digest of the serialized manifest.
pub fn manifest_digest(manifest: &RunManifest) -> String {
    sha256_hex(&serde_json::to_vec(manifest).unwrap_or_default())
}
