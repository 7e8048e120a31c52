use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use relpipe::augment::{augment_by_translation, default_quota, missing_languages, AugmentPlan, SourcePolicy};
use relpipe::corpus::{
    compute_stats, emit_training_file, load_corpus, read_json, read_jsonl, read_lines, write_corpus, write_json,
    write_jsonl, CorpusManifest, CorpusStats, InstructionTemplate, Label, Language, LoadOptions, Origin, ParseMode,
    RelevanceRecord, Task,
};
use relpipe::evalreport::{build_report, display_metric, EvalReport, Judgement};
use relpipe::hashing::derive_seed;
use relpipe::negmine::{
    build_index, mine_hard_negatives, CandidateCatalog, ExclusionSet, NegativeMiningConfig, QueryMode,
};
use relpipe::pipeline::{ablation_matrix, ablation_table, manifest_digest, PipelineConfig, RunManifest, RunStatus};
use relpipe::providers::{ProviderKind, ProviderSettings, Providers};
use relpipe::scoring::{
    calibrate_exact, calibrate_threshold, decide, default_threshold, score_records, CalibrationResult, ScoredRecord,
    ScoringError, DEFAULT_GRID_STEP,
};
use relpipe::selfcheck::{filter_report, validate_corpus, FilterConfig, DEFAULT_TOP_N};
use serde::Serialize;

use crate::failure::{Classify, CliResult, Failure};
use crate::{
    AblateArgs, AugmentArgs, CalibrateArgs, Cli, Command, EmitArgs, EvaluateArgs, FilterArgs, GlobalOptions, MineArgs,
    ModeChoice, ReportArgs, RunArgs, ScoreArgs, StatsArgs,
};

/// Global options resolved against the optional config file.
struct Context {
    overrides: Overrides,
    config: Option<PipelineConfig>,
    seed: u64,
    providers: ProviderSettings,
    lenient: bool,
    max_in_flight: usize,
    json: bool,
}

/// Flags given explicitly on the command line.
struct Overrides {
    seed: Option<u64>,
    provider: Option<ProviderKind>,
    max_in_flight: Option<usize>,
    lenient: bool,
}

impl Overrides {
    fn apply(&self, c: &mut PipelineConfig) {
        if let Some(seed) = self.seed {
            c.seed = seed;
        }
        if let Some(kind) = self.provider {
            c.providers.kind = kind;
        }
        if let Some(n) = self.max_in_flight {
            c.max_in_flight = n;
        }
        c.lenient |= self.lenient;
    }
}

impl Context {
    fn new(global: &GlobalOptions) -> CliResult<Self> {
        let overrides = Overrides {
            seed: global.seed,
            provider: global.provider.map(Into::into),
            max_in_flight: global.max_in_flight,
            lenient: global.lenient,
        };
        let mut config = match &global.config {
            Some(path) => Some(PipelineConfig::from_toml_file(path)?),
            None => None,
        };
        if let Some(c) = &mut config {
            overrides.apply(c);
        }
        let mut providers = config.as_ref().map(|c| c.providers.clone()).unwrap_or_default();
        if let Some(kind) = global.provider {
            providers.kind = kind.into();
        }
        let max_in_flight = global
            .max_in_flight
            .or(config.as_ref().map(|c| c.max_in_flight))
            .unwrap_or(relpipe::concurrency::DEFAULT_MAX_IN_FLIGHT);
        if max_in_flight == 0 {
            return Err(Failure::usage(anyhow!("--max-in-flight must be at least 1")));
        }
        Ok(Self {
            overrides,
            seed: global.seed.or(config.as_ref().map(|c| c.seed)).unwrap_or(0),
            lenient: global.lenient || config.as_ref().is_some_and(|c| c.lenient),
            providers: providers.with_env(),
            config,
            max_in_flight,
            json: global.json,
        })
    }

    fn task(&self, arg: Option<Task>) -> CliResult<Task> {
        arg.or(self.config.as_ref().map(|c| c.task))
            .ok_or_else(|| Failure::usage(anyhow!("--task is required (or pass --config)")))
    }

    fn load_options(&self, task: Option<Task>) -> LoadOptions {
        LoadOptions { task, mode: if self.lenient { ParseMode::Lenient } else { ParseMode::Strict } }
    }

    fn load(&self, path: &Path, task: Task) -> CliResult<Vec<RelevanceRecord>> {
        let report = load_corpus(path, &self.load_options(Some(task)))?;
        if !report.skipped.is_empty() {
            log::warn!("{}: skipped {} malformed lines", path.display(), report.skipped.len());
        }
        Ok(report.records)
    }

    fn providers(&self) -> Providers {
        Providers::from_settings(&self.providers)
    }

    fn pipeline_config(&self) -> CliResult<PipelineConfig> {
        self.config.clone().ok_or_else(|| Failure::usage(anyhow!("this command needs --config pipeline.toml")))
    }

    /// Prints `value` as JSON with `--json`, `human` otherwise.
    fn emit<T: Serialize>(&self, value: &T, human: impl FnOnce() -> String) -> CliResult<()> {
        if self.json {
            println!("{}", serde_json::to_string_pretty(value).or_data()?);
        } else {
            print!("{}", human());
        }
        Ok(())
    }
}

pub fn dispatch(cli: Cli) -> CliResult<()> {
    let ctx = Context::new(&cli.global)?;
    match cli.command {
        Command::Stats(a) => stats(&ctx, a),
        Command::Augment(a) => augment(&ctx, a),
        Command::MineNegatives(a) => mine_negatives(&ctx, a),
        Command::Filter(a) => filter(&ctx, a),
        Command::Score(a) => score(&ctx, a),
        Command::Calibrate(a) => calibrate(&ctx, a),
        Command::Evaluate(a) => evaluate(&ctx, a),
        Command::Run(a) => run(&ctx, a),
        Command::Ablate(a) => ablate(&ctx, a),
        Command::EmitTrain(a) => emit_train(&ctx, a),
        Command::Report(a) => report(&ctx, a),
    }
}

fn split_spec(spec: &str) -> (String, PathBuf) {
    match spec.split_once('=') {
        Some((split, path)) if !split.is_empty() => (split.to_string(), PathBuf::from(path)),
        _ => {
            let path = PathBuf::from(spec);
            let split = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "all".into());
            (split, path)
        }
    }
}

fn stats(ctx: &Context, args: StatsArgs) -> CliResult<()> {
    if args.inputs.is_empty() && args.manifest.is_none() {
        return Err(Failure::usage(anyhow!("stats needs --in or --manifest")));
    }
    let options = ctx.load_options(None);
    let mut stats = CorpusStats::default();
    if let Some(path) = &args.manifest {
        let manifest = CorpusManifest::from_toml_file(path)?;
        let m = manifest.compute_stats(&options)?;
        for (file, skipped) in &m.skipped {
            log::warn!("{}: skipped {} malformed lines", file.display(), skipped.len());
        }
        stats.merge(&m.stats);
    }
    for spec in &args.inputs {
        let (split, path) = split_spec(spec);
        let report = load_corpus(&path, &options)?;
        if !report.skipped.is_empty() {
            log::warn!("{}: skipped {} malformed lines", path.display(), report.skipped.len());
        }
        stats.merge(&compute_stats(&report.records, &split));
    }
    if let Some(csv) = &args.csv {
        std::fs::write(csv, stats.to_csv()).map_err(|e| Failure::data(anyhow!("{}: {e}", csv.display())))?;
    }
    ctx.emit(&stats, || stats.render_table())
}

fn parse_weights(specs: &[String]) -> CliResult<SourcePolicy> {
    if specs.is_empty() {
        return Ok(SourcePolicy::Uniform);
    }
    let mut weights = BTreeMap::new();
    for spec in specs {
        let (lang, w) = spec.split_once('=').ok_or_else(|| Failure::usage(anyhow!("weight `{spec}` is not LANG=W")))?;
        let lang: Language = lang.parse().or_usage()?;
        let w: f64 = w.parse().map_err(|_| Failure::usage(anyhow!("weight `{spec}` is not a number")))?;
        weights.insert(lang, w);
    }
    Ok(SourcePolicy::Weighted(weights))
}

fn augment(ctx: &Context, args: AugmentArgs) -> CliResult<()> {
    let task = ctx.task(args.task)?;
    let records = ctx.load(&args.input, task)?;
    let train_stats = compute_stats(&records, "train");
    let targets: BTreeSet<Language> = if !args.targets.is_empty() {
        args.targets.iter().cloned().collect()
    } else if let Some(dev) = &args.dev {
        let eval: BTreeSet<Language> = ctx.load(dev, task)?.into_iter().map(|r| r.language).collect();
        missing_languages(&train_stats, &eval)
    } else {
        return Err(Failure::usage(anyhow!("augment needs --targets or --dev")));
    };
    let quota = match args.quota {
        Some(q) => q,
        None => default_quota(&train_stats, task)
            .ok_or_else(|| Failure::data(anyhow!("{} has no {task} records", args.input.display())))?,
    };
    let plan = AugmentPlan {
        task,
        target_languages: targets,
        per_language_quota: quota,
        source_policy: parse_weights(&args.weights)?,
        master_seed: derive_seed(ctx.seed, &["augment"]),
    };
    let providers = ctx.providers();
    let outcome =
        augment_by_translation(&records, &plan, providers.translator.as_ref(), ctx.max_in_flight).or_usage()?;
    let report = &outcome.report;
    if outcome.records.is_empty() {
        if let Some(first) = report.failures.first() {
            return Err(Failure::provider(anyhow!("every translation failed; first: {}", first.message)));
        }
    }
    write_corpus(&args.out, &outcome.records)?;
    let summary = serde_json::json!({ "plan": plan, "report": report });
    if let Some(path) = &args.report {
        write_json(path, &summary)?;
    }
    ctx.emit(&summary, || {
        let mut out = format!("{:<8}{:>10}{:>10}{:>10}\n", "lang", "requested", "produced", "shortfall");
        for (lang, requested) in &report.requested {
            let produced = report.produced.get(lang).copied().unwrap_or(0);
            let short = report.shortfall.get(lang).copied().unwrap_or(0);
            let _ = writeln!(out, "{:<8}{requested:>10}{produced:>10}{short:>10}", lang.as_str());
        }
        let _ = writeln!(out, "translation failures: {}", report.failures.len());
        out
    })
}

fn mine_negatives(ctx: &Context, args: MineArgs) -> CliResult<()> {
    let task = ctx.task(args.task)?;
    let records = ctx.load(&args.input, task)?;
    let lines = read_lines(&args.catalog)?;
    let mut catalog = CandidateCatalog::from_lines(task, &lines)?;
    let file_entries = catalog.len();
    for r in &records {
        catalog.insert(&r.candidate)?;
    }
    let providers = ctx.providers();
    let index = build_index(&catalog, providers.embedder.as_ref())?;
    let config = NegativeMiningConfig {
        k_min: args.k_min,
        k_max: args.k_max,
        ratio: args.ratio,
        master_seed: derive_seed(ctx.seed, &["negatives"]),
        query_mode: if args.translate_targets.is_empty() {
            QueryMode::SameLanguage
        } else {
            QueryMode::Translate(args.translate_targets.iter().cloned().collect())
        },
    };
    let positives: Vec<RelevanceRecord> =
        records.iter().filter(|r| r.origin == Origin::Original && r.label == Label::Relevant).cloned().collect();
    let exclusions = ExclusionSet::from_records(&records);
    let translator = matches!(config.query_mode, QueryMode::Translate(_)).then(|| providers.translator.as_ref());
    let outcome =
        mine_hard_negatives(&positives, &catalog, &index, translator, &exclusions, &config, ctx.max_in_flight)?;
    let report = &outcome.report;
    if outcome.records.is_empty() {
        if let Some(first) = report.translation_failures.first() {
            return Err(Failure::provider(anyhow!("every query translation failed; first: {}", first.reason)));
        }
    }
    write_corpus(&args.out, &outcome.records)?;
    if let Some(path) = &args.trace {
        write_jsonl(path, &outcome.trace)?;
    }
    let summary = serde_json::json!({
        "catalog_size": catalog.len(),
        "catalog_file_entries": file_entries,
        "config": config,
        "report": report,
    });
    if let Some(path) = &args.report {
        write_json(path, &summary)?;
    }
    ctx.emit(&summary, || {
        format!(
            "positives {}\nrequested {}\nmined {}\nexhausted {}\ntranslation failures {}\ncatalog {} ({} from file)\n",
            report.positives,
            report.requested,
            report.mined,
            report.exhausted.len(),
            report.translation_failures.len(),
            catalog.len(),
            file_entries
        )
    })
}

fn filter(ctx: &Context, args: FilterArgs) -> CliResult<()> {
    let task = ctx.task(args.task)?;
    let records = ctx.load(&args.input, task)?;
    let config = FilterConfig { tau: args.tau, action: args.action };
    let providers = ctx.providers();
    let outcome = validate_corpus(&records, providers.scorer.as_ref(), &config, ctx.max_in_flight).or_usage()?;
    let summary = filter_report(&outcome.verdicts, DEFAULT_TOP_N);
    if !records.is_empty() && summary.total.unscored == records.len() {
        let first = outcome.verdicts.iter().find_map(|v| v.error.clone()).unwrap_or_default();
        return Err(Failure::provider(anyhow!("no record could be scored; first: {first}")));
    }
    write_corpus(&args.out, &outcome.kept)?;
    if let Some(path) = &args.verdicts {
        write_jsonl(path, &outcome.verdicts)?;
    }
    if let Some(path) = &args.report {
        write_json(path, &summary)?;
    }
    let t = summary.total;
    ctx.emit(&summary, || {
        format!("kept {}\nremoved {}\nflagged {}\nunscored {}\n", t.kept, t.removed, t.flagged, t.unscored)
    })
}

fn score(ctx: &Context, args: ScoreArgs) -> CliResult<()> {
    let task = ctx.task(args.task)?;
    let records = ctx.load(&args.input, task)?;
    let providers = ctx.providers();
    let scored: Vec<ScoredRecord> =
        score_records(&records, providers.scorer.as_ref(), ctx.max_in_flight).into_iter().collect::<Result<_, _>>()?;
    let n = write_jsonl(&args.out, &scored)?;
    ctx.emit(&serde_json::json!({ "scored": n }), || format!("scored {n} records\n"))
}

fn calibrate(ctx: &Context, args: CalibrateArgs) -> CliResult<()> {
    let scored: Vec<ScoredRecord> = read_jsonl(&args.input)?;
    let result = match args.mode {
        ModeChoice::Grid => calibrate_threshold(&scored, args.grid_step)?,
        ModeChoice::Exact => calibrate_exact(&scored)?,
    };
    write_json(&args.out, &result)?;
    if let Some(csv) = &args.csv {
        std::fs::write(csv, result.to_csv()).map_err(|e| Failure::data(anyhow!("{}: {e}", csv.display())))?;
    }
    let summary = serde_json::json!({
        "task": result.task,
        "mode": result.mode,
        "grid_step": result.grid_step,
        "best_threshold": result.best_threshold,
        "best_f1": result.best_f1,
        "points": result.sweep.len(),
    });
    ctx.emit(&summary, || {
        format!(
            "task {}\nbest_threshold {}\nbest_f1 {}\npoints {}\n",
            result.task,
            display_metric(result.best_threshold),
            display_metric(result.best_f1),
            result.sweep.len()
        )
    })
}

fn evaluate(ctx: &Context, args: EvaluateArgs) -> CliResult<()> {
    let mut scored: Vec<ScoredRecord> = read_jsonl(&args.preds)?;
    if let Some(task) = args.task {
        scored.retain(|s| s.task == task);
    }
    if scored.is_empty() {
        return Err(Failure::data(anyhow!("{}: nothing to evaluate", args.preds.display())));
    }
    let calibration: Option<CalibrationResult> = args.calibration.as_deref().map(read_json).transpose()?;
    let tasks: BTreeSet<Task> = scored.iter().map(|s| s.task).collect();
    let mut thresholds = BTreeMap::new();
    for task in tasks {
        let t = match (&args.threshold, &calibration) {
            (Some(t), _) => *t,
            (None, Some(c)) if c.task == task => c.best_threshold,
            _ => default_threshold(task),
        };
        if !(0.0..=1.0).contains(&t) {
            return Err(Failure::usage(anyhow!("threshold must lie in [0, 1], got {t}")));
        }
        thresholds.insert(task, t);
    }
    let judgements = scored
        .iter()
        .map(|s| {
            let label = s.label.ok_or_else(|| ScoringError::MissingLabel(s.id.clone()))?;
            Ok(Judgement {
                task: s.task,
                language: s.language.clone(),
                origin: s.origin,
                label,
                pred: decide(s.p_yes, thresholds[&s.task]),
            })
        })
        .collect::<Result<Vec<_>, ScoringError>>()?;
    let report = build_report(&judgements, &thresholds);
    write_json(&args.out, &report)?;
    if let Some(csv) = &args.sweep_csv {
        let mut out = String::new();
        for task in thresholds.keys() {
            let subset: Vec<ScoredRecord> = scored.iter().filter(|s| s.task == *task).cloned().collect();
            match calibrate_threshold(&subset, DEFAULT_GRID_STEP) {
                Ok(c) => {
                    let body = c.to_csv();
                    let skip = if out.is_empty() { 0 } else { body.find('\n').map_or(body.len(), |i| i + 1) };
                    out.push_str(&body[skip..]);
                }
                Err(e) => log::warn!("no sweep for {task}: {e}"),
            }
        }
        std::fs::write(csv, out).map_err(|e| Failure::data(anyhow!("{}: {e}", csv.display())))?;
    }
    ctx.emit(&report, || report.render_table())
}

fn render_manifest(m: &RunManifest) -> String {
    let mut out = String::new();
    let status = match &m.status {
        RunStatus::Completed => "completed".to_string(),
        RunStatus::Failed { stage, error, .. } => format!("failed in {stage}: {error}"),
    };
    let _ = writeln!(out, "status   {status}");
    let _ = writeln!(out, "stages   {}", m.stage_order.join(" -> "));
    let l = m.ledger;
    let _ = writeln!(
        out,
        "ledger   input {} + augmented {} + negatives {} - filtered {} - deduped {} = output {}",
        l.input, l.augmented, l.negatives, l.filtered, l.deduped, l.output
    );
    if let Some(metrics) = &m.metrics {
        let _ = writeln!(
            out,
            "dev      threshold {} ({}) precision {} recall {} f1 {} on {} records",
            display_metric(metrics.threshold),
            if metrics.calibrated { "calibrated" } else { "fixed" },
            display_metric(metrics.precision),
            display_metric(metrics.recall),
            display_metric(metrics.f1),
            metrics.dev_records
        );
    }
    for stage in &m.stages {
        for a in &stage.outputs {
            let _ = writeln!(out, "  {:<10} {:<34} {}", stage.name, a.path, &a.sha256[..16]);
        }
    }
    out
}

fn run(ctx: &Context, args: RunArgs) -> CliResult<()> {
    let mut config = match &args.from_manifest {
        Some(path) => {
            let mut c = RunManifest::load(path)?.config;
            ctx.overrides.apply(&mut c);
            c
        }
        None => ctx.pipeline_config()?,
    };
    if let Some(out) = args.out {
        config.output.dir = out;
    }
    let manifest = relpipe::pipeline::run(&config)?;
    let digest = manifest_digest(&manifest);
    let summary = serde_json::json!({
        "manifest": config.output.dir.join(relpipe::pipeline::MANIFEST_FILE),
        "manifest_sha256": digest,
        "stage_order": manifest.stage_order,
        "ledger": manifest.ledger,
        "metrics": manifest.metrics,
    });
    ctx.emit(&summary, || format!("{}manifest {digest}\n", render_manifest(&manifest)))
}

fn ablate(ctx: &Context, args: AblateArgs) -> CliResult<()> {
    let mut config = ctx.pipeline_config()?;
    if let Some(out) = args.out {
        config.output.dir = out;
    }
    let providers = Providers::from_settings(&config.providers.clone().with_env());
    let runs = ablation_matrix(&config, &args.toggles, &providers)?;
    let summary: Vec<_> = runs
        .iter()
        .map(|r| {
            serde_json::json!({
                "label": r.label,
                "toggles": r.toggles,
                "manifest_sha256": r.manifest_sha256,
                "ledger": r.manifest.ledger,
                "output_totals": r.manifest.output_totals(),
                "metrics": r.manifest.metrics,
            })
        })
        .collect();
    ctx.emit(&summary, || ablation_table(&runs))
}

fn emit_train(ctx: &Context, args: EmitArgs) -> CliResult<()> {
    let task = ctx.task(args.task)?;
    let records = ctx.load(&args.input, task)?;
    let template_path = args.template.or(ctx.config.as_ref().and_then(|c| c.inputs.template.clone()));
    let template = match template_path {
        Some(p) => InstructionTemplate::from_toml_file(&p)?,
        None => InstructionTemplate::default_for(task),
    };
    let n = emit_training_file(&records, &template, &args.out)?;
    ctx.emit(&serde_json::json!({ "written": n }), || format!("wrote {n} instruction records\n"))
}

fn report(ctx: &Context, args: ReportArgs) -> CliResult<()> {
    let value: serde_json::Value = read_json(&args.path)?;
    if value.get("stage_order").is_some() {
        let manifest: RunManifest = serde_json::from_value(value).or_data()?;
        ctx.emit(&manifest, || render_manifest(&manifest))
    } else if value.get("tasks").is_some() {
        let report: EvalReport = serde_json::from_value(value).or_data()?;
        ctx.emit(&report, || report.render_table())
    } else {
        Err(Failure::usage(anyhow!("{}: neither a run manifest nor an evaluation report", args.path.display())))
    }
}
