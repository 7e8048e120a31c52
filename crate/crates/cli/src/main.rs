mod commands;
mod failure;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use relpipe::corpus::{Language, Task};
use relpipe::pipeline::Toggle;
use relpipe::providers::ProviderKind;
use relpipe::selfcheck::FilterAction;

use failure::Exit;

/// Multilingual query-category / query-item relevance data pipeline.
#[derive(Debug, Parser)]
#[command(name = "relpipe", version, arg_required_else_help = true)]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalOptions,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalOptions {
    /// Pipeline config (TOML); also supplies defaults for task, seed and providers.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed; overrides the config value.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Provider backend; overrides the config value.
    #[arg(long, global = true)]
    pub provider: Option<ProviderChoice>,
    /// More log output (-v info, -vv debug, -vvv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    /// Skip malformed input lines instead of aborting.
    #[arg(long, global = true)]
    pub lenient: bool,
    /// Upper bound on concurrent provider calls.
    #[arg(long, global = true)]
    pub max_in_flight: Option<usize>,
    /// Print machine-readable JSON instead of tables.
    #[arg(long, global = true)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProviderChoice {
    Mock,
    Http,
}

impl From<ProviderChoice> for ProviderKind {
    fn from(c: ProviderChoice) -> Self {
        match c {
            ProviderChoice::Mock => ProviderKind::Mock,
            ProviderChoice::Http => ProviderKind::Http,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ModeChoice {
    Grid,
    Exact,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Record and label counts per task, split and language.
    Stats(StatsArgs),
    /// Translate queries into missing languages.
    Augment(AugmentArgs),
    /// Mine hard negatives from embedding neighbours of positive candidates.
    MineNegatives(MineArgs),
    /// Drop (or flag) records whose label the scorer contradicts.
    Filter(FilterArgs),
    /// Score records with the relevance scorer.
    Score(ScoreArgs),
    /// Choose the decision threshold that maximizes F1.
    Calibrate(CalibrateArgs),
    /// Precision, recall and F1, overall and per language.
    Evaluate(EvaluateArgs),
    /// Run the full pipeline from a config file or a previous manifest.
    Run(RunArgs),
    /// Run every on/off combination of the given stages.
    Ablate(AblateArgs),
    /// Render records as an instruction-tuning file.
    EmitTrain(EmitArgs),
    /// Print a saved run manifest or evaluation report.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    /// Corpus file, optionally as split=path (default split: file stem). Repeatable.
    #[arg(long = "in", value_name = "[SPLIT=]PATH")]
    pub inputs: Vec<String>,
    /// Corpus manifest (TOML list of split files).
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Also write the table as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Target languages; defaults to the languages of --dev missing from the input.
    #[arg(long, value_delimiter = ',')]
    pub targets: Vec<Language>,
    #[arg(long)]
    pub dev: Option<PathBuf>,
    /// Records per target language; defaults to the mean per-language count.
    #[arg(long)]
    pub quota: Option<usize>,
    /// Source-language weights, e.g. en=3,fr=1; uniform when absent.
    #[arg(long, value_delimiter = ',', value_name = "LANG=W")]
    pub weights: Vec<String>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MineArgs {
    #[arg(long)]
    pub task: Option<Task>,
    /// One candidate per line.
    #[arg(long)]
    pub catalog: PathBuf,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub k_min: usize,
    #[arg(long, default_value_t = 50)]
    pub k_max: usize,
    #[arg(long, default_value_t = 1.0)]
    pub ratio: f64,
    /// Write mined queries in these languages (translated) instead of the positive's own.
    #[arg(long, value_delimiter = ',')]
    pub translate_targets: Vec<Language>,
    #[arg(long)]
    pub trace: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FilterArgs {
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = relpipe::selfcheck::DEFAULT_TAU)]
    pub tau: f64,
    /// remove | flag-only
    #[arg(long, default_value = "remove")]
    pub action: FilterAction,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub verdicts: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// Scored records from `score`.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = relpipe::scoring::DEFAULT_GRID_STEP)]
    pub grid_step: f64,
    #[arg(long, value_enum, default_value = "grid")]
    pub mode: ModeChoice,
    #[arg(long)]
    pub out: PathBuf,
    /// Sweep curve as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Only evaluate records of this task.
    #[arg(long)]
    pub task: Option<Task>,
    /// Scored records from `score`.
    #[arg(long)]
    pub preds: PathBuf,
    /// Fixed threshold for every task.
    #[arg(long, conflicts_with = "calibration")]
    pub threshold: Option<f64>,
    /// Threshold from a `calibrate` result; other tasks use their defaults.
    #[arg(long)]
    pub calibration: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Threshold sweep curve as CSV.
    #[arg(long)]
    pub sweep_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Re-run the config recorded in a previous manifest.
    #[arg(long)]
    pub from_manifest: Option<PathBuf>,
    /// Output directory; overrides the config value.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long, value_delimiter = ',', default_value = "augment,negatives,filter")]
    pub toggles: Vec<Toggle>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EmitArgs {
    #[arg(long)]
    pub task: Option<Task>,
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Instruction template (TOML); a built-in template is used otherwise.
    #[arg(long)]
    pub template: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// manifest.json of a run, or report.json of an evaluation.
    pub path: PathBuf,
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().format_timestamp(None).init();
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => ExitCode::SUCCESS,
                _ => ExitCode::from(Exit::Usage as u8),
            };
        }
    };
    init_logging(cli.global.verbose);
    match commands::dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.exit as u8)
        }
    }
}
