use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::augment::SourcePolicy;
use crate::concurrency::DEFAULT_MAX_IN_FLIGHT;
use crate::corpus::{Language, Task};
use crate::negmine::NegativeMiningConfig;
use crate::providers::ProviderSettings;
use crate::scoring::{threshold_grid, CalibrationMode, DEFAULT_GRID_STEP};
use crate::selfcheck::FilterConfig;

/// Threshold used for evaluation when calibration is switched off.
pub const UNCALIBRATED_THRESHOLD: f64 = 0.5;

/// Declarative run description, normally read from TOML:
///
/// ```toml
/// task = "qc"            # qc | qi
/// seed = 42              # required; every random draw derives from it
/// max_in_flight = 16     # concurrent provider requests
/// lenient = false        # skip malformed input lines instead of failing
///
/// [inputs]
/// train = "train.jsonl"
/// dev = "dev.jsonl"          # optional; enables score/calibrate/evaluate
/// catalog = "categories.txt" # one candidate per line; required for negatives
/// template = "prompt.toml"   # optional instruction template
///
/// [output]
/// dir = "out"
///
/// [stages]                   # all default to false
/// augment = true
/// negatives = true
/// filter = true
/// threshold = true           # calibrate on dev instead of using 0.5
///
/// [augment]
/// targets = ["de", "it"]     # default: dev languages missing from train
/// quota = 1000               # default: mean per-language train count
/// policy = { kind = "uniform" }
///
/// [negatives]
/// k_min = 20
/// k_max = 50
/// ratio = 1.0
/// translate_targets = ["de"] # optional; translate mined queries
///
/// [filter]
/// tau = 0.9
/// action = "remove"          # remove | flag_only
///
/// [calibrate]
/// grid_step = 0.01
/// mode = "grid"              # grid | exact
///
/// [providers]
/// kind = "mock"              # mock | http
/// ```
///
/// Relative paths are resolved against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub task: Task,
    pub seed: u64,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default)]
    pub lenient: bool,
    pub inputs: Inputs,
    pub output: OutputSettings,
    #[serde(default)]
    pub stages: StageToggles,
    #[serde(default)]
    pub augment: AugmentSettings,
    #[serde(default)]
    pub negatives: NegativeSettings,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub calibrate: CalibrateSettings,
    #[serde(default)]
    pub providers: ProviderSettings,
}

fn default_in_flight() -> usize {
    DEFAULT_MAX_IN_FLIGHT
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    pub train: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub template: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSettings {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageToggles {
    #[serde(default)]
    pub augment: bool,
    #[serde(default)]
    pub negatives: bool,
    #[serde(default)]
    pub filter: bool,
    #[serde(default)]
    pub threshold: bool,
}

/// An optional stage that can be switched on or off.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Toggle {
    Augment,
    Negatives,
    Filter,
    Threshold,
}

impl Toggle {
    pub const ALL: [Toggle; 4] = [Toggle::Augment, Toggle::Negatives, Toggle::Filter, Toggle::Threshold];

    pub fn as_str(self) -> &'static str {
        match self {
            Toggle::Augment => "augment",
            Toggle::Negatives => "negatives",
            Toggle::Filter => "filter",
            Toggle::Threshold => "threshold",
        }
    }
}

impl fmt::Display for Toggle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Toggle {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Toggle::ALL
            .into_iter()
            .find(|t| t.as_str() == s.trim())
            .ok_or_else(|| format!("unknown toggle `{s}` (expected augment, negatives, filter or threshold)"))
    }
}

impl StageToggles {
    pub fn get(&self, toggle: Toggle) -> bool {
        match toggle {
            Toggle::Augment => self.augment,
            Toggle::Negatives => self.negatives,
            Toggle::Filter => self.filter,
            Toggle::Threshold => self.threshold,
        }
    }

    pub fn set(&mut self, toggle: Toggle, on: bool) {
        match toggle {
            Toggle::Augment => self.augment = on,
            Toggle::Negatives => self.negatives = on,
            Toggle::Filter => self.filter = on,
            Toggle::Threshold => self.threshold = on,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentSettings {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<BTreeSet<Language>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quota: Option<usize>,
    #[serde(default)]
    pub policy: SourcePolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NegativeSettings {
    #[serde(default = "default_k_min")]
    pub k_min: usize,
    #[serde(default = "default_k_max")]
    pub k_max: usize,
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub translate_targets: Option<BTreeSet<Language>>,
}

fn default_k_min() -> usize {
    NegativeMiningConfig::default().k_min
}

fn default_k_max() -> usize {
    NegativeMiningConfig::default().k_max
}

fn default_ratio() -> f64 {
    1.0
}

impl Default for NegativeSettings {
    fn default() -> Self {
        Self { k_min: default_k_min(), k_max: default_k_max(), ratio: 1.0, translate_targets: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CalibrateSettings {
    #[serde(default = "default_grid_step")]
    pub grid_step: f64,
    #[serde(default = "default_mode")]
    pub mode: CalibrationMode,
}

fn default_grid_step() -> f64 {
    DEFAULT_GRID_STEP
}

fn default_mode() -> CalibrationMode {
    CalibrationMode::Grid
}

impl Default for CalibrateSettings {
    fn default() -> Self {
        Self { grid_step: DEFAULT_GRID_STEP, mode: CalibrationMode::Grid }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut config: Self = toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.resolve_paths(base_dir);
        Ok(config)
    }

    pub fn from_toml_file(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.inputs.train);
        fix(&mut self.output.dir);
        for p in [&mut self.inputs.dev, &mut self.inputs.catalog, &mut self.inputs.template].into_iter().flatten() {
            fix(p);
        }
    }

    /// Checks that every enabled stage has what it needs.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let err = |m: String| Err(PipelineError::Config(m));
        if self.max_in_flight == 0 {
            return err("max_in_flight must be at least 1".into());
        }
        if self.stages.augment {
            if self.augment.targets.is_none() && self.inputs.dev.is_none() {
                return err("augment needs [augment].targets or a dev set to derive them from".into());
            }
            if self.augment.quota == Some(0) {
                return err("[augment].quota must be at least 1".into());
            }
        }
        if self.stages.negatives {
            if self.inputs.catalog.is_none() {
                return err("negatives needs inputs.catalog".into());
            }
            let n = &self.negatives;
            if n.k_min == 0 || n.k_min > n.k_max {
                return err(format!("need 1 <= k_min <= k_max, got {}..{}", n.k_min, n.k_max));
            }
            if !(n.ratio.is_finite() && n.ratio > 0.0) {
                return err(format!("[negatives].ratio must be positive, got {}", n.ratio));
            }
        }
        if self.stages.filter {
            self.filter.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        if self.stages.threshold {
            if self.inputs.dev.is_none() {
                return err("threshold calibration needs inputs.dev".into());
            }
            threshold_grid(self.calibrate.grid_step).map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        Ok(())
    }
}
