//! Run configuration, read from a sectioned TOML file.

use std::path::{Path, PathBuf};

use barrier_mlmc::extremes::{ExtremeModel, ExtremeTarget};
use barrier_mlmc::models::{BarrierContract, BarrierKind, ModelSpec};
use barrier_mlmc::pricing::{MlmcConfig, StepsRule};
use barrier_mlmc::studies::ComplexitySettings;
use serde::{Deserialize, Serialize};

use crate::CliError;

pub const DEFAULT_SEED: u64 = 2024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ValidationMode {
    /// Theory warnings block the run.
    Strict,
    /// Theory warnings are reported and the run proceeds.
    #[default]
    Warn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: Option<ModelSpec<f64>>,
    pub option: Option<OptionSection>,
    pub mlmc: Option<MlmcSection>,
    pub mc: Option<McSection>,
    #[serde(default)]
    pub validation: ValidationSection,
    #[serde(default)]
    pub output: OutputSection,
    pub convergence: Option<ConvergenceSection>,
    pub density: Option<DensitySection>,
    pub levels: Option<LevelsSection>,
    #[serde(skip)]
    pub seed_override: Option<u64>,
    #[serde(skip)]
    pub workers_override: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptionSection {
    pub kind: BarrierKind,
    pub barrier: f64,
    pub strike: f64,
    pub rate: f64,
    pub maturity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MlmcSection {
    pub eps: Vec<f64>,
    #[serde(default = "default_n_warm")]
    pub n_warm: u64,
    #[serde(default = "default_l_min")]
    pub l_min: u32,
    #[serde(default = "default_l_max")]
    pub l_max: u32,
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    #[serde(default = "default_workers")]
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSection {
    #[serde(flatten)]
    pub steps: StepsRule,
    #[serde(default = "default_max_run_cost")]
    pub max_run_cost: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSection {
    #[serde(default)]
    pub mode: ValidationMode,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceSection {
    pub levels: Vec<u32>,
    #[serde(default = "default_reference")]
    pub reference: u32,
    pub n_paths: u64,
    #[serde(default = "default_horizon")]
    pub maturity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensitySection {
    pub target: ExtremeTarget,
    #[serde(default = "default_horizon")]
    pub t: f64,
    /// Explicit grid.
    pub z: Option<Vec<f64>>,
    /// `[first, last, points]`, used when `z` is absent.
    pub z_range: Option<(f64, f64, usize)>,
    /// Monte Carlo comparison paths; 0 disables the comparison columns.
    #[serde(default)]
    pub mc_paths: u64,
    #[serde(default = "default_reference")]
    pub mc_level: u32,
    pub abs_tol: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LevelsSection {
    pub levels: Vec<u32>,
    pub n: u64,
}

fn default_n_warm() -> u64 {
    MlmcConfig::default().n_warm
}
fn default_l_min() -> u32 {
    MlmcConfig::default().l_min
}
fn default_l_max() -> u32 {
    MlmcConfig::default().l_max
}
fn default_seed() -> u64 {
    DEFAULT_SEED
}
fn default_workers() -> usize {
    1
}
fn default_max_run_cost() -> f64 {
    ComplexitySettings::default().max_run_cost
}
fn default_reference() -> u32 {
    12
}
fn default_horizon() -> f64 {
    1.0
}

fn missing(section: &str) -> CliError {
    CliError::Config(format!("missing section [{section}]"))
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn model(&self) -> Result<ModelSpec<f64>, CliError> {
        let m = self.model.ok_or_else(|| missing("model"))?;
        m.validate().map_err(|e| CliError::Config(format!("[model] {e}")))?;
        Ok(m)
    }

    pub fn contract(&self) -> Result<BarrierContract<f64>, CliError> {
        let o = self.option.as_ref().ok_or_else(|| missing("option"))?;
        let c = BarrierContract::new(o.kind, o.barrier, o.strike, o.rate, o.maturity);
        c.validate(self.model()?.x0()).map_err(|e| CliError::Config(format!("[option] {e}")))?;
        Ok(c)
    }

    pub fn mlmc(&self) -> Result<&MlmcSection, CliError> {
        let m = self.mlmc.as_ref().ok_or_else(|| missing("mlmc"))?;
        if m.eps.is_empty() {
            return Err(CliError::Config("[mlmc] eps must not be empty".into()));
        }
        if m.eps.iter().any(|e| !(*e > 0.0)) {
            return Err(CliError::Config("[mlmc] eps values must be positive".into()));
        }
        if m.eps.windows(2).any(|w| w[1] >= w[0]) {
            return Err(CliError::Config("[mlmc] eps must be sorted in descending order".into()));
        }
        if m.workers == 0 {
            return Err(CliError::Config("[mlmc] workers must be >= 1".into()));
        }
        Ok(m)
    }

    pub fn mlmc_config(&self) -> Result<MlmcConfig, CliError> {
        let m = self.mlmc()?;
        Ok(MlmcConfig {
            n_warm: m.n_warm,
            l_min: m.l_min,
            l_max: m.l_max,
            seed: m.seed,
            workers: m.workers,
            ..MlmcConfig::default()
        })
    }

    pub fn complexity_settings(&self) -> Result<ComplexitySettings, CliError> {
        let mc = self.mc.as_ref().ok_or_else(|| missing("mc"))?;
        Ok(ComplexitySettings { steps: mc.steps, max_run_cost: mc.max_run_cost })
    }

    pub fn extreme_model(&self) -> Result<ExtremeModel, CliError> {
        Ok(match self.model()? {
            ModelSpec::Cir(p) => ExtremeModel::Cir(p),
            ModelSpec::Cev(p) => ExtremeModel::Cev(p),
        })
    }

    /// Seed for every random stream: the override, else the `[mlmc]` seed.
    pub fn seed(&self) -> u64 {
        self.seed_override.or(self.mlmc.as_ref().map(|m| m.seed)).unwrap_or(DEFAULT_SEED)
    }

    pub fn workers(&self) -> usize {
        self.workers_override.or(self.mlmc.as_ref().map(|m| m.workers)).unwrap_or(1)
    }

    pub fn apply_overrides(&mut self, seed: Option<u64>, workers: Option<usize>, validation: Option<ValidationMode>) {
        if let Some(s) = seed {
            self.seed_override = Some(s);
            if let Some(m) = self.mlmc.as_mut() {
                m.seed = s;
            }
        }
        if let Some(w) = workers {
            self.workers_override = Some(w);
            if let Some(m) = self.mlmc.as_mut() {
                m.workers = w;
            }
        }
        if let Some(v) = validation {
            self.validation.mode = v;
        }
    }

    /// SHA-256 of the canonical JSON form, without the fields that cannot
    /// change results (workers, output directory).
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut c = self.clone();
        if let Some(m) = c.mlmc.as_mut() {
            m.workers = 1;
        }
        c.output = OutputSection::default();
        let json = serde_json::to_string(&(&c, self.seed())).expect("config serializes");
        Sha256::digest(json.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }
}
