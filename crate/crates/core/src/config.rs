//! Run configuration (TOML). Every field has a default, and the full
//! resolved configuration is written back into each run's manifest.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bench::BenchSpec;
use crate::error::{Error, Result};
use crate::experiment::{ControllerKind, ControllerSettings, GpTrainConfig, PipelineConfig};
use crate::mpc::MpcConfig;
use crate::par::Execution;
use crate::sim::{DiurnalProfile, RecordingConfig, ScenarioLabel, TruthPlant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Raw recording CSV; synthesized from `recording` when absent.
    pub recording: Option<PathBuf>,
    /// Holdout CSV for `validate`; synthesized when absent.
    pub holdout: Option<PathBuf>,
    /// Directory of a trained model bundle; trained in-process when absent.
    pub models: Option<PathBuf>,
    pub chiller_thermal: Option<PathBuf>,
    pub chiller_cop: Option<PathBuf>,
    /// Output directory, overridden by `--out`.
    pub out: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            recording: None,
            holdout: None,
            models: None,
            chiller_thermal: None,
            chiller_cop: None,
            out: PathBuf::from("results"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    /// Relative spread of the plant parameters used for closed-loop runs.
    pub perturbation: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self { perturbation: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    pub holdout_samples: usize,
    /// Rollout length and feedback interval in control periods.
    pub horizon: usize,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        Self {
            holdout_samples: 4320,
            horizon: 12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub controller: ControllerKind,
    pub scenario: ScenarioLabel,
    pub t_init: f64,
    pub steps: usize,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            controller: ControllerKind::Mpc,
            scenario: ScenarioLabel::Hot,
            t_init: 17.0,
            steps: 144,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareConfig {
    pub controllers: Vec<ControllerKind>,
    pub scenarios: Vec<ScenarioLabel>,
    pub t_init: Vec<f64>,
    pub steps: usize,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            controllers: ControllerKind::ALL.to_vec(),
            scenarios: ScenarioLabel::ALL.to_vec(),
            t_init: vec![17.0, 19.0, 21.0],
            steps: 144,
        }
    }
}

/// Provenance block written into manifests; ignored when loading.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunInfo {
    pub command: String,
    pub version: String,
    pub started_utc: String,
    pub finished_utc: String,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; every random stream is derived from it.
    pub seed: u64,
    pub execution: Execution,
    pub paths: Paths,
    pub recording: RecordingConfig,
    pub pipeline: PipelineConfig,
    pub gp: GpTrainConfig,
    pub mpc: MpcConfig,
    pub controllers: ControllerSettings,
    pub plant: TruthPlant,
    pub evaluation: EvaluationConfig,
    pub weather: DiurnalProfile,
    pub validate: ValidateConfig,
    pub simulate: SimulateConfig,
    pub compare: CompareConfig,
    pub bench: BenchSpec,
    pub run: Option<RunInfo>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            execution: Execution::default(),
            paths: Paths::default(),
            recording: RecordingConfig::default(),
            pipeline: PipelineConfig::default(),
            gp: GpTrainConfig::default(),
            mpc: MpcConfig::default(),
            controllers: ControllerSettings::default(),
            plant: TruthPlant::default(),
            evaluation: EvaluationConfig::default(),
            weather: DiurnalProfile::default(),
            validate: ValidateConfig::default(),
            simulate: SimulateConfig::default(),
            compare: CompareConfig::default(),
            bench: BenchSpec::default(),
            run: None,
        }
    }
}

/// Independent random streams drawn from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Recording,
    Holdout,
    Perturbation,
    Cells,
    Bench,
}

/// splitmix64 finalizer over the master seed and the stream index.
pub fn derive_seed(master: u64, stream: Stream) -> u64 {
    let mut z = master ^ (stream as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn seed_for(&self, stream: Stream) -> u64 {
        derive_seed(self.seed, stream)
    }

    pub fn validate(&self) -> Result<()> {
        self.mpc.validate()?;
        self.plant.validate().map_err(|e| Error::Config(format!("plant: {e}")))?;
        self.bench.validate()?;
        if self.pipeline.downsample == 0 {
            return Err(Error::Config("pipeline.downsample must be at least 1".into()));
        }
        if self.pipeline.dedup_eps.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::Config("pipeline.dedup_eps must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.evaluation.perturbation) {
            return Err(Error::Config("evaluation.perturbation must be in [0, 1)".into()));
        }
        if self.validate.horizon == 0 {
            return Err(Error::Config("validate.horizon must be at least 1".into()));
        }
        if self.compare.t_init.iter().chain([&self.simulate.t_init]).any(|t| !t.is_finite()) {
            return Err(Error::Config("initial temperatures must be finite".into()));
        }
        if self.controllers.hysteresis < 0.0 {
            return Err(Error::Config("controllers.hysteresis must be non-negative".into()));
        }
        Ok(())
    }
}
