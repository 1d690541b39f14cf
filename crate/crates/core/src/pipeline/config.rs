use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::ablate::GnnOnlyConfig;
use crate::abm::{Engine, PredPreyParams, SchellingParams, TransitionMatrix};
use crate::files::{read_json, sha256_bytes, write_json};
use crate::gdn::{Architecture, ScheduleConfig, TrainConfig};
use crate::{Error, Result};

/// Shipped Schelling tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum XiPreset {
    Xi1,
    Xi2,
    Xi3,
}

impl XiPreset {
    pub fn value(self) -> f64 {
        match self {
            XiPreset::Xi1 => 0.625,
            XiPreset::Xi2 => 0.75,
            XiPreset::Xi3 => 0.875,
        }
    }
}

/// A tolerance given by preset name (`"xi2"`) or by value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Tolerance {
    Preset(XiPreset),
    Value(f64),
}

impl Tolerance {
    pub fn value(self) -> f64 {
        match self {
            Tolerance::Preset(p) => p.value(),
            Tolerance::Value(v) => v,
        }
    }
}

/// Shipped Predator-Prey transition matrices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PsiPreset {
    Psi1,
    Psi2,
    Psi3,
    Psi4,
}

impl PsiPreset {
    pub fn matrix(self) -> TransitionMatrix {
        let n = match self {
            PsiPreset::Psi1 => 1,
            PsiPreset::Psi2 => 2,
            PsiPreset::Psi3 => 3,
            PsiPreset::Psi4 => 4,
        };
        TransitionMatrix::preset(n).expect("presets 1-4 exist")
    }
}

/// A transition matrix given by preset name (`"psi1"`) or inline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Transitions {
    Preset(PsiPreset),
    Matrix(TransitionMatrix),
}

impl Transitions {
    pub fn matrix(&self) -> TransitionMatrix {
        match self {
            Transitions::Preset(p) => p.matrix(),
            Transitions::Matrix(m) => m.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case", deny_unknown_fields)]
pub enum AbmConfig {
    Schelling {
        grid: usize,
        tolerance: Tolerance,
        density: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_distance: Option<f64>,
        max_trials: usize,
    },
    #[serde(rename = "predprey")]
    PredPrey {
        grid: usize,
        transitions: Transitions,
        density: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        agents: Option<usize>,
    },
}

impl AbmConfig {
    pub fn schelling(grid: usize, tolerance: Tolerance) -> Self {
        let d = SchellingParams::default();
        AbmConfig::Schelling {
            grid,
            tolerance,
            density: d.density,
            max_distance: None,
            max_trials: d.max_trials,
        }
    }

    pub fn predprey(grid: usize, transitions: Transitions) -> Self {
        AbmConfig::PredPrey {
            grid,
            transitions,
            density: PredPreyParams::default().density,
            agents: None,
        }
    }

    /// The simulator, with `steps` and `seed` filled in.
    pub fn engine(&self, steps: usize, seed: u64) -> Result<Engine> {
        let e = match self {
            AbmConfig::Schelling {
                grid,
                tolerance,
                density,
                max_distance,
                max_trials,
            } => Engine::Schelling(SchellingParams {
                grid: *grid,
                tolerance: tolerance.value(),
                density: *density,
                steps,
                max_distance: *max_distance,
                max_trials: *max_trials,
                seed,
            }),
            AbmConfig::PredPrey {
                grid,
                transitions,
                density,
                agents,
            } => Engine::PredPrey(PredPreyParams {
                grid: *grid,
                transitions: transitions.matrix(),
                density: *density,
                agents: *agents,
                steps,
                seed,
            }),
        };
        e.validate()?;
        Ok(e)
    }
}

/// Which network the train stage fits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelChoice {
    #[default]
    Gdn,
    DiffusionOnly,
    GnnOnly,
}

impl ModelChoice {
    pub fn name(self) -> &'static str {
        match self {
            ModelChoice::Gdn => "gdn",
            ModelChoice::DiffusionOnly => "diffusion-only",
            ModelChoice::GnnOnly => "gnn-only",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RamificationConfig {
    /// Main-branch transitions T.
    pub steps: usize,
    /// Siblings per step R.
    pub branches: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingConfig {
    #[serde(default)]
    pub model: ModelChoice,
    pub architecture: Architecture,
    pub schedule: ScheduleConfig,
    pub epochs: usize,
    pub lr_diffusion: f64,
    pub lr_gnn: f64,
    /// Agents per mini-batch of the GNN-only regressor.
    pub gnn_only_batch: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_steps: Option<usize>,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            model: ModelChoice::Gdn,
            architecture: Architecture::wide(),
            schedule: ScheduleConfig::default(),
            epochs: t.epochs,
            lr_diffusion: t.lr_diffusion,
            lr_gnn: t.lr_gnn,
            gnn_only_batch: GnnOnlyConfig::default().batch,
            max_steps: None,
        }
    }
}

impl TrainingConfig {
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr_diffusion: self.lr_diffusion,
            lr_gnn: self.lr_gnn,
            seed,
            max_steps: self.max_steps,
        }
    }

    /// The GNN-only regressor trains with the GNN learning rate.
    pub fn gnn_only_config(&self, seed: u64) -> GnnOnlyConfig {
        GnnOnlyConfig {
            epochs: self.epochs,
            lr: self.lr_gnn,
            batch: self.gnn_only_batch,
            seed,
            max_steps: self.max_steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// States of the out-of-training ramification, start included.
    pub states: usize,
    /// Ground-truth siblings per evaluation state.
    pub branches: usize,
    /// Model draws per evaluation state.
    pub samples: usize,
    pub horizon: usize,
    pub runs: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            states: 25,
            branches: 500,
            samples: 500,
            horizon: 25,
            runs: 100,
        }
    }
}

/// Everything needed to reproduce one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub abm: AbmConfig,
    pub ramification: RamificationConfig,
    pub training: TrainingConfig,
    pub eval: EvalConfig,
    pub seed: u64,
    /// Output directory; relative paths resolve against the working
    /// directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

/// Names accepted by [`ExperimentConfig::preset`].
pub const PRESETS: [&str; 8] = ["xi1", "xi2", "xi3", "psi1", "psi2", "psi3", "psi4", "desk"];

impl ExperimentConfig {
    /// Full-scale settings: Schelling on a 51x51 grid, Predator-Prey on
    /// 32x32, T = 10, R = 500, 100 epochs.
    pub fn preset(name: &str) -> Result<Self> {
        let abm = match name {
            "xi1" => AbmConfig::schelling(51, Tolerance::Preset(XiPreset::Xi1)),
            "xi2" => AbmConfig::schelling(51, Tolerance::Preset(XiPreset::Xi2)),
            "xi3" => AbmConfig::schelling(51, Tolerance::Preset(XiPreset::Xi3)),
            "psi1" => AbmConfig::predprey(32, Transitions::Preset(PsiPreset::Psi1)),
            "psi2" => AbmConfig::predprey(32, Transitions::Preset(PsiPreset::Psi2)),
            "psi3" => AbmConfig::predprey(32, Transitions::Preset(PsiPreset::Psi3)),
            "psi4" => AbmConfig::predprey(32, Transitions::Preset(PsiPreset::Psi4)),
            "desk" => return Ok(Self::desk()),
            _ => {
                return Err(Error::Parameter(format!(
                    "unknown preset `{name}` (expected one of {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(Self {
            name: name.to_string(),
            abm,
            ramification: RamificationConfig {
                steps: 10,
                branches: 500,
            },
            training: TrainingConfig::default(),
            eval: EvalConfig::default(),
            seed: 0,
            output: None,
        })
    }

    /// Minutes-scale end-to-end run: Schelling on 15x15, T = 10, R = 50,
    /// 20 epochs of the narrow network.
    pub fn desk() -> Self {
        Self {
            name: "desk".into(),
            abm: AbmConfig::schelling(15, Tolerance::Preset(XiPreset::Xi2)),
            ramification: RamificationConfig {
                steps: 10,
                branches: 50,
            },
            training: TrainingConfig {
                architecture: Architecture::desk(),
                epochs: 20,
                lr_diffusion: 1e-3,
                lr_gnn: 2e-3,
                ..TrainingConfig::default()
            },
            eval: EvalConfig {
                states: 6,
                branches: 50,
                samples: 50,
                horizon: 10,
                runs: 10,
            },
            seed: 0,
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.abm.engine(self.ramification.steps, self.seed)?;
        self.training.architecture.validate()?;
        self.training.train_config(0).validate()?;
        crate::gdn::NoiseSchedule::new(self.training.schedule.clone())?;
        if self.ramification.branches == 0 {
            return Err(Error::Parameter("ramification needs at least one branch".into()));
        }
        if self.training.gnn_only_batch == 0 {
            return Err(Error::Parameter("gnn_only_batch must be positive".into()));
        }
        let e = &self.eval;
        if e.states < 2 || e.branches < 2 || e.samples == 0 || e.runs < 2 || e.horizon == 0 {
            return Err(Error::Parameter(
                "eval needs states >= 2, branches >= 2, runs >= 2 and positive samples and horizon".into(),
            ));
        }
        if self.output.as_ref().is_some_and(|p| p.as_os_str().is_empty()) {
            return Err(Error::Parameter("output directory is empty".into()));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Self = read_json(path)?;
        c.validate().map_err(|e| Error::format(path, e.to_string()))?;
        Ok(c)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    /// Digest of the canonical JSON form, output directory excluded.
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.output = None;
        sha256_bytes(&serde_json::to_vec(&c).expect("config serializes"))
    }
}
