//! Versioned JSON container for trained models.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ablate::{GnnOnlyModel, GnnOnlySpec};
use crate::abm::SystemState;
use crate::encode::FeatureCodec;
use crate::files::{read_json, write_json};
use crate::gdn::{GdnModel, ModelSpec, Variant};
use crate::nn::ParamSet;
use crate::seed::Rng;
use crate::surrogate::Surrogate;
use crate::{Error, Result};

const FORMAT: &str = "gdn-lab-checkpoint";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

fn records(p: &ParamSet) -> Vec<TensorRecord> {
    p.entries()
        .iter()
        .map(|e| TensorRecord {
            name: e.name.clone(),
            shape: e.tensor.shape().to_vec(),
            values: e.tensor.values().to_vec(),
        })
        .collect()
}

fn restore(p: &mut ParamSet, recs: Vec<TensorRecord>, path: &Path) -> Result<()> {
    if recs.len() != p.len() {
        return Err(Error::format(
            path,
            format!("{} tensors stored, model has {}", recs.len(), p.len()),
        ));
    }
    for r in recs {
        p.set_values(&r.name, &r.shape, r.values)
            .map_err(|e| Error::format(path, e.to_string()))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ModelRecord {
    /// The GDN or its diffusion-only ablation (see `spec.variant`).
    Diffusion {
        spec: ModelSpec,
        gnn: Vec<TensorRecord>,
        denoiser: Vec<TensorRecord>,
    },
    GnnOnly {
        spec: GnnOnlySpec,
        params: Vec<TensorRecord>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    /// `gdn`, `diffusion-only` or `gnn-only`.
    pub model_kind: String,
    /// Digest of the training configuration and data the weights came from.
    pub train_fingerprint: String,
    pub model: ModelRecord,
}

/// A loaded model of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel {
    Diffusion(GdnModel),
    GnnOnly(GnnOnlyModel),
}

impl TrainedModel {
    pub fn codec(&self) -> &FeatureCodec {
        match self {
            TrainedModel::Diffusion(m) => m.codec(),
            TrainedModel::GnnOnly(m) => m.codec(),
        }
    }
}

impl Surrogate for TrainedModel {
    fn label(&self) -> String {
        match self {
            TrainedModel::Diffusion(m) => m.label(),
            TrainedModel::GnnOnly(m) => m.label(),
        }
    }

    fn sample_next(&self, state: &SystemState, samples: usize, rng: &mut Rng) -> Result<Vec<SystemState>> {
        match self {
            TrainedModel::Diffusion(m) => m.sample_next(state, samples, rng),
            TrainedModel::GnnOnly(m) => m.sample_next(state, samples, rng),
        }
    }
}

impl Checkpoint {
    pub fn new(model: &TrainedModel, train_fingerprint: &str) -> Self {
        let (kind, record) = match model {
            TrainedModel::Diffusion(m) => (
                match m.variant() {
                    Variant::Gdn => "gdn",
                    Variant::DiffusionOnly { .. } => "diffusion-only",
                },
                ModelRecord::Diffusion {
                    spec: m.spec.clone(),
                    gnn: records(&m.gnn),
                    denoiser: records(&m.denoiser),
                },
            ),
            TrainedModel::GnnOnly(m) => (
                "gnn-only",
                ModelRecord::GnnOnly {
                    spec: m.spec.clone(),
                    params: records(&m.params),
                },
            ),
        };
        Self {
            format: FORMAT.into(),
            version: VERSION,
            model_kind: kind.into(),
            train_fingerprint: train_fingerprint.into(),
            model: record,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let c: Self = read_json(path)?;
        if c.format != FORMAT || c.version != VERSION {
            return Err(Error::format(
                path,
                format!("unsupported checkpoint {} v{}", c.format, c.version),
            ));
        }
        Ok(c)
    }

    /// Rebuilds the model and restores its weights.
    pub fn into_model(self, path: &Path) -> Result<TrainedModel> {
        let check_codec = |codec: &FeatureCodec| {
            if *codec != FeatureCodec::for_model(codec.model, codec.grid) {
                return Err(Error::format(path, "codec does not match the built-in feature layout"));
            }
            Ok(())
        };
        let model = match self.model {
            ModelRecord::Diffusion { spec, gnn, denoiser } => {
                check_codec(&spec.codec)?;
                let mut m = GdnModel::from_spec(spec).map_err(|e| Error::format(path, e.to_string()))?;
                restore(&mut m.gnn, gnn, path)?;
                restore(&mut m.denoiser, denoiser, path)?;
                TrainedModel::Diffusion(m)
            }
            ModelRecord::GnnOnly { spec, params } => {
                check_codec(&spec.codec)?;
                let mut m = GnnOnlyModel::new(spec).map_err(|e| Error::format(path, e.to_string()))?;
                restore(&mut m.params, params, path)?;
                TrainedModel::GnnOnly(m)
            }
        };
        let kind = match &model {
            TrainedModel::Diffusion(m) if m.variant() == Variant::Gdn => "gdn",
            TrainedModel::Diffusion(_) => "diffusion-only",
            TrainedModel::GnnOnly(_) => "gnn-only",
        };
        if kind != self.model_kind {
            return Err(Error::format(
                path,
                format!("tagged `{}` but holds a `{kind}` model", self.model_kind),
            ));
        }
        Ok(model)
    }
}

pub fn save_model(path: &Path, model: &TrainedModel, train_fingerprint: &str) -> Result<()> {
    Checkpoint::new(model, train_fingerprint).save(path)
}

pub fn load_model(path: &Path) -> Result<TrainedModel> {
    Checkpoint::load(path)?.into_model(path)
}
