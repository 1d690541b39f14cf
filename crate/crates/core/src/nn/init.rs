use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::{Tensor, LEAKY_SLOPE};
use crate::{seed, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitScheme {
    XavierUniform,
    KaimingUniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    Linear,
    LeakyRelu,
    LayerNorm,
    Add,
    Concat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    pub slope: f64,
}

impl LayerSpec {
    pub fn linear(in_dim: usize, out_dim: usize) -> Self {
        Self {
            kind: LayerKind::Linear,
            in_dim,
            out_dim,
            slope: LEAKY_SLOPE,
        }
    }

    pub fn layer_norm(dim: usize) -> Self {
        Self {
            kind: LayerKind::LayerNorm,
            in_dim: dim,
            out_dim: dim,
            slope: LEAKY_SLOPE,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.slope > 0.0 && self.slope < 1.0) {
            return Err(Error::Parameter(format!(
                "activation slope {} outside (0, 1)",
                self.slope
            )));
        }
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::Dimension(format!(
                "{:?} layer with zero width ({} -> {})",
                self.kind, self.in_dim, self.out_dim
            )));
        }
        if self.kind == LayerKind::LayerNorm && self.in_dim != self.out_dim {
            return Err(Error::Dimension("layer norm must preserve width".into()));
        }
        Ok(())
    }
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Bound of the He-uniform initializer for LeakyReLU-style activations with
/// gain sqrt(2).
pub fn kaiming_bound(fan_in: usize) -> f64 {
    (6.0 / fan_in as f64).sqrt()
}

/// Initial tensors for one layer.
///
/// Linear layers get `[weight (in x out), bias (1 x out)]` with the weight
/// drawn uniformly within the scheme's bound and a zero bias. Layer norm gets
/// `[gain = 1, bias = 0]`. Parameter-free kinds return nothing.
pub fn init_weights(spec: &LayerSpec, scheme: InitScheme, seed: u64) -> Result<Vec<Tensor>> {
    spec.validate()?;
    match spec.kind {
        LayerKind::Linear => {
            let bound = match scheme {
                InitScheme::XavierUniform => xavier_bound(spec.in_dim, spec.out_dim),
                InitScheme::KaimingUniform => kaiming_bound(spec.in_dim),
            };
            let mut rng = seed::rng(seed);
            let w = (0..spec.in_dim * spec.out_dim)
                .map(|_| rng.random_range(-bound..=bound))
                .collect();
            Ok(vec![
                Tensor::matrix(spec.in_dim, spec.out_dim, w)?,
                Tensor::zeros(vec![1, spec.out_dim]),
            ])
        }
        LayerKind::LayerNorm => Ok(vec![
            Tensor::full(vec![1, spec.out_dim], 1.0),
            Tensor::zeros(vec![1, spec.out_dim]),
        ]),
        LayerKind::LeakyRelu | LayerKind::Add | LayerKind::Concat => Ok(Vec::new()),
    }
}
