use std::collections::HashMap;

use super::{init_weights, Gradients, InitScheme, LayerSpec, Tape, Tensor, Var};
use crate::{seed, Error, Result};

/// Index of a tensor inside a [`ParamSet`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry {
    pub name: String,
    pub tensor: Tensor,
    /// How the tensor was initialized, when it was drawn rather than set.
    pub init: Option<(InitScheme, u64)>,
}

/// Named, ordered collection of trainable tensors.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    entries: Vec<ParamEntry>,
    by_name: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a tensor. Names must be unique within the set.
    pub fn push(&mut self, name: &str, tensor: Tensor, init: Option<(InitScheme, u64)>) -> ParamId {
        assert!(
            !self.by_name.contains_key(name),
            "duplicate parameter name `{name}`"
        );
        self.by_name.insert(name.to_string(), self.entries.len());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            tensor,
            init,
        });
        ParamId(self.entries.len() - 1)
    }

    pub fn linear(
        &mut self,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        scheme: InitScheme,
        seed: u64,
    ) -> Result<Linear> {
        let mut t = init_weights(&LayerSpec::linear(in_dim, out_dim), scheme, seed)?.into_iter();
        let (w, b) = (t.next().expect("weight"), t.next().expect("bias"));
        Ok(Linear {
            weight: self.push(&format!("{name}.weight"), w, Some((scheme, seed))),
            bias: self.push(&format!("{name}.bias"), b, None),
            in_dim,
            out_dim,
        })
    }

    pub fn layer_norm(&mut self, name: &str, dim: usize) -> Result<LayerNorm> {
        let mut t = init_weights(&LayerSpec::layer_norm(dim), InitScheme::XavierUniform, 0)?
            .into_iter();
        let (g, b) = (t.next().expect("gain"), t.next().expect("bias"));
        Ok(LayerNorm {
            gain: self.push(&format!("{name}.gain"), g, None),
            bias: self.push(&format!("{name}.bias"), b, None),
            dim,
        })
    }

    /// Stack of linear layers with widths `dims[0] -> dims[1] -> ...`; layer
    /// `i` is seeded with `derive(seed, [i])`.
    pub fn mlp(&mut self, name: &str, dims: &[usize], scheme: InitScheme, seed: u64) -> Result<Mlp> {
        if dims.len() < 2 {
            return Err(Error::Dimension(format!(
                "mlp `{name}` needs at least input and output widths"
            )));
        }
        let layers = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                self.linear(
                    &format!("{name}.{i}"),
                    w[0],
                    w[1],
                    scheme,
                    seed::derive(seed, &[i as u64]),
                )
            })
            .collect::<Result<_>>()?;
        Ok(Mlp { layers })
    }

    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.len()).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.by_name.get(name).map(|&i| &self.entries[i].tensor)
    }

    pub fn tensor(&self, id: ParamId) -> &Tensor {
        &self.entries[id.0].tensor
    }

    pub(crate) fn values_mut_at(&mut self, i: usize) -> &mut [f64] {
        self.entries[i].tensor.values_mut()
    }

    /// Overwrites a tensor's values by name (checkpoint restore).
    pub fn set_values(&mut self, name: &str, shape: &[usize], values: Vec<f64>) -> Result<()> {
        let i = *self
            .by_name
            .get(name)
            .ok_or_else(|| Error::Parameter(format!("unknown parameter `{name}`")))?;
        let entry = &mut self.entries[i];
        if entry.tensor.shape() != shape {
            return Err(Error::Dimension(format!(
                "parameter `{name}` has shape {:?}, stored {:?}",
                entry.tensor.shape(),
                shape
            )));
        }
        entry.tensor = Tensor::new(shape.to_vec(), values)?;
        Ok(())
    }

    /// Places every tensor on the tape as a trainable leaf.
    pub fn bind<'p>(&'p self, tape: &mut Tape<'p>) -> Result<BoundParams> {
        let vars = self
            .entries
            .iter()
            .map(|e| tape.param(&e.tensor))
            .collect::<Result<_>>()?;
        Ok(BoundParams { vars })
    }
}

/// Tape handles for one [`ParamSet`], indexed by [`ParamId`].
#[derive(Debug, Clone)]
pub struct BoundParams {
    vars: Vec<Var>,
}

impl BoundParams {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    /// Gradients in parameter order, zero where nothing flowed.
    pub fn collect(&self, grads: &mut Gradients, params: &ParamSet) -> Vec<Vec<f64>> {
        self.vars
            .iter()
            .zip(params.entries())
            .map(|(v, e)| grads.take(*v, e.tensor.len()))
            .collect()
    }
}

/// `y = x W + b` with `W` stored as `in x out`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Linear {
    pub fn forward(&self, tape: &mut Tape<'_>, p: &BoundParams, x: Var) -> Result<Var> {
        let y = tape.matmul(x, p.var(self.weight))?;
        tape.add_row(y, p.var(self.bias))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub dim: usize,
}

impl LayerNorm {
    pub fn forward(&self, tape: &mut Tape<'_>, p: &BoundParams, x: Var) -> Result<Var> {
        tape.layer_norm(x, p.var(self.gain), p.var(self.bias), super::LAYER_NORM_EPS)
    }
}

/// Linear layers with a LeakyReLU between consecutive layers (none after the
/// last).
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    pub fn in_dim(&self) -> usize {
        self.layers[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].out_dim
    }

    pub fn forward(&self, tape: &mut Tape<'_>, p: &BoundParams, x: Var) -> Result<Var> {
        let mut h = x;
        for (i, layer) in self.layers.iter().enumerate() {
            if i > 0 {
                h = tape.leaky_relu(h, super::LEAKY_SLOPE);
            }
            h = layer.forward(tape, p, h)?;
        }
        Ok(h)
    }
}
