use serde::{Deserialize, Serialize};

use super::embed::sinusoidal_embedding;
use super::schedule::{NoiseSchedule, ScheduleConfig};
use crate::abm::SystemState;
use crate::encode::{build_graph, Aggregation, FeatureCodec};
use crate::nn::{BoundParams, InitScheme, LayerNorm, Linear, Mlp, ParamSet, Tape, Var, LEAKY_SLOPE};
use crate::{seed, Error, Result};

/// Layer widths of the embedder and the denoiser.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    /// Hidden widths of the message-passing MLP.
    pub gnn_hidden: Vec<usize>,
    /// Width of the per-agent graph embedding.
    pub embed_dim: usize,
    /// Width of the condition vector.
    pub cond_dim: usize,
    /// Width of the sinusoidal diffusion-step embedding.
    pub time_dim: usize,
    /// Hidden widths of the denoiser trunk, one condition block each.
    pub denoiser_hidden: Vec<usize>,
    /// Neighbor reduction; `None` picks the model default.
    #[serde(default)]
    pub aggregation: Option<Aggregation>,
}

impl Architecture {
    /// Full-size network.
    pub fn wide() -> Self {
        Self {
            gnn_hidden: vec![32, 64, 128],
            embed_dim: 256,
            cond_dim: 256,
            time_dim: 256,
            denoiser_hidden: vec![128, 256, 1024, 1024, 256, 128],
            aggregation: None,
        }
    }

    /// A narrow network that trains in minutes on one CPU core.
    pub fn desk() -> Self {
        Self {
            gnn_hidden: vec![32, 32],
            embed_dim: 32,
            cond_dim: 32,
            time_dim: 32,
            denoiser_hidden: vec![64, 64, 64],
            aggregation: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let widths = [self.embed_dim, self.cond_dim, self.time_dim];
        if widths.contains(&0)
            || self.gnn_hidden.contains(&0)
            || self.denoiser_hidden.is_empty()
            || self.denoiser_hidden.contains(&0)
        {
            return Err(Error::Parameter("architecture has an empty layer".into()));
        }
        if self.time_dim % 2 != 0 {
            return Err(Error::Parameter(format!(
                "time embedding width {} must be even",
                self.time_dim
            )));
        }
        Ok(())
    }
}

/// Which conditioning the model uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Variant {
    /// Per-agent graph embedding from a message-passing network.
    Gdn,
    /// No graph; one condition from the flat concatenation of every agent's
    /// encoding in id order. Fixed to `agents` agents.
    DiffusionOnly { agents: usize },
}

/// Encoded conditioning inputs for one system state.
#[derive(Debug, Clone, PartialEq)]
pub struct Context {
    pub n: usize,
    /// `n x dim` full encodings.
    pub z: Vec<f64>,
    /// `n x dim` neighbor aggregates; absent for the diffusion-only variant.
    pub agg: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
struct Block {
    norm: Option<LayerNorm>,
    lin1: Linear,
    cond: Linear,
    lin2: Linear,
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    gnn: Option<Mlp>,
    time: Mlp,
    state: Mlp,
    graph: Mlp,
    blocks: Vec<Block>,
    out: Linear,
}

/// Everything needed to rebuild a model's parameter layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub codec: FeatureCodec,
    pub arch: Architecture,
    pub schedule: ScheduleConfig,
    pub variant: Variant,
    pub aggregation: Aggregation,
    pub init_seed: u64,
}

/// Graph embedder (`gnn`) plus conditional noise predictor (`denoiser`).
#[derive(Debug, Clone, PartialEq)]
pub struct GdnModel {
    pub spec: ModelSpec,
    pub schedule: NoiseSchedule,
    pub gnn: ParamSet,
    pub denoiser: ParamSet,
    layout: Layout,
}

impl GdnModel {
    pub fn new(
        codec: FeatureCodec,
        arch: Architecture,
        schedule: ScheduleConfig,
        variant: Variant,
        init_seed: u64,
    ) -> Result<Self> {
        arch.validate()?;
        codec.check_layout()?;
        if let Variant::DiffusionOnly { agents: 0 } = variant {
            return Err(Error::Parameter("diffusion-only model over zero agents".into()));
        }
        let aggregation = arch.aggregation.unwrap_or(Aggregation::for_model(codec.model));
        let spec = ModelSpec {
            schedule: schedule.clone(),
            codec,
            arch,
            variant,
            aggregation,
            init_seed,
        };
        let schedule = NoiseSchedule::new(schedule)?;
        let (gnn, denoiser, layout) = Self::build(&spec)?;
        Ok(Self {
            spec,
            schedule,
            gnn,
            denoiser,
            layout,
        })
    }

    pub fn from_spec(spec: ModelSpec) -> Result<Self> {
        let mut m = Self::new(
            spec.codec.clone(),
            spec.arch.clone(),
            spec.schedule.clone(),
            spec.variant,
            spec.init_seed,
        )?;
        m.spec.aggregation = spec.aggregation;
        Ok(m)
    }

    fn build(spec: &ModelSpec) -> Result<(ParamSet, ParamSet, Layout)> {
        let a = &spec.arch;
        let (d, dyn_d, c) = (spec.codec.dim(), spec.codec.dyn_dim(), a.cond_dim);
        let s = |k: u64| seed::derive(spec.init_seed, &[seed::stream::WEIGHTS, k]);
        let kaiming = InitScheme::KaimingUniform;
        let xavier = InitScheme::XavierUniform;

        let mut gnn = ParamSet::new();
        let (gnn_mlp, graph_in) = match spec.variant {
            Variant::Gdn => {
                let mut dims = vec![2 * d];
                dims.extend(&a.gnn_hidden);
                dims.push(a.embed_dim);
                (Some(gnn.mlp("gnn", &dims, kaiming, s(0))?), a.embed_dim)
            }
            Variant::DiffusionOnly { agents } => (None, agents * d),
        };

        let mut den = ParamSet::new();
        let time = den.mlp("cond.time", &[a.time_dim, c, c], xavier, s(1))?;
        let state = den.mlp("cond.state", &[d, c, c, c], xavier, s(2))?;
        let graph = den.mlp("cond.graph", &[graph_in, c, c, c], xavier, s(3))?;
        let mut blocks = Vec::with_capacity(a.denoiser_hidden.len());
        let mut width = dyn_d;
        for (k, &h) in a.denoiser_hidden.iter().enumerate() {
            let name = format!("block{k}");
            let bs = |j: u64| seed::derive(s(4), &[k as u64, j]);
            blocks.push(Block {
                norm: if k == 0 {
                    None
                } else {
                    Some(den.layer_norm(&format!("{name}.norm"), width)?)
                },
                lin1: den.linear(&format!("{name}.lin1"), width, h, xavier, bs(0))?,
                cond: den.linear(&format!("{name}.cond"), c, h, xavier, bs(1))?,
                lin2: den.linear(&format!("{name}.lin2"), h, h, xavier, bs(2))?,
            });
            width = h;
        }
        let out = den.linear("out", width, dyn_d, xavier, s(5))?;
        Ok((
            gnn,
            den,
            Layout {
                gnn: gnn_mlp,
                time,
                state,
                graph,
                blocks,
                out,
            },
        ))
    }

    pub fn codec(&self) -> &FeatureCodec {
        &self.spec.codec
    }

    pub fn variant(&self) -> Variant {
        self.spec.variant
    }

    /// Encodes `state` and, for the graph variant, aggregates its neighbors.
    pub fn context(&self, state: &SystemState) -> Result<Context> {
        let codec = &self.spec.codec;
        if state.model != codec.model || state.grid != codec.grid {
            return Err(Error::Dimension(format!(
                "{:?} state on a {} grid given to a model for {:?} on {}",
                state.model, state.grid, codec.model, codec.grid
            )));
        }
        let z = codec.encode_state(state)?;
        let agg = match self.spec.variant {
            Variant::Gdn => Some(build_graph(state).aggregate(&z, codec.dim(), self.spec.aggregation)),
            Variant::DiffusionOnly { agents } => {
                if state.len() != agents {
                    return Err(Error::Dimension(format!(
                        "model conditions on {agents} agents, state has {}",
                        state.len()
                    )));
                }
                None
            }
        };
        Ok(Context {
            n: state.len(),
            z,
            agg,
        })
    }

    /// Per-agent graph embedding, `n x embed_dim`, on a tape.
    pub(crate) fn embed_var(
        &self,
        tape: &mut Tape<'_>,
        gp: &BoundParams,
        ctx: &Context,
    ) -> Result<Var> {
        let (Some(gnn), Some(agg)) = (&self.layout.gnn, &ctx.agg) else {
            return Err(Error::Parameter("model has no graph embedder".into()));
        };
        let d = self.spec.codec.dim();
        let z = tape.constant(ctx.n, d, ctx.z.clone())?;
        let a = tape.constant(ctx.n, d, agg.clone())?;
        let input = tape.concat_cols(z, a)?;
        gnn.forward(tape, gp, input)
    }

    /// State and graph terms of the condition, `n x cond_dim`.
    pub(crate) fn condition_base(
        &self,
        tape: &mut Tape<'_>,
        gp: &BoundParams,
        dp: &BoundParams,
        ctx: &Context,
    ) -> Result<Var> {
        let d = self.spec.codec.dim();
        if ctx.z.len() != ctx.n * d {
            return Err(Error::Dimension(format!(
                "context holds {} values for {} agents of width {d}",
                ctx.z.len(),
                ctx.n
            )));
        }
        let z = tape.constant(ctx.n, d, ctx.z.clone())?;
        let s = self.layout.state.forward(tape, dp, z)?;
        let g = match self.spec.variant {
            Variant::Gdn => {
                let e = self.embed_var(tape, gp, ctx)?;
                self.layout.graph.forward(tape, dp, e)?
            }
            Variant::DiffusionOnly { .. } => {
                let flat = tape.constant(1, ctx.n * d, ctx.z.clone())?;
                let g = self.layout.graph.forward(tape, dp, flat)?;
                tape.tile_rows(g, ctx.n)
            }
        };
        tape.add(s, g)
    }

    /// Diffusion-step term of the condition, `1 x cond_dim`.
    pub(crate) fn time_term(&self, tape: &mut Tape<'_>, dp: &BoundParams, tau: usize) -> Result<Var> {
        let dim = self.spec.arch.time_dim;
        let e = tape.constant(1, dim, sinusoidal_embedding(tau as f64, dim)?)?;
        self.layout.time.forward(tape, dp, e)
    }

    /// Noise prediction for `reps * n` latent rows laid out sample-major
    /// (row `s * n + i` belongs to agent `i`), given the `n x cond_dim`
    /// condition.
    pub(crate) fn eps_var(
        &self,
        tape: &mut Tape<'_>,
        dp: &BoundParams,
        cond: Var,
        x: Var,
        reps: usize,
    ) -> Result<Var> {
        let act_c = tape.leaky_relu(cond, LEAKY_SLOPE);
        let mut h = x;
        for b in &self.layout.blocks {
            let input = match &b.norm {
                Some(norm) => norm.forward(tape, dp, h)?,
                None => h,
            };
            let h1 = b.lin1.forward(tape, dp, input)?;
            let cp = b.cond.forward(tape, dp, act_c)?;
            let cp = tape.tile_rows(cp, reps);
            let u = tape.add(h1, cp)?;
            let u = tape.leaky_relu(u, LEAKY_SLOPE);
            let v = b.lin2.forward(tape, dp, u)?;
            h = tape.add(h1, v)?;
        }
        let h = tape.leaky_relu(h, LEAKY_SLOPE);
        self.layout.out.forward(tape, dp, h)
    }

    /// Per-agent graph embedding, `n x embed_dim`.
    pub fn embed(&self, ctx: &Context) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let gp = self.gnn.bind(&mut tape)?;
        let e = self.embed_var(&mut tape, &gp, ctx)?;
        Ok(tape.value(e).to_vec())
    }

    /// Full condition vectors at diffusion step `tau`, `n x cond_dim`.
    pub fn condition(&self, ctx: &Context, tau: usize) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let gp = self.gnn.bind(&mut tape)?;
        let dp = self.denoiser.bind(&mut tape)?;
        let base = self.condition_base(&mut tape, &gp, &dp, ctx)?;
        let t = self.time_term(&mut tape, &dp, tau)?;
        let c = tape.add_row(base, t)?;
        Ok(tape.value(c).to_vec())
    }

    /// Noise prediction for `n x dyn_dim` latents `x` at step `tau`.
    pub fn predict_eps(&self, ctx: &Context, x: &[f64], tau: usize) -> Result<Vec<f64>> {
        let base = self.condition_base_values(ctx)?;
        self.eps_from_base(&base, ctx.n, x, tau)
    }

    pub(crate) fn condition_base_values(&self, ctx: &Context) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let gp = self.gnn.bind(&mut tape)?;
        let dp = self.denoiser.bind(&mut tape)?;
        let base = self.condition_base(&mut tape, &gp, &dp, ctx)?;
        Ok(tape.value(base).to_vec())
    }

    /// Noise prediction from a precomputed condition base; `x` may hold any
    /// whole number of `n`-agent samples.
    pub(crate) fn eps_from_base(&self, base: &[f64], n: usize, x: &[f64], tau: usize) -> Result<Vec<f64>> {
        let dyn_d = self.spec.codec.dyn_dim();
        if n == 0 || x.len() % (n * dyn_d) != 0 {
            return Err(Error::Dimension(format!(
                "{} latent values do not tile {n} agents of width {dyn_d}",
                x.len()
            )));
        }
        let reps = x.len() / (n * dyn_d);
        let mut tape = Tape::new();
        let dp = self.denoiser.bind(&mut tape)?;
        let b = tape.constant(n, self.spec.arch.cond_dim, base.to_vec())?;
        let t = self.time_term(&mut tape, &dp, tau)?;
        let c = tape.add_row(b, t)?;
        let xv = tape.constant(reps * n, dyn_d, x.to_vec())?;
        let e = self.eps_var(&mut tape, &dp, c, xv, reps)?;
        Ok(tape.value(e).to_vec())
    }

    /// Denoising loss on one batch and its gradients for the embedder and
    /// the denoiser, in parameter order.
    pub fn loss_and_grads(
        &self,
        ctx: &Context,
        x_tau: &[f64],
        eps: &[f64],
        tau: usize,
    ) -> Result<(f64, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let dyn_d = self.spec.codec.dyn_dim();
        let mut tape = Tape::new();
        let gp = self.gnn.bind(&mut tape)?;
        let dp = self.denoiser.bind(&mut tape)?;
        let base = self.condition_base(&mut tape, &gp, &dp, ctx)?;
        let t = self.time_term(&mut tape, &dp, tau)?;
        let c = tape.add_row(base, t)?;
        let x = tape.constant(ctx.n, dyn_d, x_tau.to_vec())?;
        let target = tape.constant(ctx.n, dyn_d, eps.to_vec())?;
        let pred = self.eps_var(&mut tape, &dp, c, x, 1)?;
        let loss = tape.mse(pred, target)?;
        let mut grads = tape.backward(loss)?;
        Ok((
            tape.scalar(loss),
            gp.collect(&mut grads, &self.gnn),
            dp.collect(&mut grads, &self.denoiser),
        ))
    }

    /// Mutable parameter access for tests and checkpoint restore.
    pub fn params_mut(&mut self) -> (&mut ParamSet, &mut ParamSet) {
        (&mut self.gnn, &mut self.denoiser)
    }
}
