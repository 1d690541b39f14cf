//! Baselines that each drop one half of the GDN.
//!
//! - Diffusion-only keeps the denoiser but conditions every agent on the
//!   flat concatenation of all agents' encodings; it is a [`GdnModel`] with
//!   [`Variant::DiffusionOnly`] and trains with [`crate::gdn::train`].
//! - GNN-only keeps the neighborhood aggregation and regresses the next full
//!   encoding directly, so it has no way to express more than one outcome.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::abm::SystemState;
use crate::encode::{build_graph, Aggregation, FeatureCodec};
use crate::gdn::{Architecture, Context, GdnModel, ScheduleConfig, TrainReport, TrainingSet, Variant};
use crate::nn::{adam_step, AdamState, InitScheme, Mlp, ParamSet, Tape};
use crate::ramify::RamificationDataset;
use crate::seed::{self, stream, Rng};
use crate::surrogate::Surrogate;
use crate::{Error, Result};

/// Diffusion model whose condition ignores the interaction graph.
pub fn diffusion_only(
    codec: FeatureCodec,
    arch: Architecture,
    schedule: ScheduleConfig,
    agents: usize,
    init_seed: u64,
) -> Result<GdnModel> {
    GdnModel::new(codec, arch, schedule, Variant::DiffusionOnly { agents }, init_seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnOnlySpec {
    pub codec: FeatureCodec,
    pub hidden: Vec<usize>,
    pub aggregation: Aggregation,
    pub init_seed: u64,
}

impl GnnOnlySpec {
    pub fn new(codec: FeatureCodec, init_seed: u64) -> Self {
        Self {
            aggregation: Aggregation::for_model(codec.model),
            codec,
            hidden: vec![32, 64, 128, 128, 64, 32],
            init_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GnnOnlyConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    pub seed: u64,
    #[serde(default)]
    pub max_steps: Option<usize>,
}

impl Default for GnnOnlyConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr: 2e-5,
            batch: 16,
            seed: 0,
            max_steps: None,
        }
    }
}

/// Deterministic next-state regressor on `[own encoding | neighbor
/// aggregate]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GnnOnlyModel {
    pub spec: GnnOnlySpec,
    pub params: ParamSet,
    mlp: Mlp,
}

impl GnnOnlyModel {
    pub fn new(spec: GnnOnlySpec) -> Result<Self> {
        spec.codec.check_layout()?;
        if spec.hidden.contains(&0) {
            return Err(Error::Parameter("regressor has an empty layer".into()));
        }
        let d = spec.codec.dim();
        let mut dims = vec![2 * d];
        dims.extend(&spec.hidden);
        dims.push(d);
        let mut params = ParamSet::new();
        let s = seed::derive(spec.init_seed, &[stream::WEIGHTS]);
        let mlp = params.mlp("head", &dims, InitScheme::KaimingUniform, s)?;
        Ok(Self { spec, params, mlp })
    }

    pub fn codec(&self) -> &FeatureCodec {
        &self.spec.codec
    }

    pub fn context(&self, state: &SystemState) -> Result<Context> {
        let codec = &self.spec.codec;
        if state.model != codec.model || state.grid != codec.grid {
            return Err(Error::Dimension(format!(
                "{:?} state on a {} grid given to a regressor for {:?} on {}",
                state.model, state.grid, codec.model, codec.grid
            )));
        }
        let z = codec.encode_state(state)?;
        let agg = build_graph(state).aggregate(&z, codec.dim(), self.spec.aggregation);
        Ok(Context {
            n: state.len(),
            z,
            agg: Some(agg),
        })
    }

    fn inputs(&self, ctx: &Context, rows: &[usize]) -> Vec<f64> {
        let d = self.spec.codec.dim();
        let agg = ctx.agg.as_ref().expect("regressor contexts carry aggregates");
        let mut x = Vec::with_capacity(rows.len() * 2 * d);
        for &i in rows {
            x.extend_from_slice(&ctx.z[i * d..(i + 1) * d]);
            x.extend_from_slice(&agg[i * d..(i + 1) * d]);
        }
        x
    }

    /// Raw `n x dim` predictions.
    pub fn predict(&self, ctx: &Context) -> Result<Vec<f64>> {
        let d = self.spec.codec.dim();
        let rows: Vec<usize> = (0..ctx.n).collect();
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape)?;
        let x = tape.constant(ctx.n, 2 * d, self.inputs(ctx, &rows))?;
        let y = self.mlp.forward(&mut tape, &p, x)?;
        Ok(tape.value(y).to_vec())
    }

    /// The decoded prediction for `state`.
    pub fn predict_state(&self, state: &SystemState) -> Result<SystemState> {
        let ctx = self.context(state)?;
        self.spec.codec.decode_state(state, &self.predict(&ctx)?)
    }

    fn batch_loss_and_grads(&self, ctx: &Context, rows: &[usize], target: &[f64]) -> Result<(f64, Vec<Vec<f64>>)> {
        let d = self.spec.codec.dim();
        let mut tape = Tape::new();
        let p = self.params.bind(&mut tape)?;
        let x = tape.constant(rows.len(), 2 * d, self.inputs(ctx, rows))?;
        let mut y = Vec::with_capacity(rows.len() * d);
        for &i in rows {
            y.extend_from_slice(&target[i * d..(i + 1) * d]);
        }
        let y = tape.constant(rows.len(), d, y)?;
        let pred = self.mlp.forward(&mut tape, &p, x)?;
        let loss = tape.mse(pred, y)?;
        let mut g = tape.backward(loss)?;
        Ok((tape.scalar(loss), p.collect(&mut g, &self.params)))
    }

    pub fn training_set(&self, groups: &[(&SystemState, &[SystemState])]) -> Result<TrainingSet> {
        let codec = self.spec.codec.clone();
        TrainingSet::build(groups, |s| self.context(s), |s| codec.encode_state(s))
    }
}

/// Mean-squared-error regression over shuffled mini-batches of
/// `(context, outcome, agent)` tuples. Each mini-batch is drawn from one
/// `(context, outcome)` pair so that its inputs share a graph.
pub fn train_gnn_only(model: &mut GnnOnlyModel, data: &TrainingSet, config: &GnnOnlyConfig) -> Result<TrainReport> {
    if config.batch == 0 || !(config.lr > 0.0) {
        return Err(Error::Parameter("regressor needs a positive batch and learning rate".into()));
    }
    let mut rng: Rng = seed::derive_rng(config.seed, &[stream::TRAIN]);
    let mut adam = AdamState::new(&model.params, config.lr);
    let mut batches: Vec<(u32, u32, Vec<usize>)> = Vec::new();
    for (k, outcomes) in data.targets.iter().enumerate() {
        let n = data.contexts[k].n;
        for r in 0..outcomes.len() {
            let mut ids: Vec<usize> = (0..n).collect();
            // Fixed split; shuffled per epoch below.
            ids.shuffle(&mut rng);
            for chunk in ids.chunks(config.batch) {
                batches.push((k as u32, r as u32, chunk.to_vec()));
            }
        }
    }
    if batches.is_empty() {
        return Err(Error::EmptyDataset("no regression tuples".into()));
    }
    let mut report = TrainReport {
        steps: 0,
        epochs: 0,
        losses: Vec::new(),
        epoch_means: Vec::new(),
    };
    'outer: for _ in 0..config.epochs {
        batches.shuffle(&mut rng);
        let (mut sum, mut count) = (0.0, 0usize);
        for (k, r, rows) in &batches {
            if config.max_steps.is_some_and(|m| report.steps >= m) {
                if count > 0 {
                    report.epoch_means.push(sum / count as f64);
                }
                break 'outer;
            }
            let (k, r) = (*k as usize, *r as usize);
            let (loss, grads) = model.batch_loss_and_grads(&data.contexts[k], rows, &data.targets[k][r])?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("regression loss {loss} at step {}", report.steps + 1)));
            }
            adam_step(&mut model.params, &grads, &mut adam)?;
            report.losses.push(loss);
            report.steps += 1;
            sum += loss;
            count += 1;
        }
        report.epochs += 1;
        report.epoch_means.push(sum / count.max(1) as f64);
    }
    Ok(report)
}

pub fn train_gnn_only_on(model: &mut GnnOnlyModel, dataset: &RamificationDataset, config: &GnnOnlyConfig) -> Result<TrainReport> {
    let data = model.training_set(&TrainingSet::groups(dataset))?;
    train_gnn_only(model, &data, config)
}

impl Surrogate for GnnOnlyModel {
    fn label(&self) -> String {
        "gnn-only".into()
    }

    fn sample_next(&self, state: &SystemState, samples: usize, _rng: &mut Rng) -> Result<Vec<SystemState>> {
        let next = self.predict_state(state)?;
        Ok(vec![next; samples])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abm::{Agent, AgentType, ModelKind, Phase};

    fn state() -> SystemState {
        let agents = (0..6)
            .map(|i| Agent {
                id: i,
                kind: if i % 2 == 0 { AgentType::Prey } else { AgentType::Predator },
                phase: Some(Phase::Alive),
                pos: Some((i, (2 * i) % 6)),
                parent: None,
            })
            .collect();
        SystemState {
            model: ModelKind::PredPrey,
            grid: 6,
            t: 0,
            agents,
        }
    }

    fn small(seed_: u64) -> GnnOnlyModel {
        let mut spec = GnnOnlySpec::new(FeatureCodec::for_model(ModelKind::PredPrey, 6), seed_);
        spec.hidden = vec![16, 16];
        GnnOnlyModel::new(spec).unwrap()
    }

    #[test]
    fn repeated_predictions_are_identical() {
        let m = small(1);
        let s = state();
        let ctx = m.context(&s).unwrap();
        let a = m.predict(&ctx).unwrap();
        let b = m.predict(&ctx).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let samples = m.sample_next(&s, 3, &mut seed::rng(0)).unwrap();
        assert!(samples.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn learns_a_constant_target() {
        let mut m = small(2);
        let s = state();
        let mut target = s.clone();
        target.t = 1;
        for a in &mut target.agents {
            a.phase = Some(Phase::Pregnant);
        }
        let outcomes = vec![target.clone()];
        let data = m.training_set(&[(&s, outcomes.as_slice())]).unwrap();
        let cfg = GnnOnlyConfig {
            epochs: 3000,
            lr: 3e-3,
            batch: 6,
            seed: 1,
            max_steps: None,
        };
        let r = train_gnn_only(&mut m, &data, &cfg).unwrap();
        assert!(*r.losses.last().unwrap() < 1e-4, "final loss {}", r.losses.last().unwrap());
        assert_eq!(m.predict_state(&s).unwrap(), target);
    }

    #[test]
    fn two_point_targets_collapse_to_the_mean() {
        let mut m = small(3);
        let s = state();
        let mut a = s.clone();
        a.t = 1;
        let mut b = a.clone();
        for ag in &mut b.agents {
            ag.phase = Some(Phase::Pregnant);
        }
        let outcomes = vec![a, b];
        let data = m.training_set(&[(&s, outcomes.as_slice())]).unwrap();
        let cfg = GnnOnlyConfig {
            epochs: 3000,
            lr: 3e-3,
            batch: 6,
            seed: 4,
            max_steps: None,
        };
        train_gnn_only(&mut m, &data, &cfg).unwrap();
        let pred = m.predict(&m.context(&s).unwrap()).unwrap();
        let d = m.codec().dim();
        // Phase one-hot sits at columns 2..6: alive (3) and pregnant (4)
        // each get about half the mass.
        for i in 0..6 {
            let row = &pred[i * d..(i + 1) * d];
            assert!((row[3] - 0.5).abs() < 0.1 && (row[4] - 0.5).abs() < 0.1, "{row:?}");
        }
    }

    #[test]
    fn diffusion_only_never_builds_a_graph() {
        let before = crate::encode::graph_builds();
        let m = diffusion_only(
            FeatureCodec::for_model(ModelKind::PredPrey, 6),
            Architecture {
                gnn_hidden: vec![4],
                embed_dim: 4,
                cond_dim: 4,
                time_dim: 4,
                denoiser_hidden: vec![4],
                aggregation: None,
            },
            ScheduleConfig {
                tau_max: 3,
                ..ScheduleConfig::default()
            },
            6,
            0,
        )
        .unwrap();
        let s = state();
        let outcomes = vec![s.clone()];
        let data = TrainingSet::for_model(&m, &[(&s, outcomes.as_slice())]).unwrap();
        let mut m2 = m.clone();
        crate::gdn::train_on(
            &mut m2,
            &data,
            &crate::gdn::TrainConfig {
                max_steps: Some(3),
                ..Default::default()
            },
        )
        .unwrap();
        m2.sample_next(&s, 2, &mut seed::rng(0)).unwrap();
        assert_eq!(crate::encode::graph_builds(), before);
    }
}
