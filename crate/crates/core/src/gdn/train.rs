use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::model::{Context, GdnModel};
use super::sample::gaussian;
use crate::abm::SystemState;
use crate::nn::{adam_step, AdamState};
use crate::ramify::RamificationDataset;
use crate::seed::{self, stream, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_diffusion: f64,
    pub lr_gnn: f64,
    pub seed: u64,
    /// Stops early after this many optimizer steps when set.
    #[serde(default)]
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            lr_diffusion: 1e-5,
            lr_gnn: 2e-5,
            seed: 0,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, lr) in [("lr_diffusion", self.lr_diffusion), ("lr_gnn", self.lr_gnn)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Parameter(format!("{name} must be positive, got {lr}")));
            }
        }
        Ok(())
    }
}

/// Conditioning contexts with their encoded successor outcomes.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub contexts: Vec<Context>,
    /// `targets[k][r]` is an encoded target for `contexts[k]`: `n x width`
    /// rows of dynamic features (or full encodings, for regressors).
    pub targets: Vec<Vec<Vec<f64>>>,
}

impl TrainingSet {
    /// One group per conditioning state, outcomes encoded with `encode`.
    pub fn build<C, E>(groups: &[(&SystemState, &[SystemState])], mut context: C, mut encode: E) -> Result<Self>
    where
        C: FnMut(&SystemState) -> Result<Context>,
        E: FnMut(&SystemState) -> Result<Vec<f64>>,
    {
        let mut contexts = Vec::with_capacity(groups.len());
        let mut targets = Vec::with_capacity(groups.len());
        for (cond, outcomes) in groups {
            if outcomes.is_empty() {
                continue;
            }
            contexts.push(context(cond)?);
            targets.push(outcomes.iter().map(&mut encode).collect::<Result<_>>()?);
        }
        if contexts.is_empty() {
            return Err(Error::EmptyDataset("no conditioning state has outcomes".into()));
        }
        Ok(Self { contexts, targets })
    }

    /// Groups of a ramification: `main[t]` with its siblings.
    pub fn groups(dataset: &RamificationDataset) -> Vec<(&SystemState, &[SystemState])> {
        dataset.siblings.iter().enumerate().map(|(t, s)| (&dataset.main[t], s.as_slice())).collect()
    }

    pub fn for_model(model: &GdnModel, groups: &[(&SystemState, &[SystemState])]) -> Result<Self> {
        let codec = model.codec().clone();
        Self::build(groups, |s| model.context(s), |s| codec.encode_dynamic_state(s))
    }

    pub fn from_dataset(model: &GdnModel, dataset: &RamificationDataset) -> Result<Self> {
        Self::for_model(model, &Self::groups(dataset))
    }

    /// Total number of (context, outcome) pairs.
    pub fn len(&self) -> usize {
        self.targets.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    /// Uniform context, then a uniform outcome of that context.
    pub fn sample(&self, rng: &mut Rng) -> (usize, usize) {
        let k = rng.random_range(0..self.contexts.len());
        (k, rng.random_range(0..self.targets[k].len()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: usize,
    pub epochs: usize,
    pub losses: Vec<f64>,
    pub epoch_means: Vec<f64>,
}

/// Optimizer state for one model.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub adam_denoiser: AdamState,
    pub adam_gnn: AdamState,
    rng: Rng,
}

impl Trainer {
    pub fn new(model: &GdnModel, config: &TrainConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            adam_denoiser: AdamState::new(&model.denoiser, config.lr_diffusion),
            adam_gnn: AdamState::new(&model.gnn, config.lr_gnn),
            rng: seed::derive_rng(config.seed, &[stream::TRAIN]),
        })
    }

    /// One denoising step on the batch of all agents of `ctx`: a single
    /// noise level for the batch, fresh Gaussian noise per agent. The
    /// denoiser is updated before the embedder.
    pub fn step(&mut self, model: &mut GdnModel, ctx: &Context, x0: &[f64]) -> Result<f64> {
        let tau = self.rng.random_range(1..=model.schedule.tau_max());
        let eps = gaussian(&mut self.rng, x0.len());
        let x_tau = model.schedule.forward_noise(x0, tau, &eps)?;
        let (loss, gg, dg) = model.loss_and_grads(ctx, &x_tau, &eps, tau)?;
        if !loss.is_finite() {
            return Err(Error::Diverged(format!(
                "loss {loss} at optimizer step {} (noise level {tau})",
                self.adam_denoiser.step + 1
            )));
        }
        adam_step(&mut model.denoiser, &dg, &mut self.adam_denoiser)?;
        adam_step(&mut model.gnn, &gg, &mut self.adam_gnn)?;
        Ok(loss)
    }

    /// Draws a uniform (context, outcome) pair and steps on it.
    pub fn step_on(&mut self, model: &mut GdnModel, data: &TrainingSet) -> Result<f64> {
        let (k, r) = data.sample(&mut self.rng);
        self.step(model, &data.contexts[k], &data.targets[k][r])
    }
}

/// Runs `epochs` passes of `data.len()` steps each.
pub fn train_on(model: &mut GdnModel, data: &TrainingSet, config: &TrainConfig) -> Result<TrainReport> {
    let mut trainer = Trainer::new(model, config)?;
    let per_epoch = data.len();
    let mut report = TrainReport {
        steps: 0,
        epochs: 0,
        losses: Vec::new(),
        epoch_means: Vec::new(),
    };
    'outer: for _ in 0..config.epochs {
        let mut sum = 0.0;
        let mut count = 0;
        for _ in 0..per_epoch {
            if config.max_steps.is_some_and(|m| report.steps >= m) {
                if count > 0 {
                    report.epoch_means.push(sum / count as f64);
                }
                break 'outer;
            }
            let loss = trainer.step_on(model, data)?;
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

pub fn train(model: &mut GdnModel, dataset: &RamificationDataset, config: &TrainConfig) -> Result<TrainReport> {
    let data = TrainingSet::from_dataset(model, dataset)?;
    train_on(model, &data, config)
}
