//! The individual pipeline steps as plain functions over explicit paths, so
//! the command-line tools can call them one at a time.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{EvalConfig, ModelChoice, RamificationConfig, TrainingConfig};
use crate::ablate::{diffusion_only, train_gnn_only_on, GnnOnlyModel, GnnOnlySpec};
use crate::abm::{snapshot, Engine, SystemState};
use crate::checkpoint::{save_model, TrainedModel};
use crate::encode::FeatureCodec;
use crate::eval::{
    ar1_ensemble, compare, micro_eval, model_ensemble, split_ensemble_floor, split_half_floor, truth_ensemble,
    write_macro_csv, write_micro_csv, Ar1Model, Ensemble, MacroReport,
};
use crate::files::{create_dir, read_json, write_json};
use crate::gdn::{train, GdnModel, TrainReport, Variant};
use crate::ramify::{self, RamificationDataset};
use crate::seed::{self, stream};
use crate::surrogate::Surrogate;
use crate::Result;

/// Writes the ground-truth trajectory of `engine` from its configured seed.
pub fn simulate_to(engine: &Engine, path: &Path) -> Result<Vec<SystemState>> {
    let traj = engine.simulate()?;
    let header = snapshot::SnapshotHeader::new(engine, engine.seed());
    snapshot::save(path, &header, traj.iter().map(|s| (0, s)))?;
    Ok(traj)
}

/// Training ramification in `dir/train` and, in `dir/eval`, the
/// out-of-training one that continues from its last main-branch state.
pub fn ramify_to(
    engine: &Engine,
    ramification: &RamificationConfig,
    eval: &EvalConfig,
    root: u64,
    dir: &Path,
) -> Result<(RamificationDataset, RamificationDataset)> {
    let train = ramify::generate(engine, ramification.steps, ramification.branches, root)?;
    let future = ramify::future_ramification(engine, &train, eval.states, eval.branches)?;
    ramify::save(&train, &dir.join("train"))?;
    ramify::save(&future, &dir.join("eval"))?;
    Ok((train, future))
}

/// Untrained network of the configured kind for `dataset`'s model and grid.
pub fn build_model(training: &TrainingConfig, dataset: &RamificationDataset, init_seed: u64) -> Result<TrainedModel> {
    let codec = FeatureCodec::for_model(dataset.engine.kind(), dataset.engine.grid());
    let arch = training.architecture.clone();
    let schedule = training.schedule.clone();
    Ok(match training.model {
        ModelChoice::Gdn => TrainedModel::Diffusion(GdnModel::new(codec, arch, schedule, Variant::Gdn, init_seed)?),
        ModelChoice::DiffusionOnly => TrainedModel::Diffusion(diffusion_only(
            codec,
            arch,
            schedule,
            dataset.num_agents(),
            init_seed,
        )?),
        ModelChoice::GnnOnly => TrainedModel::GnnOnly(GnnOnlyModel::new(GnnOnlySpec::new(codec, init_seed))?),
    })
}

/// Builds and trains a model on `dataset`. Weights are drawn from
/// `derive(root, [WEIGHTS])` and batches from `derive(root, [TRAIN])`.
pub fn train_model(training: &TrainingConfig, dataset: &RamificationDataset, root: u64) -> Result<(TrainedModel, TrainReport)> {
    let mut model = build_model(training, dataset, seed::derive(root, &[stream::WEIGHTS]))?;
    let train_seed = seed::derive(root, &[stream::TRAIN]);
    let report = match &mut model {
        TrainedModel::Diffusion(m) => train(m, dataset, &training.train_config(train_seed))?,
        TrainedModel::GnnOnly(m) => train_gnn_only_on(m, dataset, &training.gnn_only_config(train_seed))?,
    };
    Ok((model, report))
}

/// Loss summary kept next to a checkpoint; per-step losses are dropped
/// beyond the first and last thousand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub model: String,
    pub steps: usize,
    pub epochs: usize,
    pub epoch_means: Vec<f64>,
    pub first_losses: Vec<f64>,
    pub last_losses: Vec<f64>,
}

impl TrainSummary {
    pub fn new(model: &TrainedModel, report: &TrainReport) -> Self {
        let n = report.losses.len();
        Self {
            model: model.label(),
            steps: report.steps,
            epochs: report.epochs,
            epoch_means: report.epoch_means.clone(),
            first_losses: report.losses[..n.min(1000)].to_vec(),
            last_losses: report.losses[n.saturating_sub(1000)..].to_vec(),
        }
    }
}

pub fn train_to(
    training: &TrainingConfig,
    dataset: &RamificationDataset,
    root: u64,
    checkpoint: &Path,
    summary: &Path,
    fingerprint: &str,
) -> Result<TrainedModel> {
    let (model, report) = train_model(training, dataset, root)?;
    save_model(checkpoint, &model, fingerprint)?;
    write_json(summary, &TrainSummary::new(&model, &report))?;
    Ok(model)
}

/// Ground-truth and surrogate ensembles from `init`.
pub fn rollout_ensembles<S: Surrogate + ?Sized>(
    engine: &Engine,
    model: &S,
    init: &SystemState,
    horizon: usize,
    runs: usize,
    root: u64,
) -> Result<(Ensemble, Ensemble)> {
    let truth = truth_ensemble(engine, init, horizon, runs, root)?;
    let pred = model_ensemble(engine, model, init, horizon, runs, root)?;
    Ok((truth, pred))
}

pub fn load_ensemble(path: &Path) -> Result<Ensemble> {
    read_json(path)
}

/// Headline numbers of one evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub model: String,
    pub micro_mean_emd: f64,
    /// Split-half ground-truth floor of the same table.
    pub micro_floor: f64,
    pub micro_entries: usize,
    pub macro_smape: f64,
    /// Split-ensemble ground-truth floor.
    pub macro_floor: f64,
    pub ar1_smape: f64,
    pub ar1_models: Vec<Ar1Model>,
    pub series_smape: Vec<(String, f64)>,
}

/// Everything an evaluation compares.
pub struct EvalInputs<'a> {
    pub train: &'a RamificationDataset,
    pub future: &'a RamificationDataset,
    pub truth: &'a Ensemble,
    pub pred: &'a Ensemble,
}

/// Micro, macro and AR(1) evaluation; writes the summary and CSV tables to
/// `dir`.
pub fn evaluate_to<S: Surrogate + ?Sized>(
    model: &S,
    inputs: &EvalInputs<'_>,
    samples: usize,
    root: u64,
    dir: &Path,
) -> Result<EvalSummary> {
    let EvalInputs {
        train,
        future: eval,
        truth,
        pred,
    } = *inputs;
    create_dir(dir)?;
    let micro = micro_eval(eval, model, samples, root)?;
    let floor = split_half_floor(eval)?;
    write_micro_csv(&dir.join("micro.csv"), &micro)?;

    let macro_report = compare(&model.label(), truth, pred)?;
    write_macro_csv(&dir.join("macro.csv"), &macro_report)?;
    let macro_floor = split_ensemble_floor(truth)?;

    let (ar_models, ar_report) = ar1_report(&train.engine, train, truth, root)?;
    write_macro_csv(&dir.join("ar1_macro.csv"), &ar_report)?;

    let summary = EvalSummary {
        model: model.label(),
        micro_mean_emd: micro.mean,
        micro_floor: floor.mean,
        micro_entries: micro.entries.len(),
        macro_smape: macro_report.smape,
        macro_floor: macro_floor.smape,
        ar1_smape: ar_report.smape,
        ar1_models: ar_models,
        series_smape: macro_report.series.iter().map(|s| (s.name.clone(), s.smape)).collect(),
    };
    write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

/// AR(1) per macro series, fitted on the training main branch and
/// forecast from the initial value of `truth`.
pub fn ar1_report(
    engine: &Engine,
    train: &RamificationDataset,
    truth: &Ensemble,
    root: u64,
) -> Result<(Vec<Ar1Model>, MacroReport)> {
    let fit_on = Ensemble::from_trajectories(engine, std::slice::from_ref(&train.main))?;
    let (models, ar) = ar1_ensemble(&fit_on, truth, truth.num_runs(), root)?;
    Ok((models, compare("ar1", truth, &ar)?))
}
