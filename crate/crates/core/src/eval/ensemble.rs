use serde::{Deserialize, Serialize};

use super::ar1::{ar1_fit, ar1_forecast, Ar1Model};
use super::smape::smape;
use crate::abm::{Engine, SystemState};
use crate::seed::{self, stream};
use crate::surrogate::{rollout, Surrogate};
use crate::{Error, Result};

/// Macro series of many runs: `runs[s][r][t]` is series `s` of run `r` at
/// step `t` (step 0 is the shared initial state).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub names: Vec<String>,
    pub runs: Vec<Vec<Vec<f64>>>,
}

impl Ensemble {
    pub fn from_trajectories(engine: &Engine, trajectories: &[Vec<SystemState>]) -> Result<Self> {
        let first = trajectories
            .first()
            .and_then(|t| t.first())
            .ok_or_else(|| Error::EmptyDataset("no trajectories".into()))?;
        let names: Vec<String> = engine
            .macro_stats(first)
            .series()
            .into_iter()
            .map(|(n, _)| n.to_string())
            .collect();
        let mut runs = vec![Vec::with_capacity(trajectories.len()); names.len()];
        for traj in trajectories {
            let mut per_series = vec![Vec::with_capacity(traj.len()); names.len()];
            for state in traj {
                for (s, (_, v)) in engine.macro_stats(state).series().into_iter().enumerate() {
                    per_series[s].push(v);
                }
            }
            for (s, series) in per_series.into_iter().enumerate() {
                runs[s].push(series);
            }
        }
        Ok(Self { names, runs })
    }

    pub fn num_runs(&self) -> usize {
        self.runs.first().map_or(0, Vec::len)
    }

    /// Length of each run in states.
    pub fn len(&self) -> usize {
        self.runs.first().and_then(|r| r.first()).map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Ensemble mean of series `s` at every step.
    pub fn mean(&self, s: usize) -> Vec<f64> {
        let runs = &self.runs[s];
        let mut m = vec![0.0; self.len()];
        for run in runs {
            for (acc, v) in m.iter_mut().zip(run) {
                *acc += v;
            }
        }
        m.iter_mut().for_each(|v| *v /= runs.len() as f64);
        m
    }

    /// Runs `range` only.
    pub fn subset(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            names: self.names.clone(),
            runs: self.runs.iter().map(|r| r[range.clone()].to_vec()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroSeries {
    pub name: String,
    pub truth_mean: Vec<f64>,
    pub model_mean: Vec<f64>,
    pub smape: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroReport {
    pub model: String,
    pub horizon: usize,
    pub runs: usize,
    pub series: Vec<MacroSeries>,
    /// Mean over series.
    pub smape: f64,
}

/// sMAPE between ensemble means over steps `1..=horizon`.
pub fn compare(label: &str, truth: &Ensemble, pred: &Ensemble) -> Result<MacroReport> {
    if truth.names != pred.names || truth.len() != pred.len() {
        return Err(Error::Dimension(format!(
            "ensembles differ: {:?} x {} vs {:?} x {}",
            truth.names,
            truth.len(),
            pred.names,
            pred.len()
        )));
    }
    if truth.len() < 2 {
        return Err(Error::EmptyDataset("ensembles need at least one step".into()));
    }
    let series: Vec<MacroSeries> = (0..truth.names.len())
        .map(|s| {
            let (a, f) = (truth.mean(s), pred.mean(s));
            Ok(MacroSeries {
                name: truth.names[s].clone(),
                smape: smape(&a[1..], &f[1..])?,
                truth_mean: a,
                model_mean: f,
            })
        })
        .collect::<Result<_>>()?;
    let mean = series.iter().map(|s| s.smape).sum::<f64>() / series.len() as f64;
    Ok(MacroReport {
        model: label.to_string(),
        horizon: truth.len() - 1,
        runs: pred.num_runs(),
        series,
        smape: mean,
    })
}

/// Ground-truth runs from `init`; run `r` uses the rollout stream of
/// `derive(seed, [TRUTH])`.
pub fn truth_ensemble(engine: &Engine, init: &SystemState, horizon: usize, runs: usize, seed: u64) -> Result<Ensemble> {
    let trajs = rollout(engine, init, horizon, runs, seed::derive(seed, &[stream::TRUTH]))?;
    Ensemble::from_trajectories(engine, &trajs)
}

/// Surrogate rollouts from `init` under the rollout stream of `seed`.
pub fn model_ensemble<S: Surrogate + ?Sized>(
    engine: &Engine,
    model: &S,
    init: &SystemState,
    horizon: usize,
    runs: usize,
    seed: u64,
) -> Result<Ensemble> {
    let trajs = rollout(model, init, horizon, runs, seed)?;
    Ensemble::from_trajectories(engine, &trajs)
}

/// Ground truth against the surrogate, both from `init`.
pub fn macro_eval<S: Surrogate + ?Sized>(
    engine: &Engine,
    model: &S,
    init: &SystemState,
    horizon: usize,
    runs: usize,
    seed: u64,
) -> Result<MacroReport> {
    let truth = truth_ensemble(engine, init, horizon, runs, seed)?;
    let pred = model_ensemble(engine, model, init, horizon, runs, seed)?;
    compare(&model.label(), &truth, &pred)
}

/// Sampling noise of the protocol: the first half of a ground-truth
/// ensemble against the second half.
pub fn split_ensemble_floor(truth: &Ensemble) -> Result<MacroReport> {
    let n = truth.num_runs();
    if n < 2 {
        return Err(Error::EmptyDataset("split-ensemble floor needs two or more runs".into()));
    }
    let half = n / 2;
    compare("split-ensemble", &truth.subset(0..half), &truth.subset(half..2 * half))
}

/// AR(1) per series fitted on `fit_on` (one value per step of the training
/// horizon), then `runs` forecasts from the initial values of `truth`.
pub fn ar1_ensemble(fit_on: &Ensemble, truth: &Ensemble, runs: usize, seed: u64) -> Result<(Vec<Ar1Model>, Ensemble)> {
    let horizon = truth.len().saturating_sub(1);
    let mut models = Vec::new();
    let mut out = Vec::new();
    for s in 0..fit_on.names.len() {
        let fitted = ar1_fit(&fit_on.names[s], &fit_on.mean(s))?;
        let x0 = truth.mean(s)[0];
        let series = (0..runs)
            .map(|r| {
                let mut rng = seed::derive_rng(seed, &[stream::AR1, s as u64, r as u64]);
                let mut v = vec![x0];
                v.extend(ar1_forecast(&fitted, x0, horizon, &mut rng)?);
                Ok(v)
            })
            .collect::<Result<Vec<_>>>()?;
        models.push(fitted);
        out.push(series);
    }
    Ok((
        models,
        Ensemble {
            names: fit_on.names.clone(),
            runs: out,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::abm::PredPreyParams;

    #[test]
    fn engine_against_itself_is_near_the_floor() {
        let e = Engine::PredPrey(PredPreyParams {
            grid: 8,
            ..PredPreyParams::default()
        });
        let init = e.initial_state().unwrap();
        let truth = truth_ensemble(&e, &init, 6, 20, 1).unwrap();
        assert_eq!(truth.len(), 7);
        assert_eq!(truth.names, vec!["prey_active", "predator_active"]);
        let rep = compare("self", &truth, &model_ensemble(&e, &e, &init, 6, 20, 1).unwrap()).unwrap();
        assert_eq!(rep.series[0].truth_mean.len(), 7);
        assert!(rep.smape < 0.5, "{}", rep.smape);
        let floor = split_ensemble_floor(&truth).unwrap();
        assert_eq!(floor.runs, 10);
        assert_eq!(compare("same", &truth, &truth).unwrap().smape, 0.0);
    }

    #[test]
    fn ar1_forecasts_have_the_truth_shape() {
        let truth = Ensemble {
            names: vec!["a".into()],
            runs: vec![vec![vec![10.0, 9.0, 8.1, 7.29]]],
        };
        let (m, f) = ar1_ensemble(&truth, &truth, 3, 0).unwrap();
        assert!((m[0].phi - 0.9).abs() < 1e-12);
        assert_eq!(f.num_runs(), 3);
        assert_eq!(f.len(), 4);
        assert!((f.runs[0][2][3] - 7.29).abs() < 1e-9);
    }
}
