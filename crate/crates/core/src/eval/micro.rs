use serde::{Deserialize, Serialize};

use super::emd::{emd, EmpiricalDistribution};
use crate::abm::{ModelKind, Phase, SystemState};
use crate::ramify::RamificationDataset;
use crate::seed::{self, stream};
use crate::surrogate::Surrogate;
use crate::{Error, Result};

/// One `(t, agent, feature)` cell of the micro table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroEntry {
    pub t: usize,
    pub agent: usize,
    pub feature: String,
    pub emd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroReport {
    pub model: String,
    /// Outcomes per cell on the reference side.
    pub reference_samples: usize,
    /// Outcomes per cell on the compared side.
    pub samples: usize,
    pub entries: Vec<MicroEntry>,
    pub mean: f64,
}

/// Features compared per agent: the coordinate marginals for Schelling,
/// the life phase for Predator-Prey.
pub fn micro_features(model: ModelKind) -> &'static [&'static str] {
    match model {
        ModelKind::Schelling => &["x", "y"],
        ModelKind::PredPrey => &["phase"],
    }
}

/// Per-agent distribution of one feature across `outcomes`. Coordinates are
/// scaled to `[0, 1]` by the grid extent.
fn distributions(outcomes: &[&SystemState], feature: &str) -> Result<Vec<EmpiricalDistribution>> {
    let first = outcomes
        .first()
        .ok_or_else(|| Error::EmptyDataset("no outcomes to compare".into()))?;
    let n = first.len();
    let scale = (first.grid.max(2) - 1) as f64;
    (0..n)
        .map(|i| match feature {
            "phase" => {
                let mut counts = [0usize; 4];
                for s in outcomes {
                    let p = s.agents[i]
                        .phase
                        .ok_or_else(|| Error::Parameter(format!("agent {i} has no phase")))?;
                    counts[p.index()] += 1;
                }
                debug_assert_eq!(Phase::ALL.len(), counts.len());
                EmpiricalDistribution::from_counts(&counts)
            }
            "x" | "y" => {
                let values: Vec<f64> = outcomes
                    .iter()
                    .map(|s| {
                        let pos = s.agents[i]
                            .pos
                            .ok_or_else(|| Error::Parameter(format!("agent {i} is off the grid")))?;
                        Ok(if feature == "x" { pos.0 } else { pos.1 } as f64 / scale)
                    })
                    .collect::<Result<_>>()?;
                EmpiricalDistribution::from_samples(&values)
            }
            other => Err(Error::Parameter(format!("no micro feature `{other}`"))),
        })
        .collect()
}

/// EMD per agent and feature between two outcome sets of one condition.
pub fn compare_outcomes(t: usize, reference: &[&SystemState], other: &[&SystemState]) -> Result<Vec<MicroEntry>> {
    let model = reference
        .first()
        .ok_or_else(|| Error::EmptyDataset("no reference outcomes".into()))?
        .model;
    let mut out = Vec::new();
    for &feature in micro_features(model) {
        let a = distributions(reference, feature)?;
        let b = distributions(other, feature)?;
        if a.len() != b.len() {
            return Err(Error::Dimension(format!("{} vs {} agents", a.len(), b.len())));
        }
        for (agent, (da, db)) in a.iter().zip(&b).enumerate() {
            out.push(MicroEntry {
                t,
                agent,
                feature: feature.to_string(),
                emd: emd(da, db)?,
            });
        }
    }
    Ok(out)
}

fn report(model: String, reference_samples: usize, samples: usize, entries: Vec<MicroEntry>) -> MicroReport {
    let mean = if entries.is_empty() {
        0.0
    } else {
        entries.iter().map(|e| e.emd).sum::<f64>() / entries.len() as f64
    };
    MicroReport {
        model,
        reference_samples,
        samples,
        entries,
        mean,
    }
}

/// Compares the siblings of every conditioning state of `truth` with
/// `samples` model outcomes drawn from the same state. Step `t` samples
/// with `derive(seed, [SAMPLE, t])`.
pub fn micro_eval<S: Surrogate + ?Sized>(
    truth: &RamificationDataset,
    model: &S,
    samples: usize,
    seed: u64,
) -> Result<MicroReport> {
    if truth.steps() == 0 || truth.branches == 0 {
        return Err(Error::EmptyDataset("evaluation ramification has no siblings".into()));
    }
    let mut entries = Vec::new();
    for t in 0..truth.steps() {
        let mut rng = seed::derive_rng(seed, &[stream::SAMPLE, t as u64]);
        let drawn = model.sample_next(&truth.main[t], samples, &mut rng)?;
        let reference: Vec<&SystemState> = truth.siblings[t].iter().collect();
        let other: Vec<&SystemState> = drawn.iter().collect();
        entries.extend(compare_outcomes(t, &reference, &other)?);
    }
    Ok(report(model.label(), truth.branches, samples, entries))
}

/// Sampling noise of the table itself: the first half of each sibling set
/// against the second half.
pub fn split_half_floor(truth: &RamificationDataset) -> Result<MicroReport> {
    if truth.branches < 2 {
        return Err(Error::EmptyDataset("split-half floor needs two or more siblings".into()));
    }
    let half = truth.branches / 2;
    let mut entries = Vec::new();
    for t in 0..truth.steps() {
        let sib: Vec<&SystemState> = truth.siblings[t].iter().collect();
        entries.extend(compare_outcomes(t, &sib[..half], &sib[half..2 * half])?);
    }
    Ok(report("split-half".into(), half, half, entries))
}
