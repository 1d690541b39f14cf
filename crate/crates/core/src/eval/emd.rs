use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Normalized distribution over real values or over a fixed category set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EmpiricalDistribution {
    /// Strictly ascending support with matching probabilities.
    Numeric {
        support: Vec<f64>,
        probs: Vec<f64>,
        samples: usize,
    },
    Categorical { probs: Vec<f64>, samples: usize },
}

fn normalize(weights: &[f64]) -> Result<Vec<f64>> {
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Parameter("weights must be finite and non-negative".into()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptyDataset("distribution has no mass".into()));
    }
    Ok(weights.iter().map(|w| w / total).collect())
}

impl EmpiricalDistribution {
    /// Empirical distribution of raw samples.
    pub fn from_samples(values: &[f64]) -> Result<Self> {
        let ones = vec![1.0; values.len()];
        let mut d = Self::weighted(values, &ones)?;
        if let Self::Numeric { samples, .. } = &mut d {
            *samples = values.len();
        }
        Ok(d)
    }

    /// Point masses at `points` with the given (unnormalized) weights;
    /// repeated points are merged.
    pub fn weighted(points: &[f64], weights: &[f64]) -> Result<Self> {
        if points.len() != weights.len() {
            return Err(Error::Dimension(format!(
                "{} points with {} weights",
                points.len(),
                weights.len()
            )));
        }
        if points.iter().any(|p| !p.is_finite()) {
            return Err(Error::Parameter("support points must be finite".into()));
        }
        let probs = normalize(weights)?;
        let mut pairs: Vec<(f64, f64)> = points.iter().copied().zip(probs).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut support: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut merged: Vec<f64> = Vec::with_capacity(pairs.len());
        for (x, p) in pairs {
            if support.last() == Some(&x) {
                *merged.last_mut().expect("parallel") += p;
            } else {
                support.push(x);
                merged.push(p);
            }
        }
        Ok(Self::Numeric {
            support,
            probs: merged,
            samples: points.len(),
        })
    }

    /// Category frequencies from counts.
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        let w: Vec<f64> = counts.iter().map(|&c| c as f64).collect();
        Ok(Self::Categorical {
            probs: normalize(&w)?,
            samples: counts.iter().sum(),
        })
    }

    pub fn categorical(probs: &[f64]) -> Result<Self> {
        Ok(Self::Categorical {
            probs: normalize(probs)?,
            samples: 1,
        })
    }

    pub fn samples(&self) -> usize {
        match self {
            Self::Numeric { samples, .. } | Self::Categorical { samples, .. } => *samples,
        }
    }
}

/// Optimal transport cost on the real line: the integral of the absolute
/// difference between the two CDFs.
pub fn emd_1d(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> Result<f64> {
    let (
        EmpiricalDistribution::Numeric {
            support: xa,
            probs: pa,
            ..
        },
        EmpiricalDistribution::Numeric {
            support: xb,
            probs: pb,
            ..
        },
    ) = (a, b)
    else {
        return Err(Error::Parameter("1-D EMD needs two numeric distributions".into()));
    };
    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut prev: Option<f64> = None;
    let mut total = 0.0;
    while i < xa.len() || j < xb.len() {
        let x = match (xa.get(i), xb.get(j)) {
            (Some(&u), Some(&v)) => u.min(v),
            (Some(&u), None) => u,
            (None, Some(&v)) => v,
            (None, None) => unreachable!(),
        };
        if let Some(p) = prev {
            total += (fa - fb).abs() * (x - p);
        }
        while i < xa.len() && xa[i] == x {
            fa += pa[i];
            i += 1;
        }
        while j < xb.len() && xb[j] == x {
            fb += pb[j];
            j += 1;
        }
        prev = Some(x);
    }
    Ok(total)
}

/// Transport cost under the unit metric between distinct categories, which
/// is the total variation distance.
pub fn emd_categorical(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> Result<f64> {
    let (
        EmpiricalDistribution::Categorical { probs: p, .. },
        EmpiricalDistribution::Categorical { probs: q, .. },
    ) = (a, b)
    else {
        return Err(Error::Parameter("categorical EMD needs two categorical distributions".into()));
    };
    if p.len() != q.len() {
        return Err(Error::Dimension(format!("{} vs {} categories", p.len(), q.len())));
    }
    Ok(0.5 * p.iter().zip(q).map(|(x, y)| (x - y).abs()).sum::<f64>())
}

/// Dispatches on the distribution kind.
pub fn emd(a: &EmpiricalDistribution, b: &EmpiricalDistribution) -> Result<f64> {
    match a {
        EmpiricalDistribution::Numeric { .. } => emd_1d(a, b),
        EmpiricalDistribution::Categorical { .. } => emd_categorical(a, b),
    }
}
