use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::seed::Rng;
use crate::{Error, Result};

/// `x[t] = phi * x[t-1] + e[t]` with `e ~ N(0, sigma^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ar1Model {
    pub phi: f64,
    pub sigma: f64,
    pub series: String,
}

/// Least-squares fit on lag-1 pairs; `sigma` is the residual standard
/// deviation.
pub fn ar1_fit(name: &str, series: &[f64]) -> Result<Ar1Model> {
    if series.len() < 3 {
        return Err(Error::Parameter(format!(
            "AR(1) fit needs at least 3 points, got {}",
            series.len()
        )));
    }
    let lagged = &series[..series.len() - 1];
    let den: f64 = lagged.iter().map(|x| x * x).sum();
    let mean = series.iter().sum::<f64>() / series.len() as f64;
    let spread = series.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
    if den == 0.0 || spread == 0.0 {
        return Err(Error::Parameter(format!("series `{name}` has no variation to fit")));
    }
    let num: f64 = series.windows(2).map(|w| w[0] * w[1]).sum();
    let phi = num / den;
    let resid: Vec<f64> = series.windows(2).map(|w| w[1] - phi * w[0]).collect();
    let rm = resid.iter().sum::<f64>() / resid.len() as f64;
    let var = resid.iter().map(|r| (r - rm).powi(2)).sum::<f64>() / resid.len() as f64;
    Ok(Ar1Model {
        phi,
        sigma: var.sqrt(),
        series: name.to_string(),
    })
}

/// `horizon` values following `x0` (which is not included).
pub fn ar1_forecast(model: &Ar1Model, x0: f64, horizon: usize, rng: &mut Rng) -> Result<Vec<f64>> {
    let noise = Normal::new(0.0, model.sigma)
        .map_err(|e| Error::Parameter(format!("AR(1) noise: {e}")))?;
    let mut x = x0;
    Ok((0..horizon)
        .map(|_| {
            x = model.phi * x + noise.sample(rng);
            x
        })
        .collect())
}
