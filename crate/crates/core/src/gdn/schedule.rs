use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Per-step noise scale used by the sampler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SigmaMode {
    /// `sqrt((1 - abar[t-1]) / (1 - abar[t]) * beta[t])`, zero at `t = 1`.
    #[default]
    Posterior,
    /// `sqrt(beta[t])`.
    Beta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub tau_max: usize,
    pub beta_start: f64,
    pub beta_end: f64,
    #[serde(default)]
    pub sigma: SigmaMode,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            tau_max: 100,
            beta_start: 1e-4,
            beta_end: 0.02,
            sigma: SigmaMode::Posterior,
        }
    }
}

/// Diffusion noise levels, indexed `0..=tau_max` with index 0 the clean
/// data (`abar[0] = 1`, `beta[0]` unused).
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub config: ScheduleConfig,
    beta: Vec<f64>,
    alpha_bar: Vec<f64>,
    sigma: Vec<f64>,
}

/// `beta(tau) = start + (end - start) * (1 - cos(pi * tau / tau_max)) / 2`.
pub fn cosine_beta(tau: f64, tau_max: usize, start: f64, end: f64) -> f64 {
    start + 0.5 * (end - start) * (1.0 - (tau / tau_max as f64 * std::f64::consts::PI).cos())
}

impl NoiseSchedule {
    pub fn new(config: ScheduleConfig) -> Result<Self> {
        let ScheduleConfig {
            tau_max,
            beta_start,
            beta_end,
            sigma: mode,
        } = config;
        if tau_max == 0 {
            return Err(Error::Parameter("tau_max must be at least 1".into()));
        }
        if !(beta_end > beta_start) || !(beta_start > 0.0) || !(beta_end < 1.0) {
            return Err(Error::Parameter(format!(
                "need 0 < beta_start < beta_end < 1, got {beta_start} and {beta_end}"
            )));
        }
        let mut beta = vec![0.0; tau_max + 1];
        let mut alpha_bar = vec![1.0; tau_max + 1];
        let mut sigma = vec![0.0; tau_max + 1];
        for t in 1..=tau_max {
            beta[t] = cosine_beta(t as f64, tau_max, beta_start, beta_end);
            alpha_bar[t] = alpha_bar[t - 1] * (1.0 - beta[t]);
            sigma[t] = match mode {
                SigmaMode::Posterior => {
                    ((1.0 - alpha_bar[t - 1]) / (1.0 - alpha_bar[t]) * beta[t]).sqrt()
                }
                SigmaMode::Beta => beta[t].sqrt(),
            };
        }
        Ok(Self {
            config,
            beta,
            alpha_bar,
            sigma,
        })
    }

    pub fn tau_max(&self) -> usize {
        self.config.tau_max
    }

    pub fn beta(&self, tau: usize) -> f64 {
        self.beta[tau]
    }

    pub fn alpha(&self, tau: usize) -> f64 {
        1.0 - self.beta[tau]
    }

    pub fn alpha_bar(&self, tau: usize) -> f64 {
        self.alpha_bar[tau]
    }

    pub fn sigma(&self, tau: usize) -> f64 {
        self.sigma[tau]
    }

    /// `sqrt(abar) * z0 + sqrt(1 - abar) * eps` at level `tau` (0 allowed).
    pub fn forward_noise(&self, z0: &[f64], tau: usize, eps: &[f64]) -> Result<Vec<f64>> {
        if tau > self.tau_max() {
            return Err(Error::Parameter(format!(
                "noise level {tau} outside 0..={}",
                self.tau_max()
            )));
        }
        if z0.len() != eps.len() {
            return Err(Error::Dimension(format!(
                "noise of length {} for data of length {}",
                eps.len(),
                z0.len()
            )));
        }
        let (a, b) = (self.alpha_bar[tau].sqrt(), (1.0 - self.alpha_bar[tau]).sqrt());
        Ok(z0.iter().zip(eps).map(|(z, e)| a * z + b * e).collect())
    }
}
