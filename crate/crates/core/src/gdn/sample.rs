use rand_distr::{Distribution, StandardNormal};

use super::model::GdnModel;
use super::schedule::NoiseSchedule;
use crate::abm::SystemState;
use crate::seed::Rng;
use crate::{Error, Result};

/// Upper bound on latent rows pushed through the denoiser at once.
pub const MAX_ROWS: usize = 4096;

/// Ancestral sampling from `x_init` at `tau_max` down to step 1.
///
/// `eps_fn(x, tau)` predicts the noise in `x`; `noise_fn(len)` supplies the
/// fresh Gaussian draw for steps `tau > 1` (none is requested at `tau = 1`).
pub fn ddpm_reverse<E, N>(schedule: &NoiseSchedule, x_init: Vec<f64>, mut eps_fn: E, mut noise_fn: N) -> Result<Vec<f64>>
where
    E: FnMut(&[f64], usize) -> Result<Vec<f64>>,
    N: FnMut(usize) -> Vec<f64>,
{
    let mut x = x_init;
    for tau in (1..=schedule.tau_max()).rev() {
        let eps = eps_fn(&x, tau)?;
        if eps.len() != x.len() {
            return Err(Error::Dimension(format!(
                "noise prediction of length {} for {} latents",
                eps.len(),
                x.len()
            )));
        }
        let alpha = schedule.alpha(tau);
        let k = (1.0 - alpha) / (1.0 - schedule.alpha_bar(tau)).sqrt();
        let inv = 1.0 / alpha.sqrt();
        for (xi, e) in x.iter_mut().zip(&eps) {
            *xi = (*xi - k * e) * inv;
        }
        if tau > 1 {
            let sigma = schedule.sigma(tau);
            let z = noise_fn(x.len());
            for (xi, zi) in x.iter_mut().zip(&z) {
                *xi += sigma * zi;
            }
        }
    }
    Ok(x)
}

pub(crate) fn gaussian(rng: &mut Rng, len: usize) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

impl GdnModel {
    /// `samples` latent draws of every agent's next dynamic features,
    /// row `s * n + i` for sample `s` of agent `i`.
    pub fn sample_latents(&self, state: &SystemState, samples: usize, rng: &mut Rng) -> Result<Vec<f64>> {
        let ctx = self.context(state)?;
        let base = self.condition_base_values(&ctx)?;
        let n = ctx.n;
        let dyn_d = self.codec().dyn_dim();
        let per_chunk = (MAX_ROWS / n.max(1)).max(1);
        let mut out = Vec::with_capacity(samples * n * dyn_d);
        let mut done = 0;
        while done < samples {
            let reps = per_chunk.min(samples - done);
            let init = gaussian(rng, reps * n * dyn_d);
            let x = ddpm_reverse(
                &self.schedule,
                init,
                |x, tau| self.eps_from_base(&base, n, x, tau),
                |len| gaussian(rng, len),
            )?;
            out.extend(x);
            done += reps;
        }
        Ok(out)
    }

    /// `samples` decoded successor states of `state`.
    pub fn sample_states(&self, state: &SystemState, samples: usize, rng: &mut Rng) -> Result<Vec<SystemState>> {
        let x = self.sample_latents(state, samples, rng)?;
        if samples == 0 {
            return Ok(Vec::new());
        }
        let block = x.len() / samples;
        x.chunks_exact(block)
            .map(|rows| self.codec().decode_dynamic_state(state, rows))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gdn::schedule::ScheduleConfig;

    #[test]
    fn zero_noise_prediction_telescopes() {
        let s = NoiseSchedule::new(ScheduleConfig::default()).unwrap();
        let x0 = vec![0.7, -1.3, 2.0];
        let out = ddpm_reverse(&s, x0.clone(), |x, _| Ok(vec![0.0; x.len()]), |len| vec![0.0; len]).unwrap();
        let prod: f64 = (1..=100).map(|t| s.alpha(t).sqrt()).product();
        for (o, x) in out.iter().zip(&x0) {
            assert!((o - x / prod).abs() < 1e-12 * (x / prod).abs());
        }
    }

    #[test]
    fn final_step_draws_no_noise() {
        let s = NoiseSchedule::new(ScheduleConfig {
            tau_max: 3,
            ..ScheduleConfig::default()
        })
        .unwrap();
        let mut asked = Vec::new();
        ddpm_reverse(&s, vec![0.0; 2], |x, _| Ok(vec![0.0; x.len()]), |len| {
            asked.push(len);
            vec![1.0; len]
        })
        .unwrap();
        assert_eq!(asked, vec![2, 2]);
        assert_eq!(s.sigma(1), 0.0);
    }

    #[test]
    fn exact_noise_oracle_recovers_the_data() {
        // With eps_fn returning the true noise of a deterministic chain the
        // reverse pass lands on x0 when sigma is switched off: the
        // single-step inversion of the forward mean at every level.
        let s = NoiseSchedule::new(ScheduleConfig {
            tau_max: 20,
            ..ScheduleConfig::default()
        })
        .unwrap();
        let x0 = [0.25, -0.5];
        let eps = [1.0, -2.0];
        let x_init = s.forward_noise(&x0, 20, &eps).unwrap();
        let out = ddpm_reverse(
            &s,
            x_init,
            |x, tau| {
                // Noise consistent with x under the marginal at `tau`.
                let (a, b) = (s.alpha_bar(tau).sqrt(), (1.0 - s.alpha_bar(tau)).sqrt());
                Ok(x.iter().zip(&x0).map(|(xi, z)| (xi - a * z) / b).collect())
            },
            |len| vec![0.0; len],
        )
        .unwrap();
        for (o, z) in out.iter().zip(&x0) {
            assert!((o - z).abs() < 1e-9, "{o} vs {z}");
        }
    }
}
