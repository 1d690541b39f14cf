use serde::{Deserialize, Serialize};

use super::ParamSet;
use crate::{Error, Result};

/// Moment estimates and hyperparameters for one optimizer instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamSet, lr: f64) -> Self {
        let zeros = || params.entries().iter().map(|e| vec![0.0; e.tensor.len()]).collect();
        Self {
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: zeros(),
            v: zeros(),
        }
    }
}

/// Applies one bias-corrected Adam update in place.
///
/// `grads[i]` is the gradient of parameter `i` of `params`. A non-finite
/// gradient aborts before anything is modified.
pub fn adam_step(params: &mut ParamSet, grads: &[Vec<f64>], state: &mut AdamState) -> Result<()> {
    let entries = params.entries();
    if grads.len() != entries.len() || state.m.len() != entries.len() {
        return Err(Error::Dimension(format!(
            "adam over {} parameters given {} gradients and {} moment slots",
            entries.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for (entry, g) in entries.iter().zip(grads) {
        if g.len() != entry.tensor.len() {
            return Err(Error::Dimension(format!(
                "gradient for `{}` has {} values, parameter has {}",
                entry.name,
                g.len(),
                entry.tensor.len()
            )));
        }
        if let Some(bad) = g.iter().find(|v| !v.is_finite()) {
            return Err(Error::Numeric {
                name: entry.name.clone(),
                detail: format!("non-finite gradient component {bad}"),
            });
        }
    }

    state.step += 1;
    let t = state.step as f64;
    let c1 = 1.0 - state.beta1.powf(t);
    let c2 = 1.0 - state.beta2.powf(t);
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.eps);
    for (i, g) in grads.iter().enumerate() {
        let w = params.values_mut_at(i);
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        for j in 0..g.len() {
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            let mhat = m[j] / c1;
            let vhat = v[j] / c2;
            w[j] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::Tensor;

    fn scalar_set(x: f64) -> ParamSet {
        let mut p = ParamSet::new();
        p.push("x", Tensor::full(vec![1, 1], x), None);
        p
    }

    #[test]
    fn zero_gradient_is_identity() {
        let mut p = ParamSet::new();
        p.push("w", Tensor::matrix(2, 2, vec![0.3, -1.2, 4.0, 0.0]).unwrap(), None);
        let before = p.clone();
        let mut s = AdamState::new(&p, 1e-3);
        for _ in 0..5 {
            adam_step(&mut p, &[vec![0.0; 4]], &mut s).unwrap();
        }
        assert_eq!(p, before);
        assert_eq!(s.step, 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar_set(0.0);
        let mut s = AdamState::new(&p, 0.1);
        adam_step(&mut p, &[vec![1.0]], &mut s).unwrap();
        // m_hat = 1, v_hat = 1 after bias correction.
        let expected = -0.1 / (1.0 + 1e-8);
        assert!((p.entries()[0].tensor.values()[0] - expected).abs() < 1e-15);
        assert_eq!(s.step, 1);
    }

    #[test]
    fn nan_gradient_names_the_parameter() {
        let mut p = scalar_set(1.0);
        let mut s = AdamState::new(&p, 0.1);
        let err = adam_step(&mut p, &[vec![f64::NAN]], &mut s).unwrap_err();
        match err {
            Error::Numeric { name, .. } => assert_eq!(name, "x"),
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(s.step, 0);
        assert_eq!(p.entries()[0].tensor.values(), &[1.0]);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = scalar_set(3.0);
        let mut s = AdamState::new(&p, 0.05);
        for _ in 0..2000 {
            let x = p.entries()[0].tensor.values()[0];
            adam_step(&mut p, &[vec![2.0 * (x - 1.0)]], &mut s).unwrap();
        }
        assert!((p.entries()[0].tensor.values()[0] - 1.0).abs() < 1e-3);
    }
}
