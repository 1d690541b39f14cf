use crate::{Error, Result};

/// Interleaved `[sin(w0 t), cos(w0 t), sin(w1 t), cos(w1 t), ...]` with
/// `w_k = 10000^(-2k / dim)`.
pub fn sinusoidal_embedding(tau: f64, dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || dim % 2 != 0 {
        return Err(Error::Dimension(format!("embedding width {dim} must be even and positive")));
    }
    let mut out = Vec::with_capacity(dim);
    for k in 0..dim / 2 {
        let w = 10000f64.powf(-2.0 * k as f64 / dim as f64);
        out.push((w * tau).sin());
        out.push((w * tau).cos());
    }
    Ok(out)
}
