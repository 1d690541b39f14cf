//! Minimal dense reverse-mode automatic differentiation.
//!
//! Everything is a row-major `f64` matrix. A [`Tape`] records operations as
//! they execute and [`Tape::backward`] walks the record in reverse. Parameters
//! live in a [`ParamSet`] and are borrowed by the tape for the duration of a
//! forward/backward pass.

mod adam;
mod init;
mod layers;
mod tape;
mod tensor;

pub use adam::{adam_step, AdamState};
pub use init::{init_weights, kaiming_bound, xavier_bound, InitScheme, LayerKind, LayerSpec};
pub use layers::{BoundParams, LayerNorm, Linear, Mlp, ParamEntry, ParamId, ParamSet};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

/// Slope of every LeakyReLU in the networks.
pub const LEAKY_SLOPE: f64 = 0.1;

/// Stabilizer added to the variance inside layer normalization.
pub const LAYER_NORM_EPS: f64 = 1e-5;

pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: (&[f64], isize, isize),
    b: (&[f64], isize, isize),
    c: &mut [f64],
    beta: f64,
) {
    // Shapes are validated by callers; these guard the raw-pointer kernel.
    assert!(c.len() >= m * n, "gemm output too small");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c[..m * n].iter_mut() {
            *v *= beta;
        }
        return;
    }
    let max_index = |(s, rs, cs): (&[f64], isize, isize), rows: usize, cols: usize| {
        let last = (rows as isize - 1) * rs + (cols as isize - 1) * cs;
        assert!(last >= 0 && (last as usize) < s.len(), "gemm operand too small");
    };
    max_index(a, m, k);
    max_index(b, k, n);
    // SAFETY: all index ranges touched by the kernel were bounds-checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.0.as_ptr(),
            a.1,
            a.2,
            b.0.as_ptr(),
            b.1,
            b.2,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
