use std::borrow::Cow;

use super::{gemm, Tensor};
use crate::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    LeakyRelu(Var, f64),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    ConcatCols(Var, Var),
    TileRows(Var, usize),
    Mse(Var, Var),
    Sum(Var),
}

#[derive(Debug)]
struct Node<'p> {
    rows: usize,
    cols: usize,
    value: Cow<'p, [f64]>,
    op: Op,
    requires_grad: bool,
}

/// Records a forward pass over matrices for reverse-mode differentiation.
///
/// Parameters are borrowed (`'p`) rather than copied; everything else is
/// owned by the tape. A tape is single-use: build, call [`Tape::backward`],
/// drop.
#[derive(Debug, Default)]
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
}

/// Gradients of a scalar with respect to every node that required them.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, var: Var) -> Option<&[f64]> {
        self.grads.get(var.0).and_then(|g| g.as_deref())
    }

    /// Takes ownership of one gradient, zero-filled when nothing flowed into it.
    pub fn take(&mut self, var: Var, len: usize) -> Vec<f64> {
        self.grads
            .get_mut(var.0)
            .and_then(Option::take)
            .unwrap_or_else(|| vec![0.0; len])
    }
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, rows: usize, cols: usize, value: Cow<'p, [f64]>, op: Op, rg: bool) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            requires_grad: rg,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node<'p> {
        &self.nodes[v.0]
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        let n = self.node(v);
        (n.rows, n.cols)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.node(v).value
    }

    pub fn to_tensor(&self, v: Var) -> Tensor {
        let n = self.node(v);
        Tensor::matrix(n.rows, n.cols, n.value.to_vec()).expect("node dims are consistent")
    }

    /// Scalar value of a 1x1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.node(v).value[0]
    }

    /// Trainable leaf borrowing the tensor's storage.
    pub fn param(&mut self, t: &'p Tensor) -> Result<Var> {
        let (r, c) = t.dims2()?;
        Ok(self.push(r, c, Cow::Borrowed(t.values()), Op::Leaf, true))
    }

    /// Constant leaf; no gradient flows into it.
    pub fn constant(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> Result<Var> {
        if rows * cols != values.len() {
            return Err(Error::Dimension(format!(
                "constant {rows}x{cols} given {} values",
                values.len()
            )));
        }
        Ok(self.push(rows, cols, Cow::Owned(values), Op::Leaf, false))
    }

    /// Leaf that receives a gradient but is owned by the tape (inputs under test).
    pub fn variable(&mut self, rows: usize, cols: usize, values: Vec<f64>) -> Result<Var> {
        let v = self.constant(rows, cols, values)?;
        self.nodes[v.0].requires_grad = true;
        Ok(v)
    }

    fn rg(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.node(*v).requires_grad)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(Error::Dimension(format!(
                "matmul {m}x{k} by {k2}x{n}"
            )));
        }
        let mut out = vec![0.0; m * n];
        gemm(
            m,
            k,
            n,
            (self.value(a), k as isize, 1),
            (self.value(b), n as isize, 1),
            &mut out,
            0.0,
        );
        let rg = self.rg(&[a, b]);
        Ok(self.push(m, n, Cow::Owned(out), Op::MatMul(a, b), rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let da = self.dims(a);
        if da != self.dims(b) {
            return Err(Error::Dimension(format!(
                "add {:?} and {:?}",
                da,
                self.dims(b)
            )));
        }
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(da.0, da.1, Cow::Owned(out), Op::Add(a, b), rg))
    }

    /// `a[i, :] + row` for every row `i` of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        if self.dims(row) != (1, n) {
            return Err(Error::Dimension(format!(
                "add_row {m}x{n} with {:?}",
                self.dims(row)
            )));
        }
        let r = self.value(row);
        let mut out = self.value(a).to_vec();
        for chunk in out.chunks_exact_mut(n.max(1)) {
            for (o, x) in chunk.iter_mut().zip(r) {
                *o += x;
            }
        }
        let rg = self.rg(&[a, row]);
        Ok(self.push(m, n, Cow::Owned(out), Op::AddRow(a, row), rg))
    }

    /// `a[i, :] * row` elementwise for every row `i` of `a`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        if self.dims(row) != (1, n) {
            return Err(Error::Dimension(format!(
                "mul_row {m}x{n} with {:?}",
                self.dims(row)
            )));
        }
        let r = self.value(row);
        let mut out = self.value(a).to_vec();
        for chunk in out.chunks_exact_mut(n.max(1)) {
            for (o, x) in chunk.iter_mut().zip(r) {
                *o *= x;
            }
        }
        let rg = self.rg(&[a, row]);
        Ok(self.push(m, n, Cow::Owned(out), Op::MulRow(a, row), rg))
    }

    /// Elementwise product of two equally shaped nodes.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let da = self.dims(a);
        if da != self.dims(b) {
            return Err(Error::Dimension(format!(
                "mul {:?} and {:?}",
                da,
                self.dims(b)
            )));
        }
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        let rg = self.rg(&[a, b]);
        Ok(self.push(da.0, da.1, Cow::Owned(out), Op::Mul(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let (m, n) = self.dims(a);
        let out = self.value(a).iter().map(|x| x * s).collect();
        let rg = self.rg(&[a]);
        self.push(m, n, Cow::Owned(out), Op::Scale(a, s), rg)
    }

    /// Elementwise `max(x, slope * x)` for `slope` in (0, 1).
    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let (m, n) = self.dims(a);
        let out = self
            .value(a)
            .iter()
            .map(|&x| if x > 0.0 { x } else { slope * x })
            .collect();
        let rg = self.rg(&[a]);
        self.push(m, n, Cow::Owned(out), Op::LeakyRelu(a, slope), rg)
    }

    /// Row-wise normalization to zero mean and unit variance followed by a
    /// learnable elementwise gain and bias (both `1 x d`).
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var, eps: f64) -> Result<Var> {
        let (m, d) = self.dims(x);
        if d == 0 {
            return Err(Error::Dimension("layer_norm over zero features".into()));
        }
        if self.dims(gain) != (1, d) || self.dims(bias) != (1, d) {
            return Err(Error::Dimension(format!(
                "layer_norm gain/bias must be 1x{d}"
            )));
        }
        let xs = self.value(x);
        let g = self.value(gain);
        let b = self.value(bias);
        let mut xhat = vec![0.0; m * d];
        let mut rstd = vec![0.0; m];
        let mut out = vec![0.0; m * d];
        for i in 0..m {
            let row = &xs[i * d..(i + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + eps).sqrt();
            rstd[i] = rs;
            for j in 0..d {
                let h = (row[j] - mean) * rs;
                xhat[i * d + j] = h;
                out[i * d + j] = h * g[j] + b[j];
            }
        }
        let rg = self.rg(&[x, gain, bias]);
        Ok(self.push(
            m,
            d,
            Cow::Owned(out),
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    /// `[a | b]` along columns.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, na) = self.dims(a);
        let (m2, nb) = self.dims(b);
        if m != m2 {
            return Err(Error::Dimension(format!("concat {m} rows with {m2} rows")));
        }
        let mut out = Vec::with_capacity(m * (na + nb));
        let (va, vb) = (self.value(a), self.value(b));
        for i in 0..m {
            out.extend_from_slice(&va[i * na..(i + 1) * na]);
            out.extend_from_slice(&vb[i * nb..(i + 1) * nb]);
        }
        let rg = self.rg(&[a, b]);
        Ok(self.push(m, na + nb, Cow::Owned(out), Op::ConcatCols(a, b), rg))
    }

    /// Stacks `times` copies of `a` vertically (row `r` of the result is row
    /// `r % rows(a)` of `a`).
    pub fn tile_rows(&mut self, a: Var, times: usize) -> Var {
        if times == 1 {
            return a;
        }
        let (m, n) = self.dims(a);
        let v = self.value(a);
        let mut out = Vec::with_capacity(m * n * times);
        for _ in 0..times {
            out.extend_from_slice(v);
        }
        let rg = self.rg(&[a]);
        self.push(m * times, n, Cow::Owned(out), Op::TileRows(a, times), rg)
    }

    /// Mean of squared differences over all elements, as a 1x1 node.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        if self.dims(pred) != self.dims(target) {
            return Err(Error::Dimension(format!(
                "mse {:?} vs {:?}",
                self.dims(pred),
                self.dims(target)
            )));
        }
        let n = self.value(pred).len().max(1) as f64;
        let loss = self
            .value(pred)
            .iter()
            .zip(self.value(target))
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / n;
        let rg = self.rg(&[pred, target]);
        Ok(self.push(1, 1, Cow::Owned(vec![loss]), Op::Mse(pred, target), rg))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).iter().sum();
        let rg = self.rg(&[a]);
        self.push(1, 1, Cow::Owned(vec![s]), Op::Sum(a), rg)
    }

    /// Reverse sweep from a 1x1 node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if self.dims(loss) != (1, 1) {
            return Err(Error::Dimension(format!(
                "backward needs a scalar, got {:?}",
                self.dims(loss)
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(vec![1.0]);

        for idx in (0..=loss.0).rev() {
            let Some(dy) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if node.requires_grad {
                self.propagate(node, &dy, &mut grads);
            }
            grads[idx] = Some(dy);
        }
        Ok(Gradients { grads })
    }

    fn accumulate(&self, grads: &mut [Option<Vec<f64>>], v: Var, f: impl FnOnce(&mut [f64])) {
        let node = self.node(v);
        if !node.requires_grad {
            return;
        }
        let g = grads[v.0].get_or_insert_with(|| vec![0.0; node.value.len()]);
        f(g);
    }

    fn propagate(&self, node: &Node<'p>, dy: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let (m, n) = (node.rows, node.cols);
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (_, k) = self.dims(*a);
                let (va, vb) = (self.value(*a), self.value(*b));
                // dA = dY * B^T, dB = A^T * dY
                self.accumulate(grads, *a, |g| {
                    gemm(m, n, k, (dy, n as isize, 1), (vb, 1, n as isize), g, 1.0)
                });
                self.accumulate(grads, *b, |g| {
                    gemm(k, m, n, (va, 1, k as isize), (dy, n as isize, 1), g, 1.0)
                });
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    self.accumulate(grads, *v, |g| {
                        g.iter_mut().zip(dy).for_each(|(g, d)| *g += d)
                    });
                }
            }
            Op::AddRow(a, row) => {
                self.accumulate(grads, *a, |g| {
                    g.iter_mut().zip(dy).for_each(|(g, d)| *g += d)
                });
                self.accumulate(grads, *row, |g| {
                    for chunk in dy.chunks_exact(n.max(1)) {
                        g.iter_mut().zip(chunk).for_each(|(g, d)| *g += d);
                    }
                });
            }
            Op::MulRow(a, row) => {
                let (va, vr) = (self.value(*a), self.value(*row));
                self.accumulate(grads, *a, |g| {
                    for i in 0..m {
                        for j in 0..n {
                            g[i * n + j] += dy[i * n + j] * vr[j];
                        }
                    }
                });
                self.accumulate(grads, *row, |g| {
                    for i in 0..m {
                        for j in 0..n {
                            g[j] += dy[i * n + j] * va[i * n + j];
                        }
                    }
                });
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                self.accumulate(grads, *a, |g| {
                    for ((g, d), y) in g.iter_mut().zip(dy).zip(vb) {
                        *g += d * y;
                    }
                });
                self.accumulate(grads, *b, |g| {
                    for ((g, d), x) in g.iter_mut().zip(dy).zip(va) {
                        *g += d * x;
                    }
                });
            }
            Op::Scale(a, s) => {
                self.accumulate(grads, *a, |g| {
                    g.iter_mut().zip(dy).for_each(|(g, d)| *g += s * d)
                });
            }
            Op::LeakyRelu(a, slope) => {
                let va = self.value(*a);
                self.accumulate(grads, *a, |g| {
                    for ((g, d), x) in g.iter_mut().zip(dy).zip(va) {
                        *g += if *x > 0.0 { *d } else { slope * d };
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let d = n;
                let vg = self.value(*gain);
                self.accumulate(grads, *bias, |g| {
                    for chunk in dy.chunks_exact(d) {
                        g.iter_mut().zip(chunk).for_each(|(g, d)| *g += d);
                    }
                });
                self.accumulate(grads, *gain, |g| {
                    for (dyr, xr) in dy.chunks_exact(d).zip(xhat.chunks_exact(d)) {
                        for j in 0..d {
                            g[j] += dyr[j] * xr[j];
                        }
                    }
                });
                self.accumulate(grads, *x, |g| {
                    let df = d as f64;
                    for i in 0..m {
                        let dyr = &dy[i * d..(i + 1) * d];
                        let xr = &xhat[i * d..(i + 1) * d];
                        let mut sum_dxh = 0.0;
                        let mut sum_dxh_xh = 0.0;
                        for j in 0..d {
                            let dxh = dyr[j] * vg[j];
                            sum_dxh += dxh;
                            sum_dxh_xh += dxh * xr[j];
                        }
                        let scale = rstd[i] / df;
                        for j in 0..d {
                            let dxh = dyr[j] * vg[j];
                            g[i * d + j] += scale * (df * dxh - sum_dxh - xr[j] * sum_dxh_xh);
                        }
                    }
                });
            }
            Op::ConcatCols(a, b) => {
                let na = self.dims(*a).1;
                let nb = self.dims(*b).1;
                self.accumulate(grads, *a, |g| {
                    for i in 0..m {
                        for j in 0..na {
                            g[i * na + j] += dy[i * n + j];
                        }
                    }
                });
                self.accumulate(grads, *b, |g| {
                    for i in 0..m {
                        for j in 0..nb {
                            g[i * nb + j] += dy[i * n + na + j];
                        }
                    }
                });
            }
            Op::TileRows(a, times) => {
                let block = m / times * n;
                self.accumulate(grads, *a, |g| {
                    for chunk in dy.chunks_exact(block.max(1)) {
                        g.iter_mut().zip(chunk).for_each(|(g, d)| *g += d);
                    }
                });
            }
            Op::Mse(pred, target) => {
                let (vp, vt) = (self.value(*pred), self.value(*target));
                let scale = 2.0 * dy[0] / vp.len().max(1) as f64;
                self.accumulate(grads, *pred, |g| {
                    for ((g, p), t) in g.iter_mut().zip(vp).zip(vt) {
                        *g += scale * (p - t);
                    }
                });
                self.accumulate(grads, *target, |g| {
                    for ((g, p), t) in g.iter_mut().zip(vp).zip(vt) {
                        *g -= scale * (p - t);
                    }
                });
            }
            Op::Sum(a) => {
                self.accumulate(grads, *a, |g| g.iter_mut().for_each(|g| *g += dy[0]));
            }
        }
    }
}
