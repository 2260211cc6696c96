use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore};

use super::matrix::{product, product_acc};
use super::{Matrix, ParamId, ParamStore, Real};
use crate::error::{Error, Result};
use crate::mask::AttentionMask;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T> {
    Leaf(Option<ParamId>),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    Relu(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Matrix<T>,
        inv_std: Vec<T>,
    },
    MulConst(Var, Matrix<T>),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    Flatten(Var),
    Sum(Var),
    WeightedSse {
        pred: Var,
        residual: Matrix<T>,
        weights: Vec<T>,
    },
}

struct Node<T> {
    value: Matrix<T>,
    op: Op<T>,
}

/// One forward pass worth of recorded operations.
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of a scalar with respect to every node of the tape that
/// produced it.
pub struct Gradients<T> {
    grads: Vec<Option<Matrix<T>>>,
}

impl<T: Real> Gradients<T> {
    pub fn wrt(&self, v: Var) -> Option<&Matrix<T>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }
}

fn mismatch(op: &'static str, l: (usize, usize), r: (usize, usize)) -> Error {
    Error::ShapeMismatch {
        op,
        left: l,
        right: r,
    }
}

impl<T: Real> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Real> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    fn push(&mut self, op_name: &'static str, value: Matrix<T>, op: Op<T>) -> Result<Var> {
        if !value.is_finite() {
            return Err(Error::NumericError { op: op_name });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    /// Input that no parameter gradient flows into (its gradient is still
    /// available through [`Gradients::wrt`]).
    pub fn constant(&mut self, value: Matrix<T>) -> Result<Var> {
        self.push("constant", value, Op::Leaf(None))
    }

    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Result<Var> {
        self.push("param", store.value(id).clone(), Op::Leaf(Some(id)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.rows() {
            return Err(mismatch("matmul", va.shape(), vb.shape()));
        }
        let out = product(va, false, vb, false);
        self.push("matmul", out, Op::MatMul(a, b))
    }

    /// `a * b^T`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.cols() != vb.cols() {
            return Err(mismatch("matmul_bt", va.shape(), vb.shape()));
        }
        let out = product(va, false, vb, true);
        self.push("matmul_bt", out, Op::MatMulBt(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return Err(mismatch("add", va.shape(), vb.shape()));
        }
        let mut out = va.clone();
        out.add_assign(vb);
        self.push("add", out, Op::Add(a, b))
    }

    /// Adds the `1 x c` row `bias` to every row of `a`.
    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(bias));
        if vb.rows() != 1 || vb.cols() != va.cols() {
            return Err(mismatch("add_row", va.shape(), vb.shape()));
        }
        let mut out = va.clone();
        for r in 0..out.rows() {
            for (o, &b) in out.row_mut(r).iter_mut().zip(vb.data()) {
                *o = *o + b;
            }
        }
        self.push("add_row", out, Op::AddRow(a, bias))
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var> {
        let out = self.value(a).map(|v| v * s);
        self.push("scale", out, Op::Scale(a, s))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let out = self.value(a).map(|v| if v > T::zero() { v } else { T::zero() });
        self.push("relu", out, Op::Relu(a))
    }

    /// Row-wise softmax. Entries equal to [`Real::mask_sentinel`] get exactly
    /// zero weight; a row made only of sentinels is an error.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let mut out = self.value(a).clone();
        softmax_in_place(&mut out, |_| false)?;
        self.push("softmax_rows", out, Op::Softmax(a))
    }

    /// Writes the sentinel into every disallowed position of `a` and applies
    /// [`Tape::softmax_rows`]. Padding queries (rows at or beyond
    /// `mask.valid_queries()`) with no allowed key produce a zero row; a valid
    /// query with no allowed key is [`Error::AllMaskedRow`].
    pub fn masked_softmax(&mut self, a: Var, mask: &AttentionMask) -> Result<Var> {
        let va = self.value(a);
        if va.shape() != mask.shape() {
            return Err(mismatch("masked_softmax", va.shape(), mask.shape()));
        }
        let mut out = va.clone();
        let sentinel = T::mask_sentinel();
        for r in 0..out.rows() {
            for (c, v) in out.row_mut(r).iter_mut().enumerate() {
                if !mask.allowed(r, c) {
                    *v = sentinel;
                }
            }
        }
        let valid = mask.valid_queries();
        softmax_in_place(&mut out, |row| row >= valid)?;
        self.push("masked_softmax", out, Op::Softmax(a))
    }

    /// Per-row layer normalization over the feature axis followed by the
    /// affine map `gamma * xhat + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: T) -> Result<Var> {
        let (vx, vg, vb) = (self.value(x), self.value(gamma), self.value(beta));
        let h = vx.cols();
        if vg.shape() != (1, h) || vb.shape() != (1, h) {
            return Err(mismatch("layer_norm", vx.shape(), vg.shape()));
        }
        let hf = T::of(h as f64);
        let mut xhat = Matrix::zeros(vx.rows(), h);
        let mut out = Matrix::zeros(vx.rows(), h);
        let mut inv_std = Vec::with_capacity(vx.rows());
        for r in 0..vx.rows() {
            let row = vx.row(r);
            let mean = row.iter().fold(T::zero(), |s, &v| s + v) / hf;
            let var = row
                .iter()
                .fold(T::zero(), |s, &v| s + (v - mean) * (v - mean))
                / hf;
            let is = T::one() / (var + eps).sqrt();
            inv_std.push(is);
            let xr = xhat.row_mut(r);
            for (o, &v) in xr.iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
            let xr = xhat.row(r).to_vec();
            for (c, o) in out.row_mut(r).iter_mut().enumerate() {
                *o = vg.data()[c] * xr[c] + vb.data()[c];
            }
        }
        self.push(
            "layer_norm",
            out,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    /// Inverted dropout: with `training` each entry is zeroed with
    /// probability `rate` and survivors are scaled by `1 / (1 - rate)`;
    /// otherwise (or with `rate == 0`) the input is returned unchanged.
    pub fn dropout(
        &mut self,
        x: Var,
        rate: f64,
        training: bool,
        rng: &mut dyn RngCore,
    ) -> Result<Var> {
        if !training || rate <= 0.0 {
            return Ok(x);
        }
        assert!(rate < 1.0, "dropout rate must be below 1");
        let (rows, cols) = self.shape(x);
        let keep = T::of(1.0 / (1.0 - rate));
        let data = (0..rows * cols)
            .map(|_| {
                if rng.random::<f64>() < rate {
                    T::zero()
                } else {
                    keep
                }
            })
            .collect();
        let scale = Matrix::from_vec(rows, cols, data)?;
        self.mul_const(x, scale)
    }

    /// Element-wise product with a constant matrix.
    pub fn mul_const(&mut self, x: Var, m: Matrix<T>) -> Result<Var> {
        let vx = self.value(x);
        if vx.shape() != m.shape() {
            return Err(mismatch("mul_const", vx.shape(), m.shape()));
        }
        let mut out = vx.clone();
        for (o, &s) in out.data_mut().iter_mut().zip(m.data()) {
            *o = *o * s;
        }
        self.push("mul_const", out, Op::MulConst(x, m))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let va = self.value(a);
        if start + len > va.cols() {
            return Err(mismatch("slice_cols", va.shape(), (start, len)));
        }
        let mut out = Matrix::zeros(va.rows(), len);
        for r in 0..va.rows() {
            out.row_mut(r).copy_from_slice(&va.row(r)[start..start + len]);
        }
        self.push("slice_cols", out, Op::SliceCols(a, start))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts.first().map_or(0, |&p| self.shape(p).0);
        let mut cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.0 != rows {
                return Err(mismatch("concat_cols", (rows, cols), s));
            }
            cols += s.1;
        }
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let vp = self.value(p);
            for r in 0..rows {
                out.row_mut(r)[offset..offset + vp.cols()].copy_from_slice(vp.row(r));
            }
            offset += vp.cols();
        }
        self.push("concat_cols", out, Op::ConcatCols(parts.to_vec()))
    }

    /// Reshapes to a single row (row-major order).
    pub fn flatten(&mut self, a: Var) -> Result<Var> {
        let va = self.value(a);
        let out = Matrix::from_vec(1, va.len(), va.data().to_vec())?;
        self.push("flatten", out, Op::Flatten(a))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().fold(T::zero(), |s, &v| s + v);
        self.push("sum", Matrix::filled(1, 1, s), Op::Sum(a))
    }

    /// `sum_i w_i sum_j (pred_ij - target_ij)^2`, one weight per row.
    pub fn weighted_sse(&mut self, pred: Var, target: &Matrix<T>, weights: &[T]) -> Result<Var> {
        let vp = self.value(pred);
        if vp.shape() != target.shape() {
            return Err(mismatch("weighted_sse", vp.shape(), target.shape()));
        }
        if weights.len() != vp.rows() {
            return Err(mismatch("weighted_sse", vp.shape(), (weights.len(), 1)));
        }
        let mut residual = vp.clone();
        let mut total = T::zero();
        for r in 0..residual.rows() {
            let mut row_sum = T::zero();
            for (d, &t) in residual.row_mut(r).iter_mut().zip(target.row(r)) {
                *d = *d - t;
                row_sum = row_sum + *d * *d;
            }
            total = total + weights[r] * row_sum;
        }
        self.push(
            "weighted_sse",
            Matrix::filled(1, 1, total),
            Op::WeightedSse {
                pred,
                residual,
                weights: weights.to_vec(),
            },
        )
    }

    /// Back-propagates from the scalar `loss` and adds `d loss / d param`
    /// into the gradient slot of every parameter leaf. Slots are not zeroed
    /// first, so repeated calls accumulate.
    pub fn backward(&self, loss: Var, store: &mut ParamStore<T>) -> Result<Gradients<T>> {
        self.backward_scaled(loss, T::one(), store)
    }

    /// As [`Tape::backward`] for `seed * loss`.
    pub fn backward_scaled(
        &self,
        loss: Var,
        seed: T,
        store: &mut ParamStore<T>,
    ) -> Result<Gradients<T>> {
        let (rows, cols) = self.shape(loss);
        if (rows, cols) != (1, 1) {
            return Err(Error::NotScalar { rows, cols });
        }
        let mut grads: Vec<Option<Matrix<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, seed));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf(param) => {
                    if let Some(id) = param {
                        store.grad_mut(*id).add_assign(&g);
                    }
                    grads[idx] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    accumulate_product(&mut grads, *a, &g, false, vb, true);
                    accumulate_product(&mut grads, *b, va, true, &g, false);
                }
                Op::MatMulBt(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    accumulate_product(&mut grads, *a, &g, false, vb, false);
                    accumulate_product(&mut grads, *b, &g, true, va, false);
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, &g);
                    accumulate(&mut grads, *b, &g);
                }
                Op::AddRow(a, bias) => {
                    let mut gb = Matrix::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (s, &v) in gb.data_mut().iter_mut().zip(g.row(r)) {
                            *s = *s + v;
                        }
                    }
                    accumulate(&mut grads, *a, &g);
                    accumulate(&mut grads, *bias, &gb);
                }
                Op::Scale(a, s) => {
                    let s = *s;
                    accumulate(&mut grads, *a, &g.map(|v| v * s));
                }
                Op::Relu(a) => {
                    let mut ga = g;
                    for (d, &y) in ga.data_mut().iter_mut().zip(node.value.data()) {
                        if y <= T::zero() {
                            *d = T::zero();
                        }
                    }
                    accumulate(&mut grads, *a, &ga);
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let mut ga = g;
                    for r in 0..y.rows() {
                        let yr = y.row(r);
                        let gr = ga.row_mut(r);
                        let dot = gr.iter().zip(yr).fold(T::zero(), |s, (&gv, &yv)| s + gv * yv);
                        for (gv, &yv) in gr.iter_mut().zip(yr) {
                            *gv = yv * (*gv - dot);
                        }
                    }
                    accumulate(&mut grads, *a, &ga);
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let vg = self.value(*gamma);
                    let h = xhat.cols();
                    let hf = T::of(h as f64);
                    let mut dgamma = Matrix::zeros(1, h);
                    let mut dbeta = Matrix::zeros(1, h);
                    let mut dx = Matrix::zeros(xhat.rows(), h);
                    let mut dxhat = vec![T::zero(); h];
                    for r in 0..xhat.rows() {
                        let gr = g.row(r);
                        let xr = xhat.row(r);
                        let mut sum_d = T::zero();
                        let mut sum_dx = T::zero();
                        for c in 0..h {
                            dbeta.data_mut()[c] = dbeta.data()[c] + gr[c];
                            dgamma.data_mut()[c] = dgamma.data()[c] + gr[c] * xr[c];
                            dxhat[c] = gr[c] * vg.data()[c];
                            sum_d = sum_d + dxhat[c];
                            sum_dx = sum_dx + dxhat[c] * xr[c];
                        }
                        let k = inv_std[r] / hf;
                        for (c, o) in dx.row_mut(r).iter_mut().enumerate() {
                            *o = k * (hf * dxhat[c] - sum_d - xr[c] * sum_dx);
                        }
                    }
                    accumulate(&mut grads, *x, &dx);
                    accumulate(&mut grads, *gamma, &dgamma);
                    accumulate(&mut grads, *beta, &dbeta);
                }
                Op::MulConst(a, m) => {
                    let mut ga = g;
                    for (d, &s) in ga.data_mut().iter_mut().zip(m.data()) {
                        *d = *d * s;
                    }
                    accumulate(&mut grads, *a, &ga);
                }
                Op::SliceCols(a, start) => {
                    let (rows, cols) = self.shape(*a);
                    let slot = slot(&mut grads, *a, rows, cols);
                    for r in 0..rows {
                        let dst = &mut slot.row_mut(r)[*start..*start + g.cols()];
                        for (d, &v) in dst.iter_mut().zip(g.row(r)) {
                            *d = *d + v;
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let mut offset = 0;
                    for &p in parts {
                        let (rows, cols) = self.shape(p);
                        let slot = slot(&mut grads, p, rows, cols);
                        for r in 0..rows {
                            let src = &g.row(r)[offset..offset + cols];
                            for (d, &v) in slot.row_mut(r).iter_mut().zip(src) {
                                *d = *d + v;
                            }
                        }
                        offset += cols;
                    }
                }
                Op::Flatten(a) => {
                    let (rows, cols) = self.shape(*a);
                    let ga = Matrix::from_vec(rows, cols, g.into_data())?;
                    accumulate(&mut grads, *a, &ga);
                }
                Op::Sum(a) => {
                    let (rows, cols) = self.shape(*a);
                    accumulate(&mut grads, *a, &Matrix::filled(rows, cols, g.get(0, 0)));
                }
                Op::WeightedSse {
                    pred,
                    residual,
                    weights,
                } => {
                    let two_g = T::of(2.0) * g.get(0, 0);
                    let mut gp = residual.clone();
                    for (r, &w) in weights.iter().enumerate() {
                        for d in gp.row_mut(r) {
                            *d = *d * two_g * w;
                        }
                    }
                    accumulate(&mut grads, *pred, &gp);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn slot<T: Real>(grads: &mut [Option<Matrix<T>>], v: Var, rows: usize, cols: usize) -> &mut Matrix<T> {
    grads[v.0].get_or_insert_with(|| Matrix::zeros(rows, cols))
}

fn accumulate<T: Real>(grads: &mut [Option<Matrix<T>>], v: Var, g: &Matrix<T>) {
    match &mut grads[v.0] {
        Some(acc) => acc.add_assign(g),
        slot @ None => *slot = Some(g.clone()),
    }
}

/// `grad[v] += op(a) * op(b)`.
fn accumulate_product<T: Real>(
    grads: &mut [Option<Matrix<T>>],
    v: Var,
    a: &Matrix<T>,
    ta: bool,
    b: &Matrix<T>,
    tb: bool,
) {
    match &mut grads[v.0] {
        Some(acc) => product_acc(acc, a, ta, b, tb),
        slot @ None => *slot = Some(product(a, ta, b, tb)),
    }
}

/// Numerically stable row softmax. Rows consisting only of sentinels are
/// zeroed when `may_be_empty(row)` holds and rejected otherwise.
fn softmax_in_place<T: Real>(m: &mut Matrix<T>, may_be_empty: impl Fn(usize) -> bool) -> Result<()> {
    let sentinel = T::mask_sentinel();
    for r in 0..m.rows() {
        let row = m.row_mut(r);
        if row.is_empty() {
            continue;
        }
        let max = row.iter().fold(sentinel, |m, &v| m.max(v));
        if max == sentinel && row.iter().all(|&v| v == sentinel) {
            if may_be_empty(r) {
                row.iter_mut().for_each(|v| *v = T::zero());
                continue;
            }
            return Err(Error::AllMaskedRow { row: r });
        }
        let mut total = T::zero();
        for v in row.iter_mut() {
            *v = if *v == sentinel {
                T::zero()
            } else {
                (*v - max).exp()
            };
            total = total + *v;
        }
        for v in row.iter_mut() {
            *v = *v / total;
        }
    }
    Ok(())
}
