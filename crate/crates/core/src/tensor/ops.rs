use rand::Rng;
use serde::{Deserialize, Serialize};

use super::graph::{Graph, Node, Var};
use super::{Result, Scalar, Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolKind {
    Max,
    Avg,
    /// Population variance.
    Var,
}

pub(crate) enum Op<F> {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Reshape(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    ScaleRows(Var, Var),
    ScaleCols(Var, Var),
    Scale(Var, F),
    Act(Var, Activation),
    Softmax {
        x: Var,
        axis: usize,
    },
    Pool {
        x: Var,
        axis: usize,
        kind: PoolKind,
        mask: Option<Vec<bool>>,
        argmax: Vec<usize>,
    },
    Conv1d {
        x: Var,
        w: Var,
        b: Var,
    },
    Depthwise {
        x: Var,
        w: Var,
        b: Var,
    },
    PadCols {
        x: Var,
        left: usize,
    },
    Concat {
        xs: Vec<Var>,
        axis: usize,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    SelectRows {
        x: Var,
        rows: Vec<usize>,
    },
    Sum(Var),
    Mean(Var),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
    },
    Dropout {
        x: Var,
        keep: Vec<F>,
    },
}

impl<F> Op<F> {
    pub(crate) fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            MatMul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) | AddRow(a, b) | ScaleRows(a, b)
            | ScaleCols(a, b) => vec![*a, *b],
            Transpose(x) | Reshape(x) | Scale(x, _) | Act(x, _) | Sum(x) | Mean(x) => vec![*x],
            Softmax { x, .. }
            | Pool { x, .. }
            | PadCols { x, .. }
            | SliceCols { x, .. }
            | SelectRows { x, .. }
            | Dropout { x, .. } => vec![*x],
            Conv1d { x, w, b } | Depthwise { x, w, b } => vec![*x, *w, *b],
            Concat { xs, .. } => xs.clone(),
            CrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

fn sigmoid<F: Scalar>(x: F) -> F {
    if x >= F::zero() {
        F::one() / (F::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

fn mismatch(op: &'static str, a: &[usize], b: &[usize]) -> TensorError {
    TensorError::Dimension {
        op,
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    }
}

/// Lane layout for reductions over one axis of a rank-1/2 tensor:
/// `(lane count, lane length, lane start stride, element stride)`.
fn lanes(shape: &[usize], axis: usize) -> Result<(usize, usize, usize, usize)> {
    match (shape, axis) {
        ([n], 0) => Ok((1, *n, 0, 1)),
        ([m, n], 1) => Ok((*m, *n, *n, 1)),
        ([m, n], 0) => Ok((*n, *m, 1, *n)),
        _ => Err(TensorError::Invalid(format!(
            "axis {axis} invalid for shape {shape:?}"
        ))),
    }
}

fn check_mask(op: &'static str, mask: Option<&[bool]>, len: usize) -> Result<()> {
    if let Some(m) = mask {
        if m.len() != len {
            return Err(mismatch(op, &[m.len()], &[len]));
        }
        if !m.iter().any(|&b| b) {
            return Err(TensorError::EmptySequence { op });
        }
    }
    Ok(())
}

fn matmul_raw<F: Scalar>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); m * n];
    for i in 0..m {
        let row = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == F::zero() {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in row.iter_mut().zip(brow) {
                *o = *o + av * bv;
            }
        }
    }
    out
}

fn transpose_raw<F: Scalar>(a: &[F], m: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); m * n];
    for i in 0..m {
        for j in 0..n {
            out[j * m + i] = a[i * n + j];
        }
    }
    out
}

impl<F: Scalar> Graph<F> {
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = ta.dims2("matmul")?;
        let (k2, n) = tb.dims2("matmul")?;
        if k != k2 {
            return Err(mismatch("matmul", ta.shape(), tb.shape()));
        }
        let data = matmul_raw(ta.data(), tb.data(), m, k, n);
        Ok(self.push(Tensor::new(vec![m, n], data)?, Op::MatMul(a, b)))
    }

    /// `x·W + b` for `x: [m, in]`, `W: [in, out]`, `b: [out]`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_row(y, b)
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let (m, n) = t.dims2("transpose")?;
        let data = transpose_raw(t.data(), m, n);
        Ok(self.push(Tensor::new(vec![n, m], data)?, Op::Transpose(x)))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(x).clone().reshaped(shape.to_vec())?;
        Ok(self.push(t, Op::Reshape(x)))
    }

    fn zip_same(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(F, F) -> F) -> Result<Vec<F>> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(mismatch(op, ta.shape(), tb.shape()));
        }
        Ok(ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let data = self.zip_same(a, b, "add", |x, y| x + y)?;
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let data = self.zip_same(a, b, "sub", |x, y| x - y)?;
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let data = self.zip_same(a, b, "mul", |x, y| x * y)?;
        let shape = self.shape(a).to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::Mul(a, b)))
    }

    /// `x[m, n] + b[n]` broadcast over rows.
    pub fn add_row(&mut self, x: Var, b: Var) -> Result<Var> {
        let (tx, tb) = (self.value(x), self.value(b));
        let (_, n) = tx.dims2("add_row")?;
        if tb.shape() != [n] {
            return Err(mismatch("add_row", tx.shape(), tb.shape()));
        }
        let data = tx
            .data()
            .chunks(n)
            .flat_map(|row| row.iter().zip(tb.data()).map(|(&a, &c)| a + c))
            .collect();
        let shape = tx.shape().to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::AddRow(x, b)))
    }

    /// Scales row `i` of `x[m, n]` by `g[i]` (per-position gate).
    pub fn scale_rows(&mut self, x: Var, g: Var) -> Result<Var> {
        let (tx, tg) = (self.value(x), self.value(g));
        let (m, n) = tx.dims2("scale_rows")?;
        if tg.shape() != [m] {
            return Err(mismatch("scale_rows", tx.shape(), tg.shape()));
        }
        let data = tx
            .data()
            .chunks(n)
            .zip(tg.data())
            .flat_map(|(row, &s)| row.iter().map(move |&a| a * s))
            .collect();
        let shape = tx.shape().to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::ScaleRows(x, g)))
    }

    /// Scales column `j` of `x[m, n]` by `g[j]` (per-feature gate).
    pub fn scale_cols(&mut self, x: Var, g: Var) -> Result<Var> {
        let (tx, tg) = (self.value(x), self.value(g));
        let (_, n) = tx.dims2("scale_cols")?;
        if tg.shape() != [n] {
            return Err(mismatch("scale_cols", tx.shape(), tg.shape()));
        }
        let data = tx
            .data()
            .chunks(n)
            .flat_map(|row| row.iter().zip(tg.data()).map(|(&a, &s)| a * s))
            .collect();
        let shape = tx.shape().to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::ScaleCols(x, g)))
    }

    pub fn scale(&mut self, x: Var, factor: F) -> Result<Var> {
        let t = self.value(x);
        let data = t.data().iter().map(|&a| a * factor).collect();
        let shape = t.shape().to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::Scale(x, factor)))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Result<Var> {
        let t = self.value(x);
        let f: fn(F) -> F = match kind {
            Activation::Relu => |a| if a > F::zero() { a } else { F::zero() },
            Activation::Tanh => |a| a.tanh(),
            Activation::Sigmoid => sigmoid,
        };
        let data = t.data().iter().map(|&a| f(a)).collect();
        let shape = t.shape().to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::Act(x, kind)))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Relu)
    }

    pub fn sigmoid(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Sigmoid)
    }

    pub fn tanh(&mut self, x: Var) -> Result<Var> {
        self.activation(x, Activation::Tanh)
    }

    pub fn softmax(&mut self, x: Var, axis: usize) -> Result<Var> {
        self.masked_softmax(x, axis, None)
    }

    /// Softmax along `axis`; masked entries get probability exactly zero.
    pub fn masked_softmax(&mut self, x: Var, axis: usize, mask: Option<&[bool]>) -> Result<Var> {
        let t = self.value(x);
        let (count, len, lane_stride, stride) = lanes(t.shape(), axis)?;
        check_mask("softmax", mask, len)?;
        let keep = |i: usize| mask.map_or(true, |m| m[i]);
        let src = t.data();
        let mut out = vec![F::zero(); src.len()];
        for lane in 0..count {
            let base = lane * lane_stride;
            let mut max = F::neg_infinity();
            for i in (0..len).filter(|&i| keep(i)) {
                max = max.max(src[base + i * stride]);
            }
            let mut total = F::zero();
            for i in (0..len).filter(|&i| keep(i)) {
                let e = (src[base + i * stride] - max).exp();
                out[base + i * stride] = e;
                total = total + e;
            }
            for i in (0..len).filter(|&i| keep(i)) {
                out[base + i * stride] = out[base + i * stride] / total;
            }
        }
        let shape = t.shape().to_vec();
        Ok(self.push(Tensor::new(shape, out)?, Op::Softmax { x, axis }))
    }

    /// Reduces `x[T, d]` over `axis` (0: sequence positions, 1: features),
    /// skipping masked entries of that axis. Output is rank 1.
    pub fn pool(&mut self, x: Var, axis: usize, mask: Option<&[bool]>, kind: PoolKind) -> Result<Var> {
        let t = self.value(x);
        t.dims2("pool")?;
        let (count, len, lane_stride, stride) = lanes(t.shape(), axis)?;
        check_mask("pool", mask, len)?;
        let keep = |i: usize| mask.map_or(true, |m| m[i]);
        let n_kept = (0..len).filter(|&i| keep(i)).count();
        let denom = F::of(n_kept as f64);
        let src = t.data();
        let mut out = Vec::with_capacity(count);
        let mut argmax = Vec::new();
        for lane in 0..count {
            let base = lane * lane_stride;
            let vals = (0..len).filter(|&i| keep(i)).map(|i| (i, src[base + i * stride]));
            match kind {
                PoolKind::Max => {
                    let (mut best_i, mut best) = (0, F::neg_infinity());
                    for (i, v) in vals {
                        if v > best {
                            best = v;
                            best_i = i;
                        }
                    }
                    out.push(best);
                    argmax.push(best_i);
                }
                PoolKind::Avg => out.push(vals.map(|(_, v)| v).sum::<F>() / denom),
                PoolKind::Var => {
                    let mean = vals.clone().map(|(_, v)| v).sum::<F>() / denom;
                    let var = vals.map(|(_, v)| (v - mean) * (v - mean)).sum::<F>() / denom;
                    out.push(var);
                }
            }
        }
        let value = Tensor::new(vec![count], out)?;
        let op = Op::Pool {
            x,
            axis,
            kind,
            mask: mask.map(<[bool]>::to_vec),
            argmax,
        };
        Ok(self.push(value, op))
    }

    /// Masked pooling over sequence positions: `x[T, d] -> [d]`.
    pub fn pool_axis(&mut self, x: Var, mask: &[bool], kind: PoolKind) -> Result<Var> {
        self.pool(x, 0, Some(mask), kind)
    }

    /// Valid (unpadded, stride 1) cross-correlation.
    /// `x[C_in, L]`, `w[C_out, C_in, k]`, `b[C_out]` -> `[C_out, L - k + 1]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        let (c_in, len) = tx.dims2("conv1d")?;
        let [c_out, wc_in, k] = tw.shape()[..] else {
            return Err(TensorError::Rank {
                op: "conv1d",
                expected: 3,
                shape: tw.shape().to_vec(),
            });
        };
        if wc_in != c_in {
            return Err(mismatch("conv1d", tx.shape(), tw.shape()));
        }
        if tb.shape() != [c_out] {
            return Err(mismatch("conv1d", tw.shape(), tb.shape()));
        }
        if k > len {
            return Err(TensorError::KernelTooLarge { kernel: k, length: len });
        }
        let out_len = len - k + 1;
        let (xd, wd, bd) = (tx.data(), tw.data(), tb.data());
        let mut out = vec![F::zero(); c_out * out_len];
        for o in 0..c_out {
            for t in 0..out_len {
                let mut acc = bd[o];
                for i in 0..c_in {
                    for j in 0..k {
                        acc = acc + wd[(o * c_in + i) * k + j] * xd[i * len + t + j];
                    }
                }
                out[o * out_len + t] = acc;
            }
        }
        Ok(self.push(Tensor::new(vec![c_out, out_len], out)?, Op::Conv1d { x, w, b }))
    }

    /// Per-channel cross-correlation: `x[C, L]`, `w[C, k]`, `b[C]` -> `[C, L - k + 1]`.
    pub fn depthwise_conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (tx, tw, tb) = (self.value(x), self.value(w), self.value(b));
        let (c, len) = tx.dims2("depthwise_conv1d")?;
        let (wc, k) = tw.dims2("depthwise_conv1d")?;
        if wc != c || tb.shape() != [c] {
            return Err(mismatch("depthwise_conv1d", tx.shape(), tw.shape()));
        }
        if k > len {
            return Err(TensorError::KernelTooLarge { kernel: k, length: len });
        }
        let out_len = len - k + 1;
        let (xd, wd, bd) = (tx.data(), tw.data(), tb.data());
        let mut out = vec![F::zero(); c * out_len];
        for ch in 0..c {
            for t in 0..out_len {
                let mut acc = bd[ch];
                for j in 0..k {
                    acc = acc + wd[ch * k + j] * xd[ch * len + t + j];
                }
                out[ch * out_len + t] = acc;
            }
        }
        Ok(self.push(Tensor::new(vec![c, out_len], out)?, Op::Depthwise { x, w, b }))
    }

    /// Zero-pads the columns of `x[C, L]` on both sides.
    pub fn pad_cols(&mut self, x: Var, left: usize, right: usize) -> Result<Var> {
        let t = self.value(x);
        let (c, len) = t.dims2("pad_cols")?;
        let width = len + left + right;
        let mut out = vec![F::zero(); c * width];
        for ch in 0..c {
            out[ch * width + left..ch * width + left + len].copy_from_slice(t.row(ch));
        }
        Ok(self.push(Tensor::new(vec![c, width], out)?, Op::PadCols { x, left }))
    }

    /// Concatenates rank-2 tensors along `axis`.
    pub fn concat(&mut self, xs: &[Var], axis: usize) -> Result<Var> {
        let first = *xs
            .first()
            .ok_or_else(|| TensorError::Invalid("concat of nothing".into()))?;
        let (m0, n0) = self.value(first).dims2("concat")?;
        let mut dims = Vec::with_capacity(xs.len());
        for &v in xs {
            let (m, n) = self.value(v).dims2("concat")?;
            let ok = if axis == 0 { n == n0 } else { m == m0 };
            if !ok || axis > 1 {
                return Err(mismatch("concat", self.shape(first), self.shape(v)));
            }
            dims.push((m, n));
        }
        let (shape, data) = if axis == 0 {
            let rows = dims.iter().map(|d| d.0).sum();
            let data = xs.iter().flat_map(|&v| self.value(v).data().iter().copied()).collect();
            (vec![rows, n0], data)
        } else {
            let cols: usize = dims.iter().map(|d| d.1).sum();
            let mut data = Vec::with_capacity(m0 * cols);
            for r in 0..m0 {
                for &v in xs {
                    data.extend_from_slice(self.value(v).row(r));
                }
            }
            (vec![m0, cols], data)
        };
        Ok(self.push(Tensor::new(shape, data)?, Op::Concat { xs: xs.to_vec(), axis }))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let t = self.value(x);
        let (m, n) = t.dims2("slice_cols")?;
        if start >= end || end > n {
            return Err(TensorError::Invalid(format!(
                "slice_cols {start}..{end} outside {n} columns"
            )));
        }
        let data = (0..m).flat_map(|r| t.row(r)[start..end].to_vec()).collect();
        Ok(self.push(Tensor::new(vec![m, end - start], data)?, Op::SliceCols { x, start }))
    }

    pub fn select_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var> {
        let t = self.value(x);
        let (m, n) = t.dims2("select_rows")?;
        if let Some(&bad) = rows.iter().find(|&&r| r >= m) {
            return Err(TensorError::Invalid(format!("row {bad} outside {m} rows")));
        }
        let data = rows.iter().flat_map(|&r| t.row(r).to_vec()).collect();
        let value = Tensor::new(vec![rows.len(), n], data)?;
        Ok(self.push(value, Op::SelectRows { x, rows: rows.to_vec() }))
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).data().iter().copied().sum();
        Ok(self.push(Tensor::scalar(s), Op::Sum(x)))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        let s = t.data().iter().copied().sum::<F>() / F::of(t.len() as f64);
        Ok(self.push(Tensor::scalar(s), Op::Mean(x)))
    }

    /// Mean negative log-likelihood of `labels` under `softmax(logits[B, C])`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let t = self.value(logits);
        let (b, c) = t.dims2("cross_entropy")?;
        if labels.len() != b {
            return Err(mismatch("cross_entropy", t.shape(), &[labels.len()]));
        }
        let mut total = 0.0f64;
        for (r, &label) in labels.iter().enumerate() {
            if label >= c {
                return Err(TensorError::Label { label, classes: c });
            }
            let row: Vec<f64> = t.row(r).iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[label];
        }
        let value = Tensor::scalar(F::of(total / b as f64));
        Ok(self.push(value, Op::CrossEntropy { logits, labels: labels.to_vec() }))
    }

    /// Inverted dropout. Identity when `training` is false or `p == 0`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, training: bool, rng: &mut R) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(TensorError::DropoutRate(p));
        }
        if !training || p == 0.0 {
            return Ok(x);
        }
        let scale = F::of(1.0 / (1.0 - p));
        let t = self.value(x);
        let keep: Vec<F> = (0..t.len())
            .map(|_| if rng.gen::<f64>() < p { F::zero() } else { scale })
            .collect();
        let data = t.data().iter().zip(&keep).map(|(&a, &k)| a * k).collect();
        let shape = t.shape().to_vec();
        Ok(self.push(Tensor::new(shape, data)?, Op::Dropout { x, keep }))
    }
}

/// Pushes `upstream` (gradient w.r.t. `node`) into the node's inputs.
pub(crate) fn propagate<F: Scalar>(
    g: &Graph<F>,
    node: &Node<F>,
    upstream: &Tensor<F>,
    grads: &mut [Option<Tensor<F>>],
) {
    let dy = upstream.data();
    let y = node.value.data();
    let val = |v: Var| g.value(v);
    let mk = |shape: &[usize], data: Vec<F>| Tensor::new(shape.to_vec(), data).expect("gradient shape");
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (ta, tb) = (val(*a), val(*b));
            let (m, k) = (ta.shape()[0], ta.shape()[1]);
            let n = tb.shape()[1];
            if g.requires_grad(*a) {
                let bt = transpose_raw(tb.data(), k, n);
                g.accumulate(grads, *a, mk(ta.shape(), matmul_raw(dy, &bt, m, n, k)));
            }
            if g.requires_grad(*b) {
                let at = transpose_raw(ta.data(), m, k);
                g.accumulate(grads, *b, mk(tb.shape(), matmul_raw(&at, dy, k, m, n)));
            }
        }
        Op::Transpose(x) => {
            let (m, n) = (node.value.shape()[0], node.value.shape()[1]);
            g.accumulate(grads, *x, mk(val(*x).shape(), transpose_raw(dy, m, n)));
        }
        Op::Reshape(x) => g.accumulate(grads, *x, mk(val(*x).shape(), dy.to_vec())),
        Op::Add(a, b) => {
            g.accumulate(grads, *a, upstream.clone());
            g.accumulate(grads, *b, upstream.clone());
        }
        Op::Sub(a, b) => {
            g.accumulate(grads, *a, upstream.clone());
            g.accumulate(grads, *b, mk(upstream.shape(), dy.iter().map(|&d| -d).collect()));
        }
        Op::Mul(a, b) => {
            let (ta, tb) = (val(*a), val(*b));
            let da = dy.iter().zip(tb.data()).map(|(&d, &v)| d * v).collect();
            let db = dy.iter().zip(ta.data()).map(|(&d, &v)| d * v).collect();
            g.accumulate(grads, *a, mk(ta.shape(), da));
            g.accumulate(grads, *b, mk(tb.shape(), db));
        }
        Op::AddRow(x, b) => {
            g.accumulate(grads, *x, upstream.clone());
            let n = val(*b).len();
            let mut db = vec![F::zero(); n];
            for row in dy.chunks(n) {
                for (acc, &d) in db.iter_mut().zip(row) {
                    *acc = *acc + d;
                }
            }
            g.accumulate(grads, *b, mk(&[n], db));
        }
        Op::ScaleRows(x, s) => {
            let (tx, ts) = (val(*x), val(*s));
            let n = tx.shape()[1];
            let mut dx = Vec::with_capacity(tx.len());
            let mut ds = Vec::with_capacity(ts.len());
            for ((row_dy, row_x), &sv) in dy.chunks(n).zip(tx.data().chunks(n)).zip(ts.data()) {
                dx.extend(row_dy.iter().map(|&d| d * sv));
                ds.push(row_dy.iter().zip(row_x).map(|(&d, &xv)| d * xv).sum());
            }
            g.accumulate(grads, *x, mk(tx.shape(), dx));
            g.accumulate(grads, *s, mk(ts.shape(), ds));
        }
        Op::ScaleCols(x, s) => {
            let (tx, ts) = (val(*x), val(*s));
            let n = tx.shape()[1];
            let mut dx = Vec::with_capacity(tx.len());
            let mut ds = vec![F::zero(); n];
            for (row_dy, row_x) in dy.chunks(n).zip(tx.data().chunks(n)) {
                for j in 0..n {
                    dx.push(row_dy[j] * ts.data()[j]);
                    ds[j] = ds[j] + row_dy[j] * row_x[j];
                }
            }
            g.accumulate(grads, *x, mk(tx.shape(), dx));
            g.accumulate(grads, *s, mk(ts.shape(), ds));
        }
        Op::Scale(x, f) => {
            g.accumulate(grads, *x, mk(upstream.shape(), dy.iter().map(|&d| d * *f).collect()));
        }
        Op::Act(x, kind) => {
            let tx = val(*x);
            let dx = match kind {
                Activation::Relu => tx
                    .data()
                    .iter()
                    .zip(dy)
                    .map(|(&a, &d)| if a > F::zero() { d } else { F::zero() })
                    .collect(),
                Activation::Tanh => y.iter().zip(dy).map(|(&o, &d)| d * (F::one() - o * o)).collect(),
                Activation::Sigmoid => y.iter().zip(dy).map(|(&o, &d)| d * o * (F::one() - o)).collect(),
            };
            g.accumulate(grads, *x, mk(tx.shape(), dx));
        }
        Op::Softmax { x, axis } => {
            let (count, len, lane_stride, stride) = lanes(node.value.shape(), *axis).expect("checked");
            let mut dx = vec![F::zero(); y.len()];
            for lane in 0..count {
                let base = lane * lane_stride;
                let dot: F = (0..len).map(|i| y[base + i * stride] * dy[base + i * stride]).sum();
                for i in 0..len {
                    let at = base + i * stride;
                    dx[at] = y[at] * (dy[at] - dot);
                }
            }
            g.accumulate(grads, *x, mk(val(*x).shape(), dx));
        }
        Op::Pool { x, axis, kind, mask, argmax } => {
            let tx = val(*x);
            let (count, len, lane_stride, stride) = lanes(tx.shape(), *axis).expect("checked");
            let keep = |i: usize| mask.as_ref().map_or(true, |m| m[i]);
            let n_kept = F::of((0..len).filter(|&i| keep(i)).count() as f64);
            let src = tx.data();
            let mut dx = vec![F::zero(); tx.len()];
            for lane in 0..count {
                let base = lane * lane_stride;
                match kind {
                    PoolKind::Max => dx[base + argmax[lane] * stride] = dy[lane],
                    PoolKind::Avg => {
                        for i in (0..len).filter(|&i| keep(i)) {
                            dx[base + i * stride] = dy[lane] / n_kept;
                        }
                    }
                    PoolKind::Var => {
                        let mean = (0..len)
                            .filter(|&i| keep(i))
                            .map(|i| src[base + i * stride])
                            .sum::<F>()
                            / n_kept;
                        let two = F::of(2.0);
                        for i in (0..len).filter(|&i| keep(i)) {
                            let at = base + i * stride;
                            dx[at] = dy[lane] * two * (src[at] - mean) / n_kept;
                        }
                    }
                }
            }
            g.accumulate(grads, *x, mk(tx.shape(), dx));
        }
        Op::Conv1d { x, w, b } => {
            let (tx, tw) = (val(*x), val(*w));
            let (c_in, len) = (tx.shape()[0], tx.shape()[1]);
            let (c_out, k) = (tw.shape()[0], tw.shape()[2]);
            let out_len = len - k + 1;
            let (xd, wd) = (tx.data(), tw.data());
            let mut dx = vec![F::zero(); tx.len()];
            let mut dw = vec![F::zero(); tw.len()];
            let mut db = vec![F::zero(); c_out];
            for o in 0..c_out {
                for t in 0..out_len {
                    let d = dy[o * out_len + t];
                    db[o] = db[o] + d;
                    for i in 0..c_in {
                        for j in 0..k {
                            let wi = (o * c_in + i) * k + j;
                            let xi = i * len + t + j;
                            dx[xi] = dx[xi] + wd[wi] * d;
                            dw[wi] = dw[wi] + xd[xi] * d;
                        }
                    }
                }
            }
            g.accumulate(grads, *x, mk(tx.shape(), dx));
            g.accumulate(grads, *w, mk(tw.shape(), dw));
            g.accumulate(grads, *b, mk(&[c_out], db));
        }
        Op::Depthwise { x, w, b } => {
            let (tx, tw) = (val(*x), val(*w));
            let (c, len) = (tx.shape()[0], tx.shape()[1]);
            let k = tw.shape()[1];
            let out_len = len - k + 1;
            let (xd, wd) = (tx.data(), tw.data());
            let mut dx = vec![F::zero(); tx.len()];
            let mut dw = vec![F::zero(); tw.len()];
            let mut db = vec![F::zero(); c];
            for ch in 0..c {
                for t in 0..out_len {
                    let d = dy[ch * out_len + t];
                    db[ch] = db[ch] + d;
                    for j in 0..k {
                        let xi = ch * len + t + j;
                        dx[xi] = dx[xi] + wd[ch * k + j] * d;
                        dw[ch * k + j] = dw[ch * k + j] + xd[xi] * d;
                    }
                }
            }
            g.accumulate(grads, *x, mk(tx.shape(), dx));
            g.accumulate(grads, *w, mk(tw.shape(), dw));
            g.accumulate(grads, *b, mk(&[c], db));
        }
        Op::PadCols { x, left } => {
            let tx = val(*x);
            let (c, len) = (tx.shape()[0], tx.shape()[1]);
            let width = node.value.shape()[1];
            let dx = (0..c)
                .flat_map(|ch| dy[ch * width + left..ch * width + left + len].to_vec())
                .collect();
            g.accumulate(grads, *x, mk(tx.shape(), dx));
        }
        Op::Concat { xs, axis } => {
            if *axis == 0 {
                let mut offset = 0;
                for &v in xs {
                    let n = val(v).len();
                    g.accumulate(grads, v, mk(val(v).shape(), dy[offset..offset + n].to_vec()));
                    offset += n;
                }
            } else {
                let total = node.value.shape()[1];
                let mut col = 0;
                for &v in xs {
                    let (m, n) = (val(v).shape()[0], val(v).shape()[1]);
                    let dx = (0..m).flat_map(|r| dy[r * total + col..r * total + col + n].to_vec()).collect();
                    g.accumulate(grads, v, mk(val(v).shape(), dx));
                    col += n;
                }
            }
        }
        Op::SliceCols { x, start } => {
            let tx = val(*x);
            let (m, n) = (tx.shape()[0], tx.shape()[1]);
            let width = node.value.shape()[1];
            let mut dx = vec![F::zero(); m * n];
            for r in 0..m {
                dx[r * n + start..r * n + start + width].copy_from_slice(&dy[r * width..(r + 1) * width]);
            }
            g.accumulate(grads, *x, mk(tx.shape(), dx));
        }
        Op::SelectRows { x, rows } => {
            let tx = val(*x);
            let n = tx.shape()[1];
            let mut dx = vec![F::zero(); tx.len()];
            for (i, &r) in rows.iter().enumerate() {
                for j in 0..n {
                    dx[r * n + j] = dx[r * n + j] + dy[i * n + j];
                }
            }
            g.accumulate(grads, *x, mk(tx.shape(), dx));
        }
        Op::Sum(x) => {
            let tx = val(*x);
            g.accumulate(grads, *x, Tensor::full(tx.shape(), dy[0]));
        }
        Op::Mean(x) => {
            let tx = val(*x);
            let share = dy[0] / F::of(tx.len() as f64);
            g.accumulate(grads, *x, Tensor::full(tx.shape(), share));
        }
        Op::CrossEntropy { logits, labels } => {
            let tl = val(*logits);
            let (b, c) = (tl.shape()[0], tl.shape()[1]);
            let scale = dy[0].to_f64().unwrap_or(f64::NAN) / b as f64;
            let mut dx = Vec::with_capacity(b * c);
            for (r, &label) in labels.iter().enumerate() {
                let row: Vec<f64> = tl.row(r).iter().map(|v| v.to_f64().unwrap_or(f64::NAN)).collect();
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
                for (j, v) in row.iter().enumerate() {
                    let p = (v - max).exp() / z;
                    let onehot = if j == label { 1.0 } else { 0.0 };
                    dx.push(F::of((p - onehot) * scale));
                }
            }
            g.accumulate(grads, *logits, mk(tl.shape(), dx));
        }
        Op::Dropout { x, keep } => {
            let dx = dy.iter().zip(keep).map(|(&d, &k)| d * k).collect();
            g.accumulate(grads, *x, mk(upstream.shape(), dx));
        }
    }
}
