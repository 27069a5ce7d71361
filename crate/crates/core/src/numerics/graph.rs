//! Recorded op tape with reverse accumulation.
//!
//! A [`Graph`] is built forward, one primitive at a time; every primitive
//! checks its output for non-finite values and names itself in the error.
//! [`Graph::gradients`] then walks the tape backwards.

use super::params::ParamStore;
use super::tensor::{log1p_sum_exp, matmul_at_into, matmul_bt_into, matmul_into, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to a node on a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

const LAYER_NORM_EPS: f64 = 1e-5;
const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)

#[derive(Debug, Clone)]
enum Op<T> {
    Input,
    Param(String),
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    Tanh(Var),
    Gelu(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
        xhat: Vec<T>,
        inv_std: Vec<T>,
    },
    Embedding {
        table: Var,
        ids: Vec<usize>,
    },
    Rotary {
        x: Var,
        cos: Vec<T>,
        sin: Vec<T>,
    },
    Log1pSumExp {
        x: Var,
        idx: Vec<usize>,
        negate: bool,
        weights: Vec<T>,
    },
    MaskedFill {
        x: Var,
        mask: Vec<bool>,
    },
    Gather {
        x: Var,
        idx: Vec<usize>,
    },
    SliceCols {
        x: Var,
        start: usize,
    },
    ConcatCols(Vec<Var>),
    Sum(Var),
    Mean(Var),
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// A single forward computation.
#[derive(Debug, Clone, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

/// Per-node gradients produced by [`Graph::gradients`].
#[derive(Debug, Clone)]
pub struct Gradients<T> {
    grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&[T]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn rotary_tables<T: Scalar>(rows: usize, d: usize, positions: &[i64], base: f64) -> (Vec<T>, Vec<T>) {
    let half = d / 2;
    let mut cos = Vec::with_capacity(rows * half);
    let mut sin = Vec::with_capacity(rows * half);
    for &p in positions.iter().take(rows) {
        for t in 0..half {
            let inv_freq = base.powf(-2.0 * t as f64 / d as f64);
            let angle = p as f64 * inv_freq;
            cos.push(T::of(angle.cos()));
            sin.push(T::of(angle.sin()));
        }
    }
    (cos, sin)
}

fn rotate_rows<T: Scalar>(x: &[T], cos: &[T], sin: &[T], d: usize, inverse: bool) -> Vec<T> {
    let half = d / 2;
    let mut out = vec![T::zero(); x.len()];
    for (r, row) in x.chunks(d).enumerate() {
        for t in 0..half {
            let c = cos[r * half + t];
            let s = if inverse { -sin[r * half + t] } else { sin[r * half + t] };
            let a = row[2 * t];
            let b = row[2 * t + 1];
            out[r * d + 2 * t] = a * c - b * s;
            out[r * d + 2 * t + 1] = a * s + b * c;
        }
    }
    out
}

/// Rotates each row of an `L×d` matrix pairwise by position-dependent angles:
/// pair `t` of row `i` turns by `positions[i] * base^(-2t/d)`.
pub fn rotary_rotate<T: Scalar>(x: &Tensor<T>, positions: &[i64], base: f64) -> Result<Tensor<T>> {
    let (rows, d) = x.dims2();
    if d % 2 != 0 {
        return Err(Error::shape("rotary", format!("feature size {d} is odd")));
    }
    if positions.len() != rows {
        return Err(Error::shape(
            "rotary",
            format!("{} positions for {} rows", positions.len(), rows),
        ));
    }
    let (cos, sin) = rotary_tables::<T>(rows, d, positions, base);
    Tensor::new(vec![rows, d], rotate_rows(x.data(), &cos, &sin, d, false))
}

fn gelu<T: Scalar>(x: T) -> T {
    let c = T::of(GELU_C);
    let k = T::of(0.044715);
    let half = T::of(0.5);
    half * x * (T::one() + (c * (x + k * x * x * x)).tanh())
}

fn gelu_grad<T: Scalar>(x: T) -> T {
    let c = T::of(GELU_C);
    let k = T::of(0.044715);
    let half = T::of(0.5);
    let t = (c * (x + k * x * x * x)).tanh();
    half * (T::one() + t) + half * x * (T::one() - t * t) * c * (T::one() + T::of(3.0) * k * x * x)
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    /// Scalar value of a 0-d or single-element node.
    pub fn scalar(&self, v: Var) -> T {
        self.nodes[v.0].value.data()[0]
    }

    fn push(&mut self, name: &'static str, value: Tensor<T>, op: Op<T>) -> Result<Var> {
        if !value.all_finite() {
            return Err(Error::NonFinite { op: name });
        }
        self.nodes.push(Node { value, op });
        Ok(Var(self.nodes.len() - 1))
    }

    fn dims(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.dims2()
    }

    /// A constant input; gradients are still recorded for it.
    pub fn input(&mut self, t: Tensor<T>) -> Result<Var> {
        self.push("input", t, Op::Input)
    }

    /// Copies a named parameter onto the tape.
    pub fn param(&mut self, store: &ParamStore<T>, name: &str) -> Result<Var> {
        let value = store.value(name)?.clone();
        self.push("param", value, Op::Param(name.to_string()))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (k2, n) = self.dims(b);
        if k != k2 {
            return Err(Error::shape("matmul", format!("{m}x{k} * {k2}x{n}")));
        }
        let mut out = vec![T::zero(); m * n];
        matmul_into(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        self.push("matmul", Tensor::new(vec![m, n], out)?, Op::MatMul(a, b))
    }

    /// `a · bᵀ`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.dims(a);
        let (n, k2) = self.dims(b);
        if k != k2 {
            return Err(Error::shape("matmul_bt", format!("{m}x{k} * ({n}x{k2})^T")));
        }
        let mut out = vec![T::zero(); m * n];
        matmul_bt_into(self.value(a).data(), self.value(b).data(), &mut out, m, k, n);
        self.push("matmul_bt", Tensor::new(vec![m, n], out)?, Op::MatMulBt(a, b))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.len() != vb.len() {
            return Err(Error::shape("add", format!("{:?} + {:?}", va.shape(), vb.shape())));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| *x + *y).collect();
        let t = Tensor::new(va.shape().to_vec(), data)?;
        self.push("add", t, Op::Add(a, b))
    }

    /// Adds a length-`n` vector to every row of an `m×n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        if self.value(row).len() != n {
            return Err(Error::shape(
                "add_row",
                format!("{m}x{n} + row of {}", self.value(row).len()),
            ));
        }
        let r = self.value(row).data();
        let data = self
            .value(a)
            .data()
            .iter()
            .enumerate()
            .map(|(i, x)| *x + r[i % n])
            .collect();
        self.push("add_row", Tensor::new(vec![m, n], data)?, Op::AddRow(a, row))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.len() != vb.len() {
            return Err(Error::shape("mul", format!("{:?} * {:?}", va.shape(), vb.shape())));
        }
        let data = va.data().iter().zip(vb.data()).map(|(x, y)| *x * *y).collect();
        let t = Tensor::new(va.shape().to_vec(), data)?;
        self.push("mul", t, Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: T) -> Result<Var> {
        let t = self.value(a).map(|x| x * c);
        self.push("scale", t, Op::Scale(a, c))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(|x| x.tanh());
        self.push("tanh", t, Op::Tanh(a))
    }

    /// GELU, tanh approximation.
    pub fn gelu(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(gelu);
        self.push("gelu", t, Op::Gelu(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        let mut out = self.value(a).data().to_vec();
        for row in out.chunks_mut(n.max(1)) {
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut z = T::zero();
            for v in row.iter_mut() {
                *v = (*v - mx).exp();
                z += *v;
            }
            row.iter_mut().for_each(|v| *v /= z);
        }
        self.push("softmax", Tensor::new(vec![m, n], out)?, Op::SoftmaxRows(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.dims(a);
        let mut out = self.value(a).data().to_vec();
        for row in out.chunks_mut(n.max(1)) {
            let mx = row.iter().copied().fold(T::neg_infinity(), T::max);
            let lse = mx + row.iter().map(|v| (*v - mx).exp()).sum::<T>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        self.push("log_softmax", Tensor::new(vec![m, n], out)?, Op::LogSoftmaxRows(a))
    }

    /// Row-wise layer normalization with learned scale and shift.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (m, n) = self.dims(x);
        if self.value(gamma).len() != n || self.value(beta).len() != n {
            return Err(Error::shape("layer_norm", format!("features {n}")));
        }
        let eps = T::of(LAYER_NORM_EPS);
        let nn = T::of_usize(n);
        let xs = self.value(x).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut xhat = vec![T::zero(); m * n];
        let mut inv_std = vec![T::zero(); m];
        let mut out = vec![T::zero(); m * n];
        for r in 0..m {
            let row = &xs[r * n..(r + 1) * n];
            let mean = row.iter().copied().sum::<T>() / nn;
            let var = row.iter().map(|v| (*v - mean) * (*v - mean)).sum::<T>() / nn;
            let inv = T::one() / (var + eps).sqrt();
            inv_std[r] = inv;
            for c in 0..n {
                let h = (row[c] - mean) * inv;
                xhat[r * n + c] = h;
                out[r * n + c] = h * g[c] + b[c];
            }
        }
        self.push(
            "layer_norm",
            Tensor::new(vec![m, n], out)?,
            Op::LayerNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
            },
        )
    }

    /// Row lookup: output row `r` is `table[ids[r]]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, h) = self.dims(table);
        if let Some(bad) = ids.iter().find(|&&i| i >= v) {
            return Err(Error::shape("embedding", format!("id {bad} >= table size {v}")));
        }
        let t = self.value(table).data();
        let mut out = Vec::with_capacity(ids.len() * h);
        for &i in ids {
            out.extend_from_slice(&t[i * h..(i + 1) * h]);
        }
        self.push(
            "embedding",
            Tensor::new(vec![ids.len(), h], out)?,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
            },
        )
    }

    /// Pairwise rotary rotation of each row; see [`rotary_rotate`].
    pub fn rotary(&mut self, x: Var, positions: &[i64], base: f64) -> Result<Var> {
        let (rows, d) = self.dims(x);
        if d % 2 != 0 {
            return Err(Error::shape("rotary", format!("feature size {d} is odd")));
        }
        if positions.len() != rows {
            return Err(Error::shape(
                "rotary",
                format!("{} positions for {} rows", positions.len(), rows),
            ));
        }
        let (cos, sin) = rotary_tables::<T>(rows, d, positions, base);
        let out = rotate_rows(self.value(x).data(), &cos, &sin, d, false);
        self.push("rotary", Tensor::new(vec![rows, d], out)?, Op::Rotary { x, cos, sin })
    }

    /// `log(1 + Σ_{k∈idx} exp(±x_k))` over flat indices of `x`; the sign is
    /// negative when `negate` is set. Empty `idx` gives exactly 0.
    pub fn log1p_sum_exp(&mut self, x: Var, idx: &[usize], negate: bool) -> Result<Var> {
        let xs = self.value(x).data();
        if let Some(bad) = idx.iter().find(|&&i| i >= xs.len()) {
            return Err(Error::shape("log1p_sum_exp", format!("index {bad} out of range")));
        }
        let sign = if negate { -T::one() } else { T::one() };
        let terms: Vec<T> = idx.iter().map(|&i| sign * xs[i]).collect();
        let value = log1p_sum_exp(terms.iter().copied());
        let weights = terms.iter().map(|z| (*z - value).exp()).collect();
        self.push(
            "log1p_sum_exp",
            Tensor::scalar(value),
            Op::Log1pSumExp {
                x,
                idx: idx.to_vec(),
                negate,
                weights,
            },
        )
    }

    /// Replaces cells where `mask` is true with `value`; no gradient flows
    /// through replaced cells.
    pub fn masked_fill(&mut self, x: Var, mask: &[bool], value: T) -> Result<Var> {
        let v = self.value(x);
        if mask.len() != v.len() {
            return Err(Error::shape("masked_fill", format!("mask {} vs {}", mask.len(), v.len())));
        }
        let data = v
            .data()
            .iter()
            .zip(mask)
            .map(|(x, m)| if *m { value } else { *x })
            .collect();
        let t = Tensor::new(v.shape().to_vec(), data)?;
        self.push(
            "masked_fill",
            t,
            Op::MaskedFill {
                x,
                mask: mask.to_vec(),
            },
        )
    }

    /// Picks flat elements of `x` into a vector.
    pub fn gather(&mut self, x: Var, idx: &[usize]) -> Result<Var> {
        let xs = self.value(x).data();
        if let Some(bad) = idx.iter().find(|&&i| i >= xs.len()) {
            return Err(Error::shape("gather", format!("index {bad} out of range")));
        }
        let data = idx.iter().map(|&i| xs[i]).collect();
        self.push(
            "gather",
            Tensor::vector(data),
            Op::Gather {
                x,
                idx: idx.to_vec(),
            },
        )
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let (m, n) = self.dims(x);
        if start > end || end > n {
            return Err(Error::shape("slice_cols", format!("{start}..{end} of {n}")));
        }
        let xs = self.value(x).data();
        let w = end - start;
        let mut out = Vec::with_capacity(m * w);
        for r in 0..m {
            out.extend_from_slice(&xs[r * n + start..r * n + end]);
        }
        self.push("slice_cols", Tensor::new(vec![m, w], out)?, Op::SliceCols { x, start })
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let m = parts.first().map_or(0, |p| self.dims(*p).0);
        if parts.iter().any(|p| self.dims(*p).0 != m) {
            return Err(Error::shape("concat_cols", "row counts differ"));
        }
        let widths: Vec<usize> = parts.iter().map(|p| self.dims(*p).1).collect();
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(m * total);
        for r in 0..m {
            for (p, w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(*p).data()[r * w..(r + 1) * w]);
            }
        }
        self.push(
            "concat_cols",
            Tensor::new(vec![m, total], out)?,
            Op::ConcatCols(parts.to_vec()),
        )
    }

    pub fn sum(&mut self, x: Var) -> Result<Var> {
        let s = self.value(x).sum();
        self.push("sum", Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Result<Var> {
        let v = self.value(x);
        if v.is_empty() {
            return Err(Error::shape("mean", "empty tensor"));
        }
        let s = v.sum() / T::of_usize(v.len());
        self.push("mean", Tensor::scalar(s), Op::Mean(x))
    }

    /// Reverse accumulation from `output`, seeded with `seed` (usually 1).
    pub fn gradients(&self, output: Var, seed: T) -> Result<Gradients<T>> {
        let mut grads: Vec<Option<Vec<T>>> = vec![None; self.nodes.len()];
        grads[output.0] = Some(vec![seed; self.nodes[output.0].value.len()]);

        fn acc<T: Scalar>(grads: &mut [Option<Vec<T>>], v: Var, len: usize) -> &mut Vec<T> {
            grads[v.0].get_or_insert_with(|| vec![T::zero(); len])
        }

        for idx in (0..=output.0).rev() {
            let Some(dy) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            let len_of = |v: Var| self.nodes[v.0].value.len();
            match &node.op {
                Op::Input | Op::Param(_) => {}
                Op::MatMul(a, b) => {
                    let (m, k) = self.dims(*a);
                    let (_, n) = self.dims(*b);
                    let av = self.value(*a).data();
                    let bv = self.value(*b).data();
                    matmul_bt_into(&dy, bv, acc(&mut grads, *a, m * k), m, n, k);
                    matmul_at_into(av, &dy, acc(&mut grads, *b, k * n), m, k, n);
                }
                Op::MatMulBt(a, b) => {
                    let (m, k) = self.dims(*a);
                    let (n, _) = self.dims(*b);
                    let av = self.value(*a).data();
                    let bv = self.value(*b).data();
                    // dA = dY · B ; dB = dYᵀ · A
                    matmul_into(&dy, bv, acc(&mut grads, *a, m * k), m, n, k);
                    matmul_at_into(&dy, av, acc(&mut grads, *b, n * k), m, n, k);
                }
                Op::Add(a, b) => {
                    for v in [*a, *b] {
                        let g = acc(&mut grads, v, dy.len());
                        g.iter_mut().zip(&dy).for_each(|(g, d)| *g += *d);
                    }
                }
                Op::AddRow(a, row) => {
                    let n = len_of(*row);
                    let g = acc(&mut grads, *a, dy.len());
                    g.iter_mut().zip(&dy).for_each(|(g, d)| *g += *d);
                    let gr = acc(&mut grads, *row, n);
                    for (i, d) in dy.iter().enumerate() {
                        gr[i % n] += *d;
                    }
                }
                Op::Mul(a, b) => {
                    let av = self.value(*a).data();
                    let bv = self.value(*b).data();
                    let ga = acc(&mut grads, *a, dy.len());
                    for i in 0..dy.len() {
                        ga[i] += dy[i] * bv[i];
                    }
                    let gb = acc(&mut grads, *b, dy.len());
                    for i in 0..dy.len() {
                        gb[i] += dy[i] * av[i];
                    }
                }
                Op::Scale(a, c) => {
                    let g = acc(&mut grads, *a, dy.len());
                    g.iter_mut().zip(&dy).for_each(|(g, d)| *g += *d * *c);
                }
                Op::Tanh(a) => {
                    let y = node.value.data();
                    let g = acc(&mut grads, *a, dy.len());
                    for i in 0..dy.len() {
                        g[i] += dy[i] * (T::one() - y[i] * y[i]);
                    }
                }
                Op::Gelu(a) => {
                    let x = self.value(*a).data();
                    let g = acc(&mut grads, *a, dy.len());
                    for i in 0..dy.len() {
                        g[i] += dy[i] * gelu_grad(x[i]);
                    }
                }
                Op::SoftmaxRows(a) => {
                    let (_, n) = node.value.dims2();
                    let y = node.value.data();
                    let g = acc(&mut grads, *a, dy.len());
                    for (r, yr) in y.chunks(n.max(1)).enumerate() {
                        let dr = &dy[r * n..(r + 1) * n];
                        let dot: T = yr.iter().zip(dr).map(|(a, b)| *a * *b).sum();
                        for c in 0..n {
                            g[r * n + c] += yr[c] * (dr[c] - dot);
                        }
                    }
                }
                Op::LogSoftmaxRows(a) => {
                    let (_, n) = node.value.dims2();
                    let y = node.value.data();
                    let g = acc(&mut grads, *a, dy.len());
                    for (r, yr) in y.chunks(n.max(1)).enumerate() {
                        let dr = &dy[r * n..(r + 1) * n];
                        let total: T = dr.iter().copied().sum();
                        for c in 0..n {
                            g[r * n + c] += dr[c] - yr[c].exp() * total;
                        }
                    }
                }
                Op::LayerNorm {
                    x,
                    gamma,
                    beta,
                    xhat,
                    inv_std,
                } => {
                    let (m, n) = self.dims(*x);
                    let gv = self.value(*gamma).data();
                    let nn = T::of_usize(n);
                    {
                        let gg = acc(&mut grads, *gamma, n);
                        for r in 0..m {
                            for c in 0..n {
                                gg[c] += dy[r * n + c] * xhat[r * n + c];
                            }
                        }
                    }
                    {
                        let gb = acc(&mut grads, *beta, n);
                        for r in 0..m {
                            for c in 0..n {
                                gb[c] += dy[r * n + c];
                            }
                        }
                    }
                    let gx = acc(&mut grads, *x, m * n);
                    for r in 0..m {
                        let mut sum_d = T::zero();
                        let mut sum_dx = T::zero();
                        for c in 0..n {
                            let d = dy[r * n + c] * gv[c];
                            sum_d += d;
                            sum_dx += d * xhat[r * n + c];
                        }
                        for c in 0..n {
                            let d = dy[r * n + c] * gv[c];
                            gx[r * n + c] +=
                                inv_std[r] / nn * (nn * d - sum_d - xhat[r * n + c] * sum_dx);
                        }
                    }
                }
                Op::Embedding { table, ids } => {
                    let (v, h) = self.dims(*table);
                    let g = acc(&mut grads, *table, v * h);
                    for (r, &i) in ids.iter().enumerate() {
                        for c in 0..h {
                            g[i * h + c] += dy[r * h + c];
                        }
                    }
                }
                Op::Rotary { x, cos, sin } => {
                    let (_, d) = self.dims(*x);
                    let back = rotate_rows(&dy, cos, sin, d, true);
                    let g = acc(&mut grads, *x, dy.len());
                    g.iter_mut().zip(&back).for_each(|(g, b)| *g += *b);
                }
                Op::Log1pSumExp {
                    x,
                    idx,
                    negate,
                    weights,
                } => {
                    let sign = if *negate { -T::one() } else { T::one() };
                    let g = acc(&mut grads, *x, len_of(*x));
                    for (k, &i) in idx.iter().enumerate() {
                        g[i] += dy[0] * sign * weights[k];
                    }
                }
                Op::MaskedFill { x, mask } => {
                    let g = acc(&mut grads, *x, dy.len());
                    for i in 0..dy.len() {
                        if !mask[i] {
                            g[i] += dy[i];
                        }
                    }
                }
                Op::Gather { x, idx } => {
                    let g = acc(&mut grads, *x, len_of(*x));
                    for (k, &i) in idx.iter().enumerate() {
                        g[i] += dy[k];
                    }
                }
                Op::SliceCols { x, start } => {
                    let (m, n) = self.dims(*x);
                    let (_, w) = node.value.dims2();
                    let g = acc(&mut grads, *x, m * n);
                    for r in 0..m {
                        for c in 0..w {
                            g[r * n + start + c] += dy[r * w + c];
                        }
                    }
                }
                Op::ConcatCols(parts) => {
                    let (m, total) = node.value.dims2();
                    let mut offset = 0;
                    for p in parts {
                        let (_, w) = self.dims(*p);
                        let g = acc(&mut grads, *p, m * w);
                        for r in 0..m {
                            for c in 0..w {
                                g[r * w + c] += dy[r * total + offset + c];
                            }
                        }
                        offset += w;
                    }
                }
                Op::Sum(x) => {
                    let g = acc(&mut grads, *x, len_of(*x));
                    g.iter_mut().for_each(|g| *g += dy[0]);
                }
                Op::Mean(x) => {
                    let n = len_of(*x);
                    let d = dy[0] / T::of_usize(n);
                    let g = acc(&mut grads, *x, n);
                    g.iter_mut().for_each(|g| *g += d);
                }
            }
            grads[idx] = Some(dy);
        }
        for g in grads.iter().flatten() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite { op: "backward" });
            }
        }
        Ok(Gradients { grads })
    }

    /// Runs [`Graph::gradients`] and adds every parameter node's gradient
    /// into `store`.
    pub fn backward(&self, output: Var, seed: T, store: &mut ParamStore<T>) -> Result<()> {
        let grads = self.gradients(output, seed)?;
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(name) = &node.op {
                if let Some(g) = grads.grads[i].as_deref() {
                    store.accumulate_grad(name, g)?;
                }
            }
        }
        Ok(())
    }
}
