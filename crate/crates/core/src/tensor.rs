//! Dense row-major `f64` arrays and the numeric kernels shared by eager
//! evaluation and the gradient tape.
//!
//! Every kernel here is a pure function of its inputs. The tape in
//! [`crate::autodiff`] calls the same kernels the eager path calls, so a
//! computation produces bit-identical values whether or not it is recorded.

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::Argument(format!("zero extent in shape {shape:?}")));
        }
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::Argument(format!(
                "shape {shape:?} holds {n} values but {} were given",
                data.len()
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        Self {
            shape: vec![data.len()],
            data,
        }
    }

    /// `n × n` identity matrix.
    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> Result<f64> {
        if self.data.len() != 1 {
            return Err(Error::Contract(format!(
                "item() on a tensor of shape {:?}",
                self.shape
            )));
        }
        Ok(self.data[0])
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        self.data[self.offset(index)]
    }

    pub fn set(&mut self, index: &[usize], value: f64) {
        let o = self.offset(index);
        self.data[o] = value;
    }

    fn offset(&self, index: &[usize]) -> usize {
        assert_eq!(index.len(), self.shape.len(), "index rank mismatch");
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| {
                assert!(i < d, "index {i} out of bounds for extent {d}");
                acc * d + i
            })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() || shape.iter().any(|&d| d == 0) {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: self.data.clone(),
        })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Sub-tensor at `index` along the leading axis.
    pub fn index_axis0(&self, index: usize) -> Result<Self> {
        let lead = *self
            .shape
            .first()
            .ok_or_else(|| Error::Contract("index_axis0 on a scalar".into()))?;
        if index >= lead {
            return Err(Error::Argument(format!(
                "index {index} out of bounds for leading extent {lead}"
            )));
        }
        let inner: usize = self.shape[1..].iter().product();
        let shape = if self.shape.len() == 1 {
            Vec::new()
        } else {
            self.shape[1..].to_vec()
        };
        Ok(Self {
            shape,
            data: self.data[index * inner..(index + 1) * inner].to_vec(),
        })
    }
}

/// How the smaller operand of a binary op is repeated.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Broadcast {
    Same,
    /// rhs shape is a suffix of lhs shape
    Rhs,
    /// lhs shape is a suffix of rhs shape
    Lhs,
}

fn is_suffix(short: &[usize], long: &[usize]) -> bool {
    short.len() <= long.len() && long[long.len() - short.len()..] == *short
}

pub(crate) fn broadcast_kind(op: &'static str, a: &[usize], b: &[usize]) -> Result<Broadcast> {
    if a == b {
        Ok(Broadcast::Same)
    } else if is_suffix(b, a) {
        Ok(Broadcast::Rhs)
    } else if is_suffix(a, b) {
        Ok(Broadcast::Lhs)
    } else {
        Err(Error::shape(op, a, b))
    }
}

pub(crate) fn binary(
    op: &'static str,
    a: &Tensor,
    b: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    let kind = broadcast_kind(op, &a.shape, &b.shape)?;
    Ok(match kind {
        Broadcast::Same => Tensor {
            shape: a.shape.clone(),
            data: a.data.iter().zip(&b.data).map(|(&x, &y)| f(x, y)).collect(),
        },
        Broadcast::Rhs => {
            let n = b.data.len();
            Tensor {
                shape: a.shape.clone(),
                data: a
                    .data
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| f(x, b.data[i % n]))
                    .collect(),
            }
        }
        Broadcast::Lhs => {
            let n = a.data.len();
            Tensor {
                shape: b.shape.clone(),
                data: b
                    .data
                    .iter()
                    .enumerate()
                    .map(|(i, &y)| f(a.data[i % n], y))
                    .collect(),
            }
        }
    })
}

/// Sum a gradient of the broadcast output shape back down to `shape`.
pub(crate) fn reduce_to(g: &Tensor, shape: &[usize]) -> Tensor {
    if g.shape == shape {
        return g.clone();
    }
    let n: usize = shape.iter().product();
    let mut out = vec![0.0; n];
    for (i, &v) in g.data.iter().enumerate() {
        out[i % n] += v;
    }
    Tensor {
        shape: shape.to_vec(),
        data: out,
    }
}

/// Sum over `axis`, dropping it.
pub(crate) fn sum_axis(x: &Tensor, axis: usize) -> Result<Tensor> {
    if axis >= x.rank() {
        return Err(Error::Argument(format!(
            "sum over axis {axis} of rank-{} tensor",
            x.rank()
        )));
    }
    let outer: usize = x.shape[..axis].iter().product();
    let len = x.shape[axis];
    let inner: usize = x.shape[axis + 1..].iter().product();
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        let dst = &mut out[o * inner..(o + 1) * inner];
        for k in 0..len {
            let src = &x.data[(o * len + k) * inner..(o * len + k + 1) * inner];
            for (d, s) in dst.iter_mut().zip(src) {
                *d += s;
            }
        }
    }
    let mut shape = x.shape.clone();
    shape.remove(axis);
    Ok(Tensor { shape, data: out })
}

/// Inverse of [`sum_axis`] for gradients: repeat `g` along a re-inserted axis.
pub(crate) fn expand_axis(g: &Tensor, full_shape: &[usize], axis: usize) -> Tensor {
    let outer: usize = full_shape[..axis].iter().product();
    let len = full_shape[axis];
    let inner: usize = full_shape[axis + 1..].iter().product();
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let src = &g.data[o * inner..(o + 1) * inner];
        for _ in 0..len {
            out.extend_from_slice(src);
        }
    }
    Tensor {
        shape: full_shape.to_vec(),
        data: out,
    }
}

fn split_matrix(shape: &[usize]) -> Option<(usize, usize, usize)> {
    if shape.len() < 2 {
        return None;
    }
    let r = shape.len();
    Some((shape[..r - 2].iter().product(), shape[r - 2], shape[r - 1]))
}

/// `out = a · b`. `a` is `[..., m, k]`; `b` is either `[k, n]` (shared across
/// all leading indices of `a`) or `[..., k, n]` with the same leading extents.
pub(crate) fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let err = || Error::shape("matmul", &a.shape, &b.shape);
    let (batch, m, k) = split_matrix(&a.shape).ok_or_else(err)?;
    let (bb, kb, n) = split_matrix(&b.shape).ok_or_else(err)?;
    if k != kb {
        return Err(err());
    }
    let shared = b.rank() == 2;
    if !shared && (a.rank() != b.rank() || a.shape[..a.rank() - 2] != b.shape[..b.rank() - 2]) {
        return Err(err());
    }
    let mut out = vec![0.0; batch * m * n];
    if shared {
        mm_nn(&a.data, &b.data, &mut out, batch * m, k, n);
    } else {
        debug_assert_eq!(bb, batch);
        for i in 0..batch {
            mm_nn(
                &a.data[i * m * k..(i + 1) * m * k],
                &b.data[i * k * n..(i + 1) * k * n],
                &mut out[i * m * n..(i + 1) * m * n],
                m,
                k,
                n,
            );
        }
    }
    let mut shape = a.shape.clone();
    let r = shape.len();
    shape[r - 1] = n;
    Ok(Tensor { shape, data: out })
}

/// Gradients of [`matmul`] given the upstream gradient `g`.
pub(crate) fn matmul_backward(a: &Tensor, b: &Tensor, g: &Tensor) -> (Tensor, Tensor) {
    let (batch, m, k) = split_matrix(&a.shape).expect("validated in forward");
    let n = b.shape[b.rank() - 1];
    let mut ga = vec![0.0; a.len()];
    let mut gb = vec![0.0; b.len()];
    if b.rank() == 2 {
        mm_nt(&g.data, &b.data, &mut ga, batch * m, n, k);
        mm_tn(&a.data, &g.data, &mut gb, batch * m, k, n);
    } else {
        for i in 0..batch {
            let gs = &g.data[i * m * n..(i + 1) * m * n];
            mm_nt(
                gs,
                &b.data[i * k * n..(i + 1) * k * n],
                &mut ga[i * m * k..(i + 1) * m * k],
                m,
                n,
                k,
            );
            mm_tn(
                &a.data[i * m * k..(i + 1) * m * k],
                gs,
                &mut gb[i * k * n..(i + 1) * k * n],
                m,
                k,
                n,
            );
        }
    }
    (
        Tensor {
            shape: a.shape.clone(),
            data: ga,
        },
        Tensor {
            shape: b.shape.clone(),
            data: gb,
        },
    )
}

/// `out += A·B` for row-major `A: m×k`, `B: k×n`, `out: m×n`, with `A` and
/// `B` given by (row stride, column stride).
fn gemm_acc(
    m: usize,
    k: usize,
    n: usize,
    a: (&[f64], isize, isize),
    b: (&[f64], isize, isize),
    out: &mut [f64],
) {
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    assert!(a.0.len() >= m * k && b.0.len() >= k * n && out.len() >= m * n);
    // SAFETY: the slices cover every index the strides address.
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
            1.0,
            out.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `out[m×n] += a[m×k] · b[k×n]`
fn mm_nn(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    gemm_acc(m, k, n, (a, k as isize, 1), (b, n as isize, 1), out);
}

/// `out[m×n] += a[m×k] · bᵀ` where `b` is `n×k`
fn mm_nt(a: &[f64], b: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    gemm_acc(m, k, n, (a, k as isize, 1), (b, 1, k as isize), out);
}

/// `out[k×n] += aᵀ · g` where `a` is `m×k` and `g` is `m×n`
fn mm_tn(a: &[f64], g: &[f64], out: &mut [f64], m: usize, k: usize, n: usize) {
    gemm_acc(k, m, n, (a, 1, k as isize), (g, n as isize, 1), out);
}

pub(crate) fn permute(x: &Tensor, axes: &[usize]) -> Result<Tensor> {
    let r = x.rank();
    let mut seen = vec![false; r];
    if axes.len() != r || axes.iter().any(|&a| a >= r || std::mem::replace(&mut seen[a], true)) {
        return Err(Error::Argument(format!(
            "permutation {axes:?} invalid for shape {:?}",
            x.shape
        )));
    }
    let in_strides = strides(&x.shape);
    let out_shape: Vec<usize> = axes.iter().map(|&a| x.shape[a]).collect();
    let src_strides: Vec<usize> = axes.iter().map(|&a| in_strides[a]).collect();
    let mut out = Vec::with_capacity(x.len());
    let mut idx = vec![0usize; r];
    let mut offset = 0usize;
    for _ in 0..x.len() {
        out.push(x.data[offset]);
        for d in (0..r).rev() {
            idx[d] += 1;
            offset += src_strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            offset -= src_strides[d] * out_shape[d];
            idx[d] = 0;
        }
    }
    Ok(Tensor {
        shape: out_shape,
        data: out,
    })
}

pub(crate) fn inverse_permutation(axes: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; axes.len()];
    for (i, &a) in axes.iter().enumerate() {
        inv[a] = i;
    }
    inv
}

fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        s[d] = s[d + 1] * shape[d + 1];
    }
    s
}

pub(crate) fn stack(parts: &[&Tensor], axis: usize) -> Result<Tensor> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Argument("stack of zero tensors".into()))?;
    if axis > first.rank() {
        return Err(Error::Argument(format!(
            "stack axis {axis} beyond rank {}",
            first.rank()
        )));
    }
    for p in parts {
        if p.shape != first.shape {
            return Err(Error::shape("stack", &first.shape, &p.shape));
        }
    }
    let outer: usize = first.shape[..axis].iter().product();
    let inner: usize = first.shape[axis..].iter().product();
    let mut data = Vec::with_capacity(first.len() * parts.len());
    for o in 0..outer {
        for p in parts {
            data.extend_from_slice(&p.data[o * inner..(o + 1) * inner]);
        }
    }
    let mut shape = first.shape.clone();
    shape.insert(axis, parts.len());
    Ok(Tensor { shape, data })
}

/// Split a stacked gradient back into its parts.
pub(crate) fn unstack(g: &Tensor, axis: usize, count: usize) -> Vec<Tensor> {
    let mut part_shape = g.shape.clone();
    part_shape.remove(axis);
    let outer: usize = g.shape[..axis].iter().product();
    let inner: usize = part_shape[axis..].iter().product();
    let mut parts: Vec<Vec<f64>> = (0..count).map(|_| Vec::with_capacity(outer * inner)).collect();
    for o in 0..outer {
        for (k, part) in parts.iter_mut().enumerate() {
            let start = (o * count + k) * inner;
            part.extend_from_slice(&g.data[start..start + inner]);
        }
    }
    parts
        .into_iter()
        .map(|data| Tensor {
            shape: part_shape.clone(),
            data,
        })
        .collect()
}

fn last_dim(x: &Tensor, op: &'static str) -> Result<usize> {
    x.shape
        .last()
        .copied()
        .ok_or_else(|| Error::Argument(format!("{op} on a scalar")))
}

pub(crate) fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let n = last_dim(x, "softmax")?;
    let mut out = x.data.clone();
    for row in out.chunks_mut(n) {
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    Ok(Tensor {
        shape: x.shape.clone(),
        data: out,
    })
}

pub(crate) fn softmax_last_backward(y: &Tensor, g: &Tensor) -> Tensor {
    let n = *y.shape.last().expect("validated in forward");
    let mut out = vec![0.0; y.len()];
    for ((o, yr), gr) in out.chunks_mut(n).zip(y.data.chunks(n)).zip(g.data.chunks(n)) {
        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for ((o, &yv), &gv) in o.iter_mut().zip(yr).zip(gr) {
            *o = yv * (gv - dot);
        }
    }
    Tensor {
        shape: y.shape.clone(),
        data: out,
    }
}

/// Normalize each row of the last axis to zero mean and unit variance.
/// Returns the output and the per-row inverse standard deviation.
pub(crate) fn layer_norm_last(x: &Tensor, eps: f64) -> Result<(Tensor, Vec<f64>)> {
    let n = last_dim(x, "layer_norm")?;
    let mut out = x.data.clone();
    let mut inv_std = Vec::with_capacity(x.len() / n);
    for row in out.chunks_mut(n) {
        let mean = row.iter().sum::<f64>() / n as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let inv = 1.0 / (var + eps).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * inv;
        }
        inv_std.push(inv);
    }
    Ok((
        Tensor {
            shape: x.shape.clone(),
            data: out,
        },
        inv_std,
    ))
}

pub(crate) fn layer_norm_last_backward(y: &Tensor, inv_std: &[f64], g: &Tensor) -> Tensor {
    let n = *y.shape.last().expect("validated in forward");
    let mut out = vec![0.0; y.len()];
    for (((o, yr), gr), &inv) in out
        .chunks_mut(n)
        .zip(y.data.chunks(n))
        .zip(g.data.chunks(n))
        .zip(inv_std)
    {
        let mean_g = gr.iter().sum::<f64>() / n as f64;
        let mean_gy = gr.iter().zip(yr).map(|(a, b)| a * b).sum::<f64>() / n as f64;
        for ((o, &yv), &gv) in o.iter_mut().zip(yr).zip(gr) {
            *o = inv * (gv - mean_g - yv * mean_gy);
        }
    }
    Tensor {
        shape: y.shape.clone(),
        data: out,
    }
}

/// Standardize along the leading (batch) axis: every column `x[:, rest]` is
/// centered and, unless `mean_only`, scaled by `1/sqrt(var + eps)` using the
/// population variance. Returns the output and the per-column scale.
pub(crate) fn standardize_batch(x: &Tensor, eps: f64, mean_only: bool) -> Result<(Tensor, Vec<f64>)> {
    let b = *x
        .shape
        .first()
        .ok_or_else(|| Error::Argument("batch_standardize on a scalar".into()))?;
    if b < 2 {
        return Err(Error::BatchSize {
            op: "batch_standardize",
            got: b,
            min: 2,
        });
    }
    let cols = x.len() / b;
    let mut mean = vec![0.0; cols];
    for row in x.data.chunks(cols) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= b as f64);
    let mut scale = vec![1.0; cols];
    if !mean_only {
        let mut var = vec![0.0; cols];
        for row in x.data.chunks(cols) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        for (s, v) in scale.iter_mut().zip(&var) {
            *s = 1.0 / (v / b as f64 + eps).sqrt();
        }
    }
    let mut out = x.data.clone();
    for row in out.chunks_mut(cols) {
        for ((v, m), s) in row.iter_mut().zip(&mean).zip(&scale) {
            *v = (*v - m) * s;
        }
    }
    Ok((
        Tensor {
            shape: x.shape.clone(),
            data: out,
        },
        scale,
    ))
}

pub(crate) fn standardize_batch_backward(
    y: &Tensor,
    scale: &[f64],
    mean_only: bool,
    g: &Tensor,
) -> Tensor {
    let b = y.shape[0];
    let cols = y.len() / b;
    let mut mean_g = vec![0.0; cols];
    let mut mean_gy = vec![0.0; cols];
    for (yr, gr) in y.data.chunks(cols).zip(g.data.chunks(cols)) {
        for c in 0..cols {
            mean_g[c] += gr[c];
            mean_gy[c] += gr[c] * yr[c];
        }
    }
    let inv_b = 1.0 / b as f64;
    let mut out = vec![0.0; y.len()];
    for ((o, yr), gr) in out.chunks_mut(cols).zip(y.data.chunks(cols)).zip(g.data.chunks(cols)) {
        for c in 0..cols {
            o[c] = if mean_only {
                gr[c] - mean_g[c] * inv_b
            } else {
                scale[c] * (gr[c] - mean_g[c] * inv_b - yr[c] * mean_gy[c] * inv_b)
            };
        }
    }
    Tensor {
        shape: y.shape.clone(),
        data: out,
    }
}

/// `out[rest, i, j] = (1/B) Σ_b a[b, rest, i] · c[b, rest, j]` for inputs of
/// shape `[B, rest..., D]`; output shape `[rest..., D, D]`.
pub(crate) fn batched_outer(a: &Tensor, c: &Tensor) -> Result<Tensor> {
    if a.shape != c.shape || a.rank() < 2 {
        return Err(Error::shape("batched_outer", &a.shape, &c.shape));
    }
    let b = a.shape[0];
    let d = a.shape[a.rank() - 1];
    let groups = a.len() / (b * d);
    let mut out = vec![0.0; groups * d * d];
    let inv_b = 1.0 / b as f64;
    for bi in 0..b {
        for gi in 0..groups {
            let base = (bi * groups + gi) * d;
            let ar = &a.data[base..base + d];
            let cr = &c.data[base..base + d];
            let block = &mut out[gi * d * d..(gi + 1) * d * d];
            for (i, &av) in ar.iter().enumerate() {
                let row = &mut block[i * d..(i + 1) * d];
                for (o, &cv) in row.iter_mut().zip(cr) {
                    *o += av * cv;
                }
            }
        }
    }
    out.iter_mut().for_each(|v| *v *= inv_b);
    let mut shape = a.shape[1..].to_vec();
    shape.push(d);
    Ok(Tensor { shape, data: out })
}

pub(crate) fn batched_outer_backward(a: &Tensor, c: &Tensor, g: &Tensor) -> (Tensor, Tensor) {
    let b = a.shape[0];
    let d = a.shape[a.rank() - 1];
    let groups = a.len() / (b * d);
    let inv_b = 1.0 / b as f64;
    let mut ga = vec![0.0; a.len()];
    let mut gc = vec![0.0; c.len()];
    for bi in 0..b {
        for gi in 0..groups {
            let base = (bi * groups + gi) * d;
            let block = &g.data[gi * d * d..(gi + 1) * d * d];
            let ar = &a.data[base..base + d];
            let cr = &c.data[base..base + d];
            for i in 0..d {
                let row = &block[i * d..(i + 1) * d];
                ga[base + i] = inv_b * row.iter().zip(cr).map(|(x, y)| x * y).sum::<f64>();
                let av = ar[i] * inv_b;
                for (o, &gv) in gc[base..base + d].iter_mut().zip(row) {
                    *o += av * gv;
                }
            }
        }
    }
    (
        Tensor {
            shape: a.shape.clone(),
            data: ga,
        },
        Tensor {
            shape: c.shape.clone(),
            data: gc,
        },
    )
}

const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
const GELU_K: f64 = 0.044_715;

/// Tanh-approximated GELU.
pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_K * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_K * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_K * x * x)
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], data: &[f64]) -> Tensor {
        Tensor::new(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn rejects_mismatched_length() {
        assert!(Tensor::new(&[2, 2], vec![1.0; 3]).is_err());
        assert!(Tensor::new(&[0, 2], vec![]).is_err());
    }

    #[test]
    fn trailing_broadcast_only() {
        let a = t(&[2, 3], &[1., 2., 3., 4., 5., 6.]);
        let b = t(&[3], &[10., 20., 30.]);
        let s = binary("add", &a, &b, |x, y| x + y).unwrap();
        assert_eq!(s.data(), &[11., 22., 33., 14., 25., 36.]);
        let s = binary("add", &b, &a, |x, y| x + y).unwrap();
        assert_eq!(s.shape(), &[2, 3]);
        let col = t(&[2], &[1., 2.]);
        let err = binary("add", &a, &col, |x, y| x + y).unwrap_err();
        assert!(err.to_string().contains("[2, 3]") && err.to_string().contains("[2]"));
    }

    #[test]
    fn matmul_small() {
        let a = t(&[2, 2], &[1., 2., 3., 4.]);
        let b = t(&[2, 2], &[5., 6., 7., 8.]);
        assert_eq!(matmul(&a, &b).unwrap().data(), &[19., 22., 43., 50.]);
        let bad = t(&[3, 2], &[0.; 6]);
        assert!(matmul(&a, &bad).is_err());
    }

    #[test]
    fn permute_matches_index_loop() {
        let x = Tensor::new(&[2, 3, 4], (0..24).map(|v| v as f64).collect()).unwrap();
        let y = permute(&x, &[2, 0, 1]).unwrap();
        assert_eq!(y.shape(), &[4, 2, 3]);
        for i in 0..2 {
            for j in 0..3 {
                for k in 0..4 {
                    assert_eq!(y.get(&[k, i, j]), x.get(&[i, j, k]));
                }
            }
        }
        let back = permute(&y, &inverse_permutation(&[2, 0, 1])).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn stack_then_unstack() {
        let a = t(&[2, 2], &[1., 2., 3., 4.]);
        let b = t(&[2, 2], &[5., 6., 7., 8.]);
        let s = stack(&[&a, &b], 1).unwrap();
        assert_eq!(s.shape(), &[2, 2, 2]);
        assert_eq!(s.data(), &[1., 2., 5., 6., 3., 4., 7., 8.]);
        let parts = unstack(&s, 1, 2);
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn sum_axis_and_expand() {
        let x = Tensor::new(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        assert_eq!(sum_axis(&x, 0).unwrap().data(), &[5., 7., 9.]);
        assert_eq!(sum_axis(&x, 1).unwrap().data(), &[6., 15.]);
        let g = Tensor::from_vec(vec![1., 2.]);
        assert_eq!(expand_axis(&g, &[2, 3], 1).data(), &[1., 1., 1., 2., 2., 2.]);
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(-800.0) >= 0.0);
        assert_eq!(sigmoid(800.0), 1.0);
    }
}
