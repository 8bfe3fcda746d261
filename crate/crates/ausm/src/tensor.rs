//! Dense tensor kernels: linear maps, softmax, layer normalization, scaled
//! dot-product attention, and the feed-forward block.
//!
//! Storage is 32-bit, row-major, last axis contiguous. Every reduction
//! (dot products, softmax sums, norm statistics) accumulates in 64-bit so
//! reassociating work across threads or chunks stays within tight tolerances.
//! All operations are pure functions over immutable inputs.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Dense rank-N array of f32 with an explicit shape.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != data.len() {
            return Err(Error::dimension("Tensor::from_vec", shape, &[data.len()]));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Leading extent when the tensor is viewed as [rows, last_dim].
    pub fn rows(&self) -> usize {
        if self.shape.is_empty() {
            0
        } else {
            self.shape[..self.shape.len() - 1].iter().product()
        }
    }

    /// Extent of the last axis.
    pub fn last_dim(&self) -> usize {
        *self.shape.last().unwrap_or(&0)
    }

    /// Row `r` of the [rows, last_dim] view.
    pub fn row(&self, r: usize) -> &[f32] {
        let w = self.last_dim();
        &self.data[r * w..(r + 1) * w]
    }

    /// Reinterpret with a new shape of identical element count.
    pub fn reshaped(mut self, shape: &[usize]) -> Result<Tensor> {
        let n: usize = shape.iter().product();
        if n != self.data.len() {
            return Err(Error::dimension("Tensor::reshaped", shape, &self.shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.shape != other.shape {
            return Err(Error::dimension("Tensor::add", &self.shape, &other.shape));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data,
        })
    }

    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::dimension(
                "Tensor::add_assign",
                &self.shape,
                &other.shape,
            ));
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn scale(&self, c: f32) -> Tensor {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| v * c).collect(),
        }
    }

    /// Max elementwise absolute difference; shapes must agree.
    pub fn max_abs_diff(&self, other: &Tensor) -> f32 {
        debug_assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f32::max)
    }
}

/// y[..., j] = sum_i x[..., i] * w[i, j] + b[j], accumulated in f64.
pub fn linear(x: &Tensor, w: &Tensor, b: &Tensor) -> Result<Tensor> {
    let d_in = x.last_dim();
    if w.shape().len() != 2 || w.shape()[0] != d_in {
        return Err(Error::dimension("linear: x vs w", x.shape(), w.shape()));
    }
    let d_out = w.shape()[1];
    if b.shape() != [d_out] {
        return Err(Error::dimension("linear: w vs b", w.shape(), b.shape()));
    }
    let rows = x.rows();
    let mut out_shape = x.shape().to_vec();
    *out_shape.last_mut().unwrap() = d_out;
    let mut out = vec![0.0f32; rows * d_out];
    let wd = w.data();
    let bd = b.data();
    let mut acc = vec![0.0f64; d_out];
    for r in 0..rows {
        let xr = x.row(r);
        for (a, &bv) in acc.iter_mut().zip(bd) {
            *a = bv as f64;
        }
        for (k, &xv) in xr.iter().enumerate() {
            let xv = xv as f64;
            let wrow = &wd[k * d_out..(k + 1) * d_out];
            for (a, &wv) in acc.iter_mut().zip(wrow) {
                *a += xv * wv as f64;
            }
        }
        for (o, &a) in out[r * d_out..(r + 1) * d_out].iter_mut().zip(&acc) {
            *o = a as f32;
        }
    }
    Tensor::from_vec(&out_shape, out)
}

/// Softmax over the last axis, stable via max subtraction, f64 sums.
pub fn softmax(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let w = x.last_dim();
    if w == 0 {
        return out;
    }
    for row in out.data.chunks_mut(w) {
        softmax_row(row);
    }
    out
}

/// In-place softmax of one row. Entries of -inf map to exactly 0.
pub fn softmax_row(row: &mut [f32]) {
    let m = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f64;
    for v in row.iter_mut() {
        let e = if *v == f32::NEG_INFINITY {
            0.0
        } else {
            ((*v - m) as f64).exp()
        };
        *v = e as f32;
        sum += e;
    }
    let inv = 1.0 / sum;
    for v in row.iter_mut() {
        *v = (*v as f64 * inv) as f32;
    }
}

/// Per-vector normalization over the last axis.
pub fn layer_norm(x: &Tensor, gamma: &Tensor, beta: &Tensor, eps: f32) -> Result<Tensor> {
    let d = x.last_dim();
    if gamma.shape() != [d] || beta.shape() != [d] {
        return Err(Error::dimension("layer_norm", x.shape(), gamma.shape()));
    }
    let mut out = x.clone();
    let g = gamma.data();
    let b = beta.data();
    for row in out.data.chunks_mut(d) {
        let mut mean = 0.0f64;
        for &v in row.iter() {
            mean += v as f64;
        }
        mean /= d as f64;
        let mut var = 0.0f64;
        for &v in row.iter() {
            let c = v as f64 - mean;
            var += c * c;
        }
        var /= d as f64;
        let inv = 1.0 / (var + eps as f64).sqrt();
        for (j, v) in row.iter_mut().enumerate() {
            *v = (((*v as f64 - mean) * inv) as f32) * g[j] + b[j];
        }
    }
    Ok(out)
}

/// Attention mask: `allowed[q * nk + k]` gates query q's view of key k.
#[derive(Clone, Debug)]
pub struct AttnMask {
    pub nq: usize,
    pub nk: usize,
    pub allowed: Vec<bool>,
}

impl AttnMask {
    pub fn all_allowed(nq: usize, nk: usize) -> AttnMask {
        AttnMask {
            nq,
            nk,
            allowed: vec![true; nq * nk],
        }
    }

    pub fn row(&self, q: usize) -> &[bool] {
        &self.allowed[q * self.nk..(q + 1) * self.nk]
    }
}

/// out = softmax(Q K^T / sqrt(D) + mask_bias) V.
///
/// Blocked entries receive a -inf bias before the softmax. A fully-blocked
/// row is a contract violation: callers must apply their fallback rule first.
pub fn attention(q: &Tensor, k: &Tensor, v: &Tensor, mask: Option<&AttnMask>) -> Result<Tensor> {
    if q.shape().len() != 2 || k.shape().len() != 2 || v.shape().len() != 2 {
        return Err(Error::Contract("attention expects rank-2 inputs".into()));
    }
    let (nq, d) = (q.shape()[0], q.shape()[1]);
    let nk = k.shape()[0];
    if k.shape()[1] != d {
        return Err(Error::dimension("attention: q vs k", q.shape(), k.shape()));
    }
    if v.shape()[0] != nk {
        return Err(Error::dimension("attention: k vs v", k.shape(), v.shape()));
    }
    let dv = v.shape()[1];
    if let Some(m) = mask {
        if m.nq != nq || m.nk != nk {
            return Err(Error::dimension(
                "attention: mask",
                &[m.nq, m.nk],
                &[nq, nk],
            ));
        }
        for qi in 0..nq {
            if !m.row(qi).iter().any(|&a| a) {
                return Err(Error::Contract(format!(
                    "attention: query row {qi} is fully blocked; apply fallback upstream"
                )));
            }
        }
    }
    let scale = 1.0 / (d as f64).sqrt();
    let mut out = vec![0.0f32; nq * dv];
    let mut scores = vec![0.0f32; nk];
    for qi in 0..nq {
        let qr = q.row(qi);
        for ki in 0..nk {
            let blocked = mask.map(|m| !m.row(qi)[ki]).unwrap_or(false);
            if blocked {
                scores[ki] = f32::NEG_INFINITY;
            } else {
                let kr = k.row(ki);
                let mut dot = 0.0f64;
                for (a, b) in qr.iter().zip(kr) {
                    dot += *a as f64 * *b as f64;
                }
                scores[ki] = (dot * scale) as f32;
            }
        }
        softmax_row(&mut scores);
        let orow = &mut out[qi * dv..(qi + 1) * dv];
        let mut acc = vec![0.0f64; dv];
        for (ki, &s) in scores.iter().enumerate() {
            if s == 0.0 {
                continue;
            }
            let s = s as f64;
            for (a, &vv) in acc.iter_mut().zip(v.row(ki)) {
                *a += s * vv as f64;
            }
        }
        for (o, &a) in orow.iter_mut().zip(&acc) {
            *o = a as f32;
        }
    }
    Tensor::from_vec(&[nq, dv], out)
}

/// Two-layer feed-forward block: linear -> ReLU -> linear.
pub fn feed_forward(x: &Tensor, w1: &Tensor, b1: &Tensor, w2: &Tensor, b2: &Tensor) -> Result<Tensor> {
    let mut hidden = linear(x, w1, b1)?;
    for v in hidden.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    linear(&hidden, w2, b2)
}

/// Numerically stable ln(1 + e^z).
#[inline]
pub fn softplus(z: f32) -> f32 {
    let z = z as f64;
    (z.max(0.0) + (-z.abs()).exp().ln_1p()) as f32
}

/// Numerically stable logistic sigmoid.
#[inline]
pub fn sigmoid(z: f32) -> f32 {
    let z = z as f64;
    if z >= 0.0 {
        (1.0 / (1.0 + (-z).exp())) as f32
    } else {
        let e = z.exp();
        (e / (1.0 + e)) as f32
    }
}
