//! Symmetric INT8 quantization with scales along the GEMM inner-product
//! groupings: per output channel for weights, per token for activations, and
//! per (token, head) for keys, queries and values.
//!
//! Payloads are `round(x * 127 / max|group|)` with round-half-away-from-zero,
//! clamped to `[-127, 127]`; an all-zero group gets scale 1. Scales are kept
//! in `f64`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::Matrix;

pub const QMAX: f64 = 127.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantError {
    #[error("input contains non-finite values")]
    NonFinite,
    #[error("inner dimension {cols} is not divisible by n_head={n_head}")]
    HeadDivisibility { cols: usize, n_head: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("scale axis mismatch: expected {expected:?}, got {got:?}")]
    Axis { expected: QuantAxis, got: QuantAxis },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuantAxis {
    /// One scale per column of a `[in, out]` weight.
    PerOutputChannel,
    /// One scale per row.
    PerToken,
    /// One scale per (row, head) slice of `d_head` columns.
    PerHeadPerToken { n_head: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantTensor {
    pub rows: usize,
    pub cols: usize,
    pub payload: Vec<i8>,
    pub scales: Vec<f64>,
    pub axis: QuantAxis,
}

fn group_scale(max_abs: f32) -> f64 {
    if max_abs == 0.0 {
        1.0
    } else {
        max_abs as f64 / QMAX
    }
}

fn quantize_value(x: f32, max_abs: f32) -> i8 {
    if max_abs == 0.0 {
        return 0;
    }
    // x * 127 / max keeps exact ties exact (0.5 * 127 / 2 = 31.75, 1.0 * 127 / 2 = 63.5).
    let q = (x as f64 * QMAX / max_abs as f64).round();
    q.clamp(-QMAX, QMAX) as i8
}

fn check_finite(m: &Matrix) -> Result<(), QuantError> {
    if m.is_finite() {
        Ok(())
    } else {
        Err(QuantError::NonFinite)
    }
}

fn max_abs<'a>(values: impl Iterator<Item = &'a f32>) -> f32 {
    values.fold(0.0f32, |m, v| m.max(v.abs()))
}

pub fn quantize_weights_per_channel(w: &Matrix) -> Result<QuantTensor, QuantError> {
    check_finite(w)?;
    let maxes: Vec<f32> = (0..w.cols)
        .map(|c| max_abs((0..w.rows).map(|r| &w.data[r * w.cols + c])))
        .collect();
    let payload = w
        .data
        .iter()
        .enumerate()
        .map(|(i, &x)| quantize_value(x, maxes[i % w.cols]))
        .collect();
    Ok(QuantTensor {
        rows: w.rows,
        cols: w.cols,
        payload,
        scales: maxes.into_iter().map(group_scale).collect(),
        axis: QuantAxis::PerOutputChannel,
    })
}

pub fn quantize_activations_per_token(a: &Matrix) -> Result<QuantTensor, QuantError> {
    check_finite(a)?;
    let mut payload = Vec::with_capacity(a.data.len());
    let mut scales = Vec::with_capacity(a.rows);
    for row in a.rows_iter() {
        let m = max_abs(row.iter());
        payload.extend(row.iter().map(|&x| quantize_value(x, m)));
        scales.push(group_scale(m));
    }
    Ok(QuantTensor {
        rows: a.rows,
        cols: a.cols,
        payload,
        scales,
        axis: QuantAxis::PerToken,
    })
}

pub fn quantize_kqv_per_head(t: &Matrix, n_head: usize) -> Result<QuantTensor, QuantError> {
    if n_head == 0 || !t.cols.is_multiple_of(n_head) {
        return Err(QuantError::HeadDivisibility { cols: t.cols, n_head });
    }
    check_finite(t)?;
    let d_head = t.cols / n_head;
    let mut payload = Vec::with_capacity(t.data.len());
    let mut scales = Vec::with_capacity(t.rows * n_head);
    for row in t.rows_iter() {
        for head in row.chunks_exact(d_head) {
            let m = max_abs(head.iter());
            payload.extend(head.iter().map(|&x| quantize_value(x, m)));
            scales.push(group_scale(m));
        }
    }
    Ok(QuantTensor {
        rows: t.rows,
        cols: t.cols,
        payload,
        scales,
        axis: QuantAxis::PerHeadPerToken { n_head },
    })
}

impl QuantTensor {
    /// Scale governing element `(r, c)`.
    pub fn scale_at(&self, r: usize, c: usize) -> f64 {
        match self.axis {
            QuantAxis::PerOutputChannel => self.scales[c],
            QuantAxis::PerToken => self.scales[r],
            QuantAxis::PerHeadPerToken { n_head } => {
                let d_head = self.cols / n_head;
                self.scales[r * n_head + c / d_head]
            }
        }
    }

    pub fn dequantize(&self) -> Matrix {
        let data = self
            .payload
            .iter()
            .enumerate()
            .map(|(i, &q)| (q as f64 * self.scale_at(i / self.cols, i % self.cols)) as f32)
            .collect();
        Matrix::from_vec(self.rows, self.cols, data)
    }
}

/// Integer GEMM with the dequantize, bias and residual epilogue fused:
/// `out[t, c] = (Σ_i a[t, i] · w[i, c]) · s_t · s_c + bias[c] + residual[t, c]`.
///
/// The sum is accumulated exactly in `i32`; the scale product is formed once
/// per output element.
pub fn int_gemm_dequant(
    a: &QuantTensor,
    w: &QuantTensor,
    bias: Option<&[f32]>,
    residual: Option<&Matrix>,
) -> Result<Matrix, QuantError> {
    if a.axis != QuantAxis::PerToken {
        return Err(QuantError::Axis {
            expected: QuantAxis::PerToken,
            got: a.axis,
        });
    }
    if w.axis != QuantAxis::PerOutputChannel {
        return Err(QuantError::Axis {
            expected: QuantAxis::PerOutputChannel,
            got: w.axis,
        });
    }
    if a.cols != w.rows {
        return Err(QuantError::Dimension(format!(
            "activation has {} columns but weight has {} rows",
            a.cols, w.rows
        )));
    }
    if let Some(b) = bias {
        if b.len() != w.cols {
            return Err(QuantError::Dimension(format!(
                "bias length {} != output channels {}",
                b.len(),
                w.cols
            )));
        }
    }
    if let Some(r) = residual {
        if r.rows != a.rows || r.cols != w.cols {
            return Err(QuantError::Dimension(format!(
                "residual is {}x{}, output is {}x{}",
                r.rows, r.cols, a.rows, w.cols
            )));
        }
    }

    let (inner, out_cols) = (a.cols, w.cols);
    let mut out = Matrix::zeros(a.rows, out_cols);
    let mut acc = vec![0i32; out_cols];
    for t in 0..a.rows {
        acc.fill(0);
        let a_row = &a.payload[t * inner..(t + 1) * inner];
        for (i, &av) in a_row.iter().enumerate() {
            if av == 0 {
                continue;
            }
            let av = av as i32;
            let w_row = &w.payload[i * out_cols..(i + 1) * out_cols];
            for (acc_c, &wv) in acc.iter_mut().zip(w_row) {
                *acc_c += av * wv as i32;
            }
        }
        let s_t = a.scales[t];
        let o = out.row_mut(t);
        for c in 0..out_cols {
            let mut v = acc[c] as f64 * (s_t * w.scales[c]);
            if let Some(b) = bias {
                v += b[c] as f64;
            }
            if let Some(r) = residual {
                v += r.data[t * out_cols + c] as f64;
            }
            o[c] = v as f32;
        }
    }
    Ok(out)
}

/// Quantize-dequantize round trip, per (token, head).
pub fn fake_quant_per_head(t: &Matrix, n_head: usize) -> Result<Matrix, QuantError> {
    quantize_kqv_per_head(t, n_head).map(|q| q.dequantize())
}

/// A linear layer held as a per-channel INT8 weight plus float bias.
#[derive(Debug, Clone)]
pub struct QuantLinear {
    pub weight: QuantTensor,
    pub bias: Vec<f32>,
}

impl QuantLinear {
    pub fn new(weight: &Matrix, bias: &[f32]) -> Result<Self, QuantError> {
        Ok(Self {
            weight: quantize_weights_per_channel(weight)?,
            bias: bias.to_vec(),
        })
    }

    /// Dynamic per-token activation quantization followed by the fused GEMM.
    pub fn forward(&self, x: &Matrix, residual: Option<&Matrix>) -> Result<Matrix, QuantError> {
        let xq = quantize_activations_per_token(x)?;
        int_gemm_dequant(&xq, &self.weight, Some(&self.bias), residual)
    }
}
