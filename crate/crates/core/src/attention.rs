//! Attention over ragged batches.
//!
//! Both strategies compute `P = softmax(Q Kᵀ · scale)` with a causal mask and
//! then `P V`, one softmax per sequence:
//!
//! * [`AttentionStrategy::Pad`] packs K and V (and Q) into one rectangular
//!   batch padded to the longest sequence, runs each GEMM once over the whole
//!   batch, and gives padded keys zero probability via an additive mask.
//! * [`AttentionStrategy::Split`] runs both GEMMs per sequence on the exact
//!   ragged shapes.
//!
//! Masked scores get [`MASK_VALUE`] added before the softmax. `exp` of that
//! underflows to exactly zero in `f32`, and the reductions run in the same
//! order in both strategies, so padding only ever adds exact zeros.

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MASK_VALUE: f32 = -1e9;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum AttentionError {
    #[error("sequence {seq}: {what}")]
    Geometry { seq: usize, what: String },
    #[error("sequence {seq}: {n_queries} queries at offset {offset} need {needed} cached keys, found {found}")]
    MissingKeys {
        seq: usize,
        n_queries: usize,
        offset: usize,
        needed: usize,
        found: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AttentionStrategy {
    #[default]
    Pad,
    Split,
}

impl AttentionStrategy {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Pad => "pad",
            Self::Split => "split",
        }
    }
}

impl std::str::FromStr for AttentionStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pad" => Ok(Self::Pad),
            "split" => Ok(Self::Split),
            other => Err(format!("unknown attention strategy '{other}' (expected pad|split)")),
        }
    }
}

/// One sequence's share of an attention call. `keys`/`values` hold the whole
/// history including the new positions; query `t` may see keys
/// `0..=offset + t`.
#[derive(Debug, Clone, Copy)]
pub struct SeqAttention<'a> {
    pub queries: &'a [f32],
    pub keys: &'a [f32],
    pub values: &'a [f32],
    pub offset: usize,
}

#[derive(Debug, Clone)]
pub struct AttentionWorkload<'a> {
    pub n_head: usize,
    pub d_head: usize,
    pub scale: f32,
    pub seqs: Vec<SeqAttention<'a>>,
}

/// Query/key extents of a workload, without the data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaggedShape {
    pub n_head: usize,
    pub d_head: usize,
    /// `(query positions, key positions)` per sequence.
    pub seqs: Vec<(usize, usize)>,
}

/// Per-sequence attention probabilities, `[head][query]` rows. Rows are
/// `kv_len` wide under SPLIT and `max kv_len` wide under PAD.
pub type ProbRows = Vec<Vec<Vec<f32>>>;

impl<'a> AttentionWorkload<'a> {
    pub fn new(n_head: usize, d_head: usize, seqs: Vec<SeqAttention<'a>>) -> Self {
        Self {
            n_head,
            d_head,
            scale: 1.0 / (d_head as f32).sqrt(),
            seqs,
        }
    }

    pub fn width(&self) -> usize {
        self.n_head * self.d_head
    }

    pub fn shape(&self) -> RaggedShape {
        let w = self.width();
        RaggedShape {
            n_head: self.n_head,
            d_head: self.d_head,
            seqs: self
                .seqs
                .iter()
                .map(|s| (s.queries.len() / w, s.keys.len() / w))
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), AttentionError> {
        let w = self.width();
        for (i, s) in self.seqs.iter().enumerate() {
            let geom = |what: &str| AttentionError::Geometry {
                seq: i,
                what: what.to_string(),
            };
            if w == 0 {
                return Err(geom("zero head width"));
            }
            if s.queries.is_empty() || s.queries.len() % w != 0 {
                return Err(geom("query block must hold >= 1 position of n_head*d_head floats"));
            }
            if s.keys.len() != s.values.len() || s.keys.len() % w != 0 {
                return Err(geom("keys and values must be equal-length multiples of n_head*d_head"));
            }
            let n_q = s.queries.len() / w;
            let kv = s.keys.len() / w;
            if kv < s.offset + n_q {
                return Err(AttentionError::MissingKeys {
                    seq: i,
                    n_queries: n_q,
                    offset: s.offset,
                    needed: s.offset + n_q,
                    found: kv,
                });
            }
        }
        Ok(())
    }
}

/// Context vectors per sequence, `n_queries * n_head * d_head` each.
pub fn attend(workload: &AttentionWorkload<'_>, strategy: AttentionStrategy) -> Result<Vec<Vec<f32>>, AttentionError> {
    attend_with_probs(workload, strategy).map(|(out, _)| out)
}

pub fn attend_with_probs(
    workload: &AttentionWorkload<'_>,
    strategy: AttentionStrategy,
) -> Result<(Vec<Vec<f32>>, Vec<ProbRows>), AttentionError> {
    workload.validate()?;
    Ok(match strategy {
        AttentionStrategy::Pad => attend_pad(workload),
        AttentionStrategy::Split => workload.seqs.iter().map(|s| attend_one(workload, s)).unzip(),
    })
}

/// SPLIT's per-sequence task. Tasks share nothing, so any execution order
/// gives the same result.
pub fn attend_one(workload: &AttentionWorkload<'_>, seq: &SeqAttention<'_>) -> (Vec<f32>, ProbRows) {
    let (h_n, d) = (workload.n_head, workload.d_head);
    let w = h_n * d;
    let n_q = seq.queries.len() / w;
    let kv = seq.keys.len() / w;
    let mut out = vec![0.0f32; n_q * w];
    let mut probs = vec![vec![Vec::new(); n_q]; h_n];
    for h in 0..h_n {
        for t in 0..n_q {
            let q = &seq.queries[t * w + h * d..t * w + (h + 1) * d];
            let visible = seq.offset + t;
            let mut row: Vec<f32> = (0..kv)
                .map(|j| {
                    let s = dot(q, &seq.keys[j * w + h * d..j * w + (h + 1) * d]) * workload.scale;
                    if j > visible {
                        s + MASK_VALUE
                    } else {
                        s
                    }
                })
                .collect();
            softmax_in_place(&mut row);
            let o = &mut out[t * w + h * d..t * w + (h + 1) * d];
            for (j, &p) in row.iter().enumerate() {
                axpy(p, &seq.values[j * w + h * d..j * w + (h + 1) * d], o);
            }
            probs[h][t] = row;
        }
    }
    (out, probs)
}

fn attend_pad(workload: &AttentionWorkload<'_>) -> (Vec<Vec<f32>>, Vec<ProbRows>) {
    let (h_n, d) = (workload.n_head, workload.d_head);
    let w = h_n * d;
    let b = workload.seqs.len();
    let shape = workload.shape();
    let q_max = shape.seqs.iter().map(|s| s.0).max().unwrap_or(0);
    let l_max = shape.seqs.iter().map(|s| s.1).max().unwrap_or(0);

    // Rectangular [b, q_max, w] and [b, l_max, w] operands, zero padded.
    let mut q_pad = vec![0.0f32; b * q_max * w];
    let mut k_pad = vec![0.0f32; b * l_max * w];
    let mut v_pad = vec![0.0f32; b * l_max * w];
    for (i, s) in workload.seqs.iter().enumerate() {
        q_pad[i * q_max * w..i * q_max * w + s.queries.len()].copy_from_slice(s.queries);
        k_pad[i * l_max * w..i * l_max * w + s.keys.len()].copy_from_slice(s.keys);
        v_pad[i * l_max * w..i * l_max * w + s.values.len()].copy_from_slice(s.values);
    }

    // First GEMM over the padded batch: scores[b][h][q_max][l_max].
    let mut scores = vec![0.0f32; b * h_n * q_max * l_max];
    for i in 0..b {
        for h in 0..h_n {
            for t in 0..q_max {
                let q = &q_pad[(i * q_max + t) * w + h * d..][..d];
                let row = &mut scores[((i * h_n + h) * q_max + t) * l_max..][..l_max];
                for (j, r) in row.iter_mut().enumerate() {
                    *r = dot(q, &k_pad[(i * l_max + j) * w + h * d..][..d]) * workload.scale;
                }
            }
        }
    }

    // Mask padding and the causal future, then one softmax per sequence.
    let mut probs = Vec::with_capacity(b);
    for (i, s) in workload.seqs.iter().enumerate() {
        let (n_q, kv) = shape.seqs[i];
        let mut seq_probs = vec![Vec::with_capacity(n_q); h_n];
        for (h, head_rows) in seq_probs.iter_mut().enumerate() {
            for t in 0..q_max {
                let row = &mut scores[((i * h_n + h) * q_max + t) * l_max..][..l_max];
                if t >= n_q {
                    row.fill(0.0);
                    continue;
                }
                for (j, r) in row.iter_mut().enumerate() {
                    if j >= kv || j > s.offset + t {
                        *r += MASK_VALUE;
                    }
                }
                softmax_in_place(row);
                head_rows.push(row.to_vec());
            }
        }
        probs.push(seq_probs);
    }

    // Second GEMM over the padded batch.
    let mut out_pad = vec![0.0f32; b * q_max * w];
    for i in 0..b {
        for h in 0..h_n {
            for t in 0..q_max {
                let p_row = &scores[((i * h_n + h) * q_max + t) * l_max..][..l_max];
                let o = &mut out_pad[(i * q_max + t) * w + h * d..][..d];
                for (j, &p) in p_row.iter().enumerate() {
                    axpy(p, &v_pad[(i * l_max + j) * w + h * d..][..d], o);
                }
            }
        }
    }
    let outputs = (0..b)
        .map(|i| out_pad[i * q_max * w..][..shape.seqs[i].0 * w].to_vec())
        .collect();
    (outputs, probs)
}

fn dot(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).fold(0.0, |acc, (x, y)| acc + x * y)
}

fn axpy(alpha: f32, x: &[f32], y: &mut [f32]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

fn softmax_in_place(row: &mut [f32]) {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut sum = 0.0f32;
    for r in row.iter_mut() {
        *r = (*r - max).exp();
        sum += *r;
    }
    for r in row.iter_mut() {
        *r /= sum;
    }
}

/// Dummy multiply-adds PAD spends on padding: every padded (query, key) slot
/// costs `d_head` score MACs, one softmax element and `d_head` PV MACs, per
/// head.
pub fn pad_cost(shape: &RaggedShape) -> u64 {
    let q_max = shape.seqs.iter().map(|s| s.0).max().unwrap_or(0);
    let l_max = shape.seqs.iter().map(|s| s.1).max().unwrap_or(0);
    let padded_slots: usize = shape.seqs.iter().map(|&(q, l)| q_max * l_max - q * l).sum();
    (padded_slots * shape.n_head * (2 * shape.d_head + 1)) as u64
}

/// Kernel launches for one attention call over `batch` sequences: PAD runs
/// each GEMM once plus a softmax per sequence; SPLIT runs all three stages
/// per sequence.
pub fn launch_count(strategy: AttentionStrategy, batch: usize) -> usize {
    match strategy {
        AttentionStrategy::Pad => 2 + batch,
        AttentionStrategy::Split => 3 * batch,
    }
}

/// Launch overhead of SPLIT for `batch` sequences, in seconds.
pub fn split_cost(batch: usize, per_launch_overhead: f64) -> f64 {
    launch_count(AttentionStrategy::Split, batch) as f64 * per_launch_overhead
}
