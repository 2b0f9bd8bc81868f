//! Desk-scale decoder-only transformer.
//!
//! Pre-layer-norm GPT-2 style blocks with learned positional embeddings and a
//! tanh-approximated GELU feed-forward of width `4 * d_model`. Weights are
//! seeded Gaussians (std 0.02) with zero biases and unit layer-norm gains;
//! nothing is trained.

mod checkpoint;
mod synthetic;
mod transformer;

pub use checkpoint::{
    load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use synthetic::SyntheticAlignedDraft;
pub use transformer::{forward_block, prefill, LogitsProvider, QuantizedWeights, TransformerLm};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention::AttentionError;
use crate::kv::CacheError;
use crate::quant::QuantError;
use crate::tensor::Matrix;
use crate::TokenId;

pub const INIT_STD: f32 = 0.02;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model config: {0}")]
    Config(String),
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("sequence {seq} would reach {needed} positions, max_seq_len is {max}")]
    ContextOverflow { seq: usize, needed: usize, max: usize },
    #[error("token {token} out of range for vocab {vocab}")]
    TokenOutOfRange { token: TokenId, vocab: usize },
    #[error("prefill requires an empty cache, sequence {seq} already holds {len} positions")]
    PrefillOnNonEmpty { seq: usize, len: usize },
    #[error("bad batch: {0}")]
    BadBatch(String),
    #[error("alignment must lie in [0, 1], got {0}")]
    Alignment(f64),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Cache(#[from] CacheError),
    #[error(transparent)]
    Attention(#[from] AttentionError),
    #[error(transparent)]
    Quant(#[from] QuantError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub n_layer: usize,
    pub n_head: usize,
    pub d_model: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
}

impl ModelConfig {
    /// Main model used by the benchmark defaults: 4 layers, 8 heads, 256 wide.
    pub fn desk_main() -> Self {
        Self {
            n_layer: 4,
            n_head: 8,
            d_model: 256,
            vocab_size: 512,
            max_seq_len: 512,
        }
    }

    /// Draft model used by the benchmark defaults: 2 layers, 4 heads, 128 wide.
    pub fn desk_draft() -> Self {
        Self {
            n_layer: 2,
            n_head: 4,
            d_model: 128,
            vocab_size: 512,
            max_seq_len: 512,
        }
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_head.max(1)
    }

    pub fn d_ff(&self) -> usize {
        4 * self.d_model
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let counts = [
            ("n_layer", self.n_layer),
            ("n_head", self.n_head),
            ("d_model", self.d_model),
            ("vocab_size", self.vocab_size),
            ("max_seq_len", self.max_seq_len),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return Err(ModelError::Config(format!("{name} must be >= 1")));
        }
        if !self.d_model.is_multiple_of(self.n_head) {
            return Err(ModelError::Config(format!(
                "d_model={} is not divisible by n_head={}",
                self.d_model, self.n_head
            )));
        }
        if self.vocab_size > TokenId::MAX as usize {
            return Err(ModelError::Config("vocab_size exceeds the token id range".into()));
        }
        Ok(())
    }

    /// Parameter count of the weights produced by [`init_model`].
    pub fn param_count(&self) -> usize {
        let d = self.d_model;
        let per_layer = 4 * d + (d * 3 * d + 3 * d) + (d * d + d) + (d * 4 * d + 4 * d) + (4 * d * d + d);
        self.vocab_size * d * 2 + self.max_seq_len * d + self.n_layer * per_layer + 2 * d
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub ln1_gain: Vec<f32>,
    pub ln1_bias: Vec<f32>,
    /// `[d_model, 3 * d_model]`, columns ordered Q | K | V.
    pub w_qkv: Matrix,
    pub b_qkv: Vec<f32>,
    pub w_out: Matrix,
    pub b_out: Vec<f32>,
    pub ln2_gain: Vec<f32>,
    pub ln2_bias: Vec<f32>,
    pub w_fc: Matrix,
    pub b_fc: Vec<f32>,
    pub w_proj: Matrix,
    pub b_proj: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub tok_emb: Matrix,
    pub pos_emb: Matrix,
    pub layers: Vec<LayerWeights>,
    pub lnf_gain: Vec<f32>,
    pub lnf_bias: Vec<f32>,
    /// `[d_model, vocab]`.
    pub head: Matrix,
}

/// Seeded Gaussian init; `(config, seed)` fully determines the weights.
pub fn init_model(config: ModelConfig, seed: u64) -> Result<ModelWeights, ModelError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0f32, INIT_STD).expect("std is positive");
    let mut gaussian = |rows: usize, cols: usize| {
        Matrix::from_vec(rows, cols, (0..rows * cols).map(|_| normal.sample(&mut rng)).collect())
    };
    let (d, v) = (config.d_model, config.vocab_size);

    let tok_emb = gaussian(v, d);
    let pos_emb = gaussian(config.max_seq_len, d);
    let layers = (0..config.n_layer)
        .map(|_| LayerWeights {
            ln1_gain: vec![1.0; d],
            ln1_bias: vec![0.0; d],
            w_qkv: gaussian(d, 3 * d),
            b_qkv: vec![0.0; 3 * d],
            w_out: gaussian(d, d),
            b_out: vec![0.0; d],
            ln2_gain: vec![1.0; d],
            ln2_bias: vec![0.0; d],
            w_fc: gaussian(d, 4 * d),
            b_fc: vec![0.0; 4 * d],
            w_proj: gaussian(4 * d, d),
            b_proj: vec![0.0; d],
        })
        .collect();
    let head = gaussian(d, v);
    Ok(ModelWeights {
        config,
        tok_emb,
        pos_emb,
        layers,
        lnf_gain: vec![1.0; d],
        lnf_bias: vec![0.0; d],
        head,
    })
}

impl ModelWeights {
    /// Every array with its checkpoint name and shape, in a fixed order.
    pub fn named_arrays(&self) -> Vec<NamedArray<'_>> {
        let mut out = vec![
            mat("tok_emb".into(), &self.tok_emb),
            mat("pos_emb".into(), &self.pos_emb),
        ];
        for (i, l) in self.layers.iter().enumerate() {
            let vec1 = |n: &str, v| vec1(format!("layers.{i}.{n}"), v);
            out.push(vec1("ln1.gain", &l.ln1_gain));
            out.push(vec1("ln1.bias", &l.ln1_bias));
            out.push(mat(format!("layers.{i}.attn.w_qkv"), &l.w_qkv));
            out.push(vec1("attn.b_qkv", &l.b_qkv));
            out.push(mat(format!("layers.{i}.attn.w_out"), &l.w_out));
            out.push(vec1("attn.b_out", &l.b_out));
            out.push(vec1("ln2.gain", &l.ln2_gain));
            out.push(vec1("ln2.bias", &l.ln2_bias));
            out.push(mat(format!("layers.{i}.mlp.w_fc"), &l.w_fc));
            out.push(vec1("mlp.b_fc", &l.b_fc));
            out.push(mat(format!("layers.{i}.mlp.w_proj"), &l.w_proj));
            out.push(vec1("mlp.b_proj", &l.b_proj));
        }
        out.push(vec1("lnf.gain".into(), &self.lnf_gain));
        out.push(vec1("lnf.bias".into(), &self.lnf_bias));
        out.push(mat("head".into(), &self.head));
        out
    }

    pub fn is_finite(&self) -> bool {
        self.named_arrays()
            .iter()
            .all(|(_, _, data)| data.iter().all(|v| v.is_finite()))
    }
}

type NamedArray<'a> = (String, Vec<usize>, &'a [f32]);

fn mat(name: String, m: &Matrix) -> NamedArray<'_> {
    (name, vec![m.rows, m.cols], &m.data[..])
}

fn vec1(name: String, v: &[f32]) -> NamedArray<'_> {
    (name, vec![v.len()], v)
}
