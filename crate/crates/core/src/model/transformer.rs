use std::sync::Arc;

use crate::attention::{attend, AttentionStrategy, AttentionWorkload, SeqAttention};
use crate::kv::RaggedKvCache;
use crate::quant::{fake_quant_per_head, QuantLinear};
use crate::tensor::Matrix;
use crate::TokenId;

use super::{ModelConfig, ModelError, ModelWeights};

const LN_EPS: f32 = 1e-5;

/// Anything that can score blocks of new tokens against its own per-sequence
/// cache: the main model, a draft model, or a synthetic draft.
///
/// Implementations must be pure with respect to committed state: identical
/// histories and inputs give identical logits.
pub trait LogitsProvider {
    fn vocab_size(&self) -> usize;
    fn max_seq_len(&self) -> usize;
    /// Drops all cached state and makes room for `n_seqs` sequences.
    fn reset(&mut self, n_seqs: usize);
    fn cached_len(&self, seq: usize) -> usize;
    /// Encodes `blocks[i]` after the cached history of `seqs[i]` and returns
    /// one logits row per new token.
    fn forward(
        &mut self,
        seqs: &[usize],
        blocks: &[Vec<TokenId>],
        strategy: AttentionStrategy,
    ) -> Result<Vec<Matrix>, ModelError>;
    fn truncate(&mut self, seq: usize, len: usize) -> Result<(), ModelError>;
}

/// Per-channel INT8 copies of every linear layer.
#[derive(Debug, Clone)]
pub struct QuantizedWeights {
    layers: Vec<QuantizedLayer>,
    head: QuantLinear,
}

#[derive(Debug, Clone)]
struct QuantizedLayer {
    qkv: QuantLinear,
    out: QuantLinear,
    fc: QuantLinear,
    proj: QuantLinear,
}

impl QuantizedWeights {
    pub fn from_weights(w: &ModelWeights) -> Result<Self, ModelError> {
        let layers = w
            .layers
            .iter()
            .map(|l| {
                Ok(QuantizedLayer {
                    qkv: QuantLinear::new(&l.w_qkv, &l.b_qkv)?,
                    out: QuantLinear::new(&l.w_out, &l.b_out)?,
                    fc: QuantLinear::new(&l.w_fc, &l.b_fc)?,
                    proj: QuantLinear::new(&l.w_proj, &l.b_proj)?,
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        let head = QuantLinear::new(&w.head, &vec![0.0; w.config.vocab_size])?;
        Ok(Self { layers, head })
    }
}

fn layer_norm(x: &Matrix, gain: &[f32], bias: &[f32]) -> Matrix {
    let mut out = x.clone();
    let n = x.cols as f32;
    for r in 0..x.rows {
        let row = out.row_mut(r);
        let mean = row.iter().sum::<f32>() / n;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f32>() / n;
        let inv = 1.0 / (var + LN_EPS).sqrt();
        for ((v, g), b) in row.iter_mut().zip(gain).zip(bias) {
            *v = (*v - mean) * inv * g + b;
        }
    }
    out
}

fn gelu(x: f32) -> f32 {
    const C: f32 = 0.797_884_6; // sqrt(2/pi)
    0.5 * x * (1.0 + (C * (x + 0.044_715 * x * x * x)).tanh())
}

fn linear(x: &Matrix, w: &Matrix, b: &[f32]) -> Matrix {
    let mut y = x.matmul(w);
    y.add_row_vector(b);
    y
}

/// Columns `[start, start + width)` of `m`.
fn column_slice(m: &Matrix, start: usize, width: usize) -> Matrix {
    let mut out = Matrix::zeros(m.rows, width);
    for r in 0..m.rows {
        out.row_mut(r).copy_from_slice(&m.row(r)[start..start + width]);
    }
    out
}

fn validate_batch(
    config: &ModelConfig,
    cache: &RaggedKvCache,
    seqs: &[usize],
    blocks: &[Vec<TokenId>],
) -> Result<(), ModelError> {
    if seqs.len() != blocks.len() {
        return Err(ModelError::BadBatch(format!(
            "{} sequences but {} token blocks",
            seqs.len(),
            blocks.len()
        )));
    }
    let mut seen = vec![false; cache.n_seqs()];
    for (&seq, block) in seqs.iter().zip(blocks) {
        if seq >= cache.n_seqs() {
            return Err(ModelError::BadBatch(format!(
                "sequence {seq} out of range ({} in cache)",
                cache.n_seqs()
            )));
        }
        if std::mem::replace(&mut seen[seq], true) {
            return Err(ModelError::BadBatch(format!("sequence {seq} listed twice")));
        }
        if block.is_empty() {
            return Err(ModelError::BadBatch(format!("sequence {seq} has no new tokens")));
        }
        let needed = cache.len(seq) + block.len();
        if needed > config.max_seq_len {
            return Err(ModelError::ContextOverflow {
                seq,
                needed,
                max: config.max_seq_len,
            });
        }
        if let Some(&token) = block.iter().find(|&&t| t as usize >= config.vocab_size) {
            return Err(ModelError::TokenOutOfRange {
                token,
                vocab: config.vocab_size,
            });
        }
    }
    Ok(())
}

/// Runs one incremental-encoding pass over ragged per-sequence blocks,
/// appending their keys and values to `cache`. Returns `[block_len, vocab]`
/// logits per sequence.
pub fn forward_block(
    weights: &ModelWeights,
    quantized: Option<&QuantizedWeights>,
    cache: &mut RaggedKvCache,
    seqs: &[usize],
    blocks: &[Vec<TokenId>],
    strategy: AttentionStrategy,
) -> Result<Vec<Matrix>, ModelError> {
    let cfg = &weights.config;
    validate_batch(cfg, cache, seqs, blocks)?;
    let d = cfg.d_model;
    let (n_head, d_head) = (cfg.n_head, cfg.d_head());
    let offsets: Vec<usize> = seqs.iter().map(|&s| cache.len(s)).collect();
    let row_starts: Vec<usize> = blocks
        .iter()
        .scan(0, |acc, b| {
            let start = *acc;
            *acc += b.len();
            Some(start)
        })
        .collect();
    let total: usize = blocks.iter().map(Vec::len).sum();

    let mut x = Matrix::zeros(total, d);
    for (i, block) in blocks.iter().enumerate() {
        for (j, &tok) in block.iter().enumerate() {
            let row = x.row_mut(row_starts[i] + j);
            let emb = weights.tok_emb.row(tok as usize);
            let pos = weights.pos_emb.row(offsets[i] + j);
            for ((r, e), p) in row.iter_mut().zip(emb).zip(pos) {
                *r = e + p;
            }
        }
    }

    for (layer_idx, layer) in weights.layers.iter().enumerate() {
        let ql = quantized.map(|q| &q.layers[layer_idx]);
        let h = layer_norm(&x, &layer.ln1_gain, &layer.ln1_bias);
        let qkv = match ql {
            Some(q) => q.qkv.forward(&h, None)?,
            None => linear(&h, &layer.w_qkv, &layer.b_qkv),
        };
        let (mut q, mut k, mut v) = (
            column_slice(&qkv, 0, d),
            column_slice(&qkv, d, d),
            column_slice(&qkv, 2 * d, d),
        );
        if ql.is_some() {
            q = fake_quant_per_head(&q, n_head)?;
            k = fake_quant_per_head(&k, n_head)?;
            v = fake_quant_per_head(&v, n_head)?;
        }
        for (i, &seq) in seqs.iter().enumerate() {
            let rows = row_starts[i] * d..(row_starts[i] + blocks[i].len()) * d;
            cache.append(seq, layer_idx, &k.data[rows.clone()], &v.data[rows])?;
        }
        let workload = AttentionWorkload::new(
            n_head,
            d_head,
            seqs.iter()
                .enumerate()
                .map(|(i, &seq)| SeqAttention {
                    queries: &q.data[row_starts[i] * d..(row_starts[i] + blocks[i].len()) * d],
                    keys: cache.keys(seq, layer_idx),
                    values: cache.values(seq, layer_idx),
                    offset: offsets[i],
                })
                .collect(),
        );
        let context = Matrix::from_vec(total, d, attend(&workload, strategy)?.concat());
        x = match ql {
            Some(q) => q.out.forward(&context, Some(&x))?,
            None => {
                let mut y = linear(&context, &layer.w_out, &layer.b_out);
                y.add_assign(&x);
                y
            }
        };

        let h2 = layer_norm(&x, &layer.ln2_gain, &layer.ln2_bias);
        let mut f = match ql {
            Some(q) => q.fc.forward(&h2, None)?,
            None => linear(&h2, &layer.w_fc, &layer.b_fc),
        };
        f.data.iter_mut().for_each(|v| *v = gelu(*v));
        x = match ql {
            Some(q) => q.proj.forward(&f, Some(&x))?,
            None => {
                let mut y = linear(&f, &layer.w_proj, &layer.b_proj);
                y.add_assign(&x);
                y
            }
        };
    }

    let hf = layer_norm(&x, &weights.lnf_gain, &weights.lnf_bias);
    let logits = match quantized {
        Some(q) => q.head.forward(&hf, None)?,
        None => hf.matmul(&weights.head),
    };
    Ok(blocks
        .iter()
        .enumerate()
        .map(|(i, b)| {
            let start = row_starts[i] * cfg.vocab_size;
            Matrix::from_vec(
                b.len(),
                cfg.vocab_size,
                logits.data[start..start + b.len() * cfg.vocab_size].to_vec(),
            )
        })
        .collect())
}

/// Encodes a whole prompt into an empty sequence slot and returns the logits
/// of its last position.
pub fn prefill(
    weights: &ModelWeights,
    quantized: Option<&QuantizedWeights>,
    cache: &mut RaggedKvCache,
    seq: usize,
    prompt: &[TokenId],
) -> Result<Vec<f32>, ModelError> {
    if prompt.is_empty() {
        return Err(ModelError::EmptyPrompt);
    }
    if seq < cache.n_seqs() && !cache.is_empty(seq) {
        return Err(ModelError::PrefillOnNonEmpty {
            seq,
            len: cache.len(seq),
        });
    }
    let logits = forward_block(
        weights,
        quantized,
        cache,
        &[seq],
        &[prompt.to_vec()],
        AttentionStrategy::Pad,
    )?;
    Ok(logits[0].row(prompt.len() - 1).to_vec())
}

/// A model instance: shared immutable weights plus its own ragged cache.
#[derive(Debug, Clone)]
pub struct TransformerLm {
    weights: Arc<ModelWeights>,
    quantized: Option<Arc<QuantizedWeights>>,
    cache: RaggedKvCache,
}

impl TransformerLm {
    pub fn new(weights: Arc<ModelWeights>) -> Self {
        let cfg = weights.config;
        Self {
            cache: RaggedKvCache::new(cfg.n_layer, cfg.n_head, cfg.d_head(), 0),
            weights,
            quantized: None,
        }
    }

    /// Same model running every linear layer through the INT8 path.
    pub fn quantized(weights: Arc<ModelWeights>) -> Result<Self, ModelError> {
        let q = QuantizedWeights::from_weights(&weights)?;
        let mut lm = Self::new(weights);
        lm.quantized = Some(Arc::new(q));
        Ok(lm)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.weights.config
    }

    pub fn weights(&self) -> &Arc<ModelWeights> {
        &self.weights
    }

    pub fn is_quantized(&self) -> bool {
        self.quantized.is_some()
    }

    pub fn cache(&self) -> &RaggedKvCache {
        &self.cache
    }

    pub fn prefill(&mut self, seq: usize, prompt: &[TokenId]) -> Result<Vec<f32>, ModelError> {
        prefill(&self.weights, self.quantized.as_deref(), &mut self.cache, seq, prompt)
    }
}

impl LogitsProvider for TransformerLm {
    fn vocab_size(&self) -> usize {
        self.weights.config.vocab_size
    }

    fn max_seq_len(&self) -> usize {
        self.weights.config.max_seq_len
    }

    fn reset(&mut self, n_seqs: usize) {
        let cfg = self.weights.config;
        self.cache = RaggedKvCache::new(cfg.n_layer, cfg.n_head, cfg.d_head(), n_seqs);
    }

    fn cached_len(&self, seq: usize) -> usize {
        self.cache.len(seq)
    }

    fn forward(
        &mut self,
        seqs: &[usize],
        blocks: &[Vec<TokenId>],
        strategy: AttentionStrategy,
    ) -> Result<Vec<Matrix>, ModelError> {
        forward_block(
            &self.weights,
            self.quantized.as_deref(),
            &mut self.cache,
            seqs,
            blocks,
            strategy,
        )
    }

    fn truncate(&mut self, seq: usize, len: usize) -> Result<(), ModelError> {
        Ok(self.cache.truncate(seq, len)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::init_model;

    fn tiny() -> ModelConfig {
        ModelConfig {
            n_layer: 2,
            n_head: 2,
            d_model: 16,
            vocab_size: 32,
            max_seq_len: 64,
        }
    }

    fn lm() -> TransformerLm {
        TransformerLm::new(Arc::new(init_model(tiny(), 5).unwrap()))
    }

    #[test]
    fn prefill_sets_cache_length() {
        let mut m = lm();
        m.reset(2);
        let logits = m.prefill(1, &[1, 2, 3, 4, 5]).unwrap();
        assert_eq!(logits.len(), 32);
        assert!(logits.iter().all(|v| v.is_finite()));
        assert_eq!(m.cache().lengths(), vec![0, 5]);
        assert!(matches!(m.prefill(1, &[1]), Err(ModelError::PrefillOnNonEmpty { .. })));
        assert!(matches!(m.prefill(0, &[]), Err(ModelError::EmptyPrompt)));
    }

    #[test]
    fn prompt_longer_than_context_rejected() {
        let mut m = lm();
        m.reset(1);
        let long: Vec<TokenId> = (0..65).map(|i| i % 32).collect();
        assert!(matches!(m.prefill(0, &long), Err(ModelError::ContextOverflow { .. })));
        assert!(m.cache().is_empty(0));
    }

    #[test]
    fn prefill_then_step_equals_longer_prefill() {
        let mut a = lm();
        a.reset(1);
        a.prefill(0, &[3, 1, 4, 1, 5]).unwrap();
        let step = a.forward(&[0], &[vec![9]], AttentionStrategy::Pad).unwrap();
        let mut b = lm();
        b.reset(1);
        let full = b.prefill(0, &[3, 1, 4, 1, 5, 9]).unwrap();
        let diff = step[0]
            .row(0)
            .iter()
            .zip(&full)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f32, f32::max);
        assert!(diff <= 1e-5);
    }

    #[test]
    fn block_equals_token_by_token() {
        let mut a = lm();
        a.reset(1);
        a.prefill(0, &[7, 7]).unwrap();
        let block = a.forward(&[0], &[vec![1, 2, 3, 4]], AttentionStrategy::Split).unwrap();
        let mut b = lm();
        b.reset(1);
        b.prefill(0, &[7, 7]).unwrap();
        for (j, t) in [1, 2, 3, 4].into_iter().enumerate() {
            let single = b.forward(&[0], &[vec![t]], AttentionStrategy::Split).unwrap();
            assert_eq!(single[0].row(0), block[0].row(j));
        }
    }

    #[test]
    fn bad_batches_rejected_before_touching_cache() {
        let mut m = lm();
        m.reset(2);
        m.prefill(0, &[1]).unwrap();
        let before = m.cache().clone();
        assert!(m.forward(&[0, 0], &[vec![1], vec![2]], AttentionStrategy::Pad).is_err());
        assert!(m.forward(&[0], &[vec![]], AttentionStrategy::Pad).is_err());
        assert!(m.forward(&[0], &[vec![99]], AttentionStrategy::Pad).is_err());
        assert!(m.forward(&[0], &[vec![1; 64]], AttentionStrategy::Pad).is_err());
        assert!(m.forward(&[2], &[vec![1]], AttentionStrategy::Pad).is_err());
        assert_eq!(m.cache(), &before);
    }

    #[test]
    fn quantized_model_runs_and_tracks_float() {
        let w = Arc::new(init_model(tiny(), 5).unwrap());
        let mut fp = TransformerLm::new(w.clone());
        let mut q = TransformerLm::quantized(w).unwrap();
        fp.reset(1);
        q.reset(1);
        let a = fp.prefill(0, &[1, 2, 3]).unwrap();
        let b = q.prefill(0, &[1, 2, 3]).unwrap();
        let scale = a.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        let diff = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0f32, f32::max);
        assert!(diff < 0.1 * scale, "diff {diff} scale {scale}");
        assert_ne!(a, b);
    }
}
