use crate::attention::AttentionStrategy;
use crate::sampling::{RngStream, StreamRole};
use crate::tensor::Matrix;
use crate::TokenId;

use super::{LogitsProvider, ModelError, TransformerLm};

/// Keeps the perturbation draws apart from any sampling stream using the
/// same seed.
const PERTURB_SALT: u64 = 0x5eed_d4af_7000_0001;
const PERTURB_LANE: u64 = 7;

/// A draft whose agreement with the main model is dialed in directly.
///
/// Its distribution at each position is `a * q + (1 - a) * δ_t`, where `q`
/// is the wrapped main model's softmax and `t` a pseudo-random token keyed by
/// `(seed, position, input token)`. Under speculative sampling at
/// temperature 1 a drafted token is then accepted with probability
/// `a + (1 - a) * q(t)`, i.e. almost exactly `a` for a large vocabulary, and
/// independently across positions.
#[derive(Debug, Clone)]
pub struct SyntheticAlignedDraft {
    inner: TransformerLm,
    alignment: f64,
    seed: u64,
}

impl SyntheticAlignedDraft {
    pub fn new(main: TransformerLm, alignment: f64, seed: u64) -> Result<Self, ModelError> {
        if !(0.0..=1.0).contains(&alignment) {
            return Err(ModelError::Alignment(alignment));
        }
        Ok(Self {
            inner: main,
            alignment,
            seed,
        })
    }

    pub fn alignment(&self) -> f64 {
        self.alignment
    }

    /// The token that receives the perturbation mass at `position`.
    pub fn perturbation_token(&self, position: usize, input: TokenId) -> TokenId {
        let u = RngStream::new(self.seed ^ PERTURB_SALT, position as u64, StreamRole::Draft)
            .uniform(input as u64, PERTURB_LANE);
        let vocab = self.inner.vocab_size();
        ((u * vocab as f64) as usize).min(vocab - 1) as TokenId
    }

    /// Mixes one row of main-model logits with the perturbation.
    pub fn mix_logits(&self, main_logits: &[f32], position: usize, input: TokenId) -> Vec<f32> {
        if self.alignment >= 1.0 {
            return main_logits.to_vec();
        }
        let max = main_logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        let weights: Vec<f64> = main_logits.iter().map(|&l| (l as f64 - max).exp()).collect();
        let total: f64 = weights.iter().sum();
        let t = self.perturbation_token(position, input) as usize;
        weights
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let mut p = self.alignment * w / total;
                if i == t {
                    p += 1.0 - self.alignment;
                }
                if p > 0.0 {
                    p.ln() as f32
                } else {
                    f32::NEG_INFINITY
                }
            })
            .collect()
    }
}

impl LogitsProvider for SyntheticAlignedDraft {
    fn vocab_size(&self) -> usize {
        self.inner.vocab_size()
    }

    fn max_seq_len(&self) -> usize {
        self.inner.max_seq_len()
    }

    fn reset(&mut self, n_seqs: usize) {
        self.inner.reset(n_seqs);
    }

    fn cached_len(&self, seq: usize) -> usize {
        self.inner.cached_len(seq)
    }

    fn forward(
        &mut self,
        seqs: &[usize],
        blocks: &[Vec<TokenId>],
        strategy: AttentionStrategy,
    ) -> Result<Vec<Matrix>, ModelError> {
        let offsets: Vec<usize> = seqs.iter().map(|&s| self.inner.cached_len(s)).collect();
        let main = self.inner.forward(seqs, blocks, strategy)?;
        if self.alignment >= 1.0 {
            return Ok(main);
        }
        Ok(main
            .into_iter()
            .enumerate()
            .map(|(i, logits)| {
                let data = (0..logits.rows)
                    .flat_map(|j| self.mix_logits(logits.row(j), offsets[i] + j, blocks[i][j]))
                    .collect();
                Matrix::from_vec(logits.rows, logits.cols, data)
            })
            .collect())
    }

    fn truncate(&mut self, seq: usize, len: usize) -> Result<(), ModelError> {
        self.inner.truncate(seq, len)
    }
}
