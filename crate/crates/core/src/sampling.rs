//! Temperature / nucleus shaping, sampling, and the speculative accept/reject
//! rule.
//!
//! All probabilities are kept in `f64`. Randomness comes from [`RngStream`],
//! a counter-based stream: every uniform is a pure function of
//! `(seed, sequence, role, counter, lane)`, so a sequence's draws never depend
//! on what else is in the batch.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::TokenId;

/// Slack used when comparing a cumulative sum against `top_p`.
const TOP_P_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("logits are empty")]
    Empty,
    #[error("all logits are -inf; no token can be sampled")]
    NoSupport,
    #[error("logits contain NaN or +inf")]
    NonFinite,
    #[error("temperature must be >= 0 (got {0})")]
    BadTemperature(f64),
    #[error("top_p must lie in (0, 1] (got {0})")]
    BadTopP(f64),
    #[error("draft token {token} has zero probability under the draft distribution")]
    DraftTokenOutsideSupport { token: TokenId },
    #[error("distributions have different vocabularies ({0} vs {1})")]
    VocabMismatch(usize, usize),
}

/// A normalized probability vector over the vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenDistribution {
    probs: Vec<f64>,
}

impl TokenDistribution {
    /// Builds a distribution from non-negative weights, normalizing them.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self, SamplingError> {
        if weights.is_empty() {
            return Err(SamplingError::Empty);
        }
        if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(SamplingError::NonFinite);
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(SamplingError::NoSupport);
        }
        Ok(Self {
            probs: weights.into_iter().map(|w| w / total).collect(),
        })
    }

    pub fn point_mass(vocab: usize, token: TokenId) -> Self {
        let mut probs = vec![0.0; vocab];
        probs[token as usize] = 1.0;
        Self { probs }
    }

    pub fn uniform(vocab: usize) -> Self {
        Self {
            probs: vec![1.0 / vocab as f64; vocab],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, token: TokenId) -> f64 {
        self.probs.get(token as usize).copied().unwrap_or(0.0)
    }

    pub fn vocab_size(&self) -> usize {
        self.probs.len()
    }

    /// Most likely token; ties go to the lowest id.
    pub fn argmax(&self) -> TokenId {
        argmax_f64(&self.probs) as TokenId
    }

    pub fn support_len(&self) -> usize {
        self.probs.iter().filter(|p| **p > 0.0).count()
    }

    /// Draws a token by inverse CDF from a uniform `u` in `[0, 1)`.
    pub fn sample_with(&self, u: f64) -> TokenId {
        let mut acc = 0.0;
        let mut last_supported = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p <= 0.0 {
                continue;
            }
            last_supported = i;
            acc += p;
            if u < acc {
                return i as TokenId;
            }
        }
        // Rounding left the cumulative sum a hair below 1.
        last_supported as TokenId
    }
}

fn argmax_f64(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Index of the largest logit, lowest index on ties.
pub fn argmax_logits(logits: &[f32]) -> TokenId {
    let mut best = 0;
    for (i, v) in logits.iter().enumerate() {
        if *v > logits[best] {
            best = i;
        }
    }
    best as TokenId
}

/// Natural-log softmax of `logits` at `token`, temperature 1, no truncation.
/// This is the model-confidence score used for mean-logP ranking.
pub fn log_prob(logits: &[f32], token: TokenId) -> f64 {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let lse = logits.iter().map(|&l| (l as f64 - max).exp()).sum::<f64>().ln() + max;
    logits[token as usize] as f64 - lse
}

/// Shapes raw logits into the distribution actually sampled from.
///
/// Temperature 0 is a point mass on the argmax. Otherwise the softmax of
/// `logits / temperature` is truncated to the smallest set of most likely
/// tokens whose mass reaches `top_p` (ties ordered by ascending id) and
/// renormalized.
pub fn to_distribution(logits: &[f32], temperature: f64, top_p: f64) -> Result<TokenDistribution, SamplingError> {
    if logits.is_empty() {
        return Err(SamplingError::Empty);
    }
    if !(temperature >= 0.0) || !temperature.is_finite() {
        return Err(SamplingError::BadTemperature(temperature));
    }
    if !(top_p > 0.0 && top_p <= 1.0) {
        return Err(SamplingError::BadTopP(top_p));
    }
    if logits.iter().any(|l| l.is_nan() || *l == f32::INFINITY) {
        return Err(SamplingError::NonFinite);
    }
    if logits.iter().all(|l| *l == f32::NEG_INFINITY) {
        return Err(SamplingError::NoSupport);
    }
    let vocab = logits.len();
    if temperature == 0.0 {
        return Ok(TokenDistribution::point_mass(vocab, argmax_logits(logits)));
    }

    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let weights: Vec<f64> = logits.iter().map(|&l| ((l as f64 - max) / temperature).exp()).collect();
    let total: f64 = weights.iter().sum();
    let mut probs: Vec<f64> = weights.iter().map(|w| w / total).collect();

    if top_p < 1.0 {
        let mut order: Vec<usize> = (0..vocab).collect();
        order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
        let mut cumulative = 0.0;
        let mut keep = vocab;
        for (rank, &idx) in order.iter().enumerate() {
            cumulative += probs[idx];
            if cumulative >= top_p - TOP_P_SLACK {
                keep = rank + 1;
                break;
            }
        }
        for &idx in &order[keep..] {
            probs[idx] = 0.0;
        }
        let kept: f64 = probs.iter().sum();
        for p in &mut probs {
            *p /= kept;
        }
    }
    Ok(TokenDistribution { probs })
}

/// `normalize(max(0, q - p))`, or `None` when `q <= p` everywhere (rejection
/// then has probability zero).
pub fn residual(q: &TokenDistribution, p: &TokenDistribution) -> Result<Option<TokenDistribution>, SamplingError> {
    if q.vocab_size() != p.vocab_size() {
        return Err(SamplingError::VocabMismatch(q.vocab_size(), p.vocab_size()));
    }
    let diff: Vec<f64> = q.probs.iter().zip(&p.probs).map(|(a, b)| (a - b).max(0.0)).collect();
    if diff.iter().sum::<f64>() <= 0.0 {
        return Ok(None);
    }
    TokenDistribution::from_weights(diff).map(Some)
}

/// Probability that a drafted `token` survives verification.
pub fn acceptance_probability(q: &TokenDistribution, p: &TokenDistribution, token: TokenId) -> f64 {
    let pd = p.prob(token);
    if pd <= 0.0 {
        return 0.0;
    }
    (q.prob(token) / pd).min(1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AcceptDecision {
    Accepted,
    Rejected { corrected: TokenId },
}

/// Speculative verification of one drafted token.
///
/// Accepts with probability `min(1, q(x)/p(x))` using `u_accept`; on rejection
/// the corrected token is drawn from the residual with `u_residual`. The token
/// emitted by this rule is distributed exactly as `q`.
pub fn speculative_accept(
    q_main: &TokenDistribution,
    p_draft: &TokenDistribution,
    draft_token: TokenId,
    u_accept: f64,
    u_residual: f64,
) -> Result<AcceptDecision, SamplingError> {
    if q_main.vocab_size() != p_draft.vocab_size() {
        return Err(SamplingError::VocabMismatch(q_main.vocab_size(), p_draft.vocab_size()));
    }
    let pd = p_draft.prob(draft_token);
    if pd <= 0.0 {
        return Err(SamplingError::DraftTokenOutsideSupport { token: draft_token });
    }
    let ratio = q_main.prob(draft_token) / pd;
    if u_accept < ratio {
        return Ok(AcceptDecision::Accepted);
    }
    // Rejection has positive probability, so the residual is non-empty.
    let corrected = match residual(q_main, p_draft)? {
        Some(r) => r.sample_with(u_residual),
        None => q_main.sample_with(u_residual),
    };
    Ok(AcceptDecision::Rejected { corrected })
}

/// Which part of the decoding loop consumes a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamRole {
    Draft,
    Verify,
}

/// Independent uniforms consumed at one verification position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum VerifyLane {
    Accept = 0,
    Residual = 1,
    Regular = 2,
}

/// Counter-based uniform stream keyed by `(seed, sequence, role)`.
///
/// `uniform(counter, lane)` is stateless: the same key and counter always
/// give the same value, whatever was drawn before.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    sequence: u64,
    role: StreamRole,
}

impl RngStream {
    pub fn new(seed: u64, sequence: u64, role: StreamRole) -> Self {
        Self { seed, sequence, role }
    }

    pub fn uniform(&self, counter: u64, lane: u64) -> f64 {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.seed.to_le_bytes());
        key[8..16].copy_from_slice(&self.sequence.to_le_bytes());
        key[16] = match self.role {
            StreamRole::Draft => 1,
            StreamRole::Verify => 2,
        };
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(lane);
        // One f64 consumes two 32-bit words.
        rng.set_word_pos(u128::from(counter) * 2);
        rng.random::<f64>()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn greedy_is_point_mass_on_argmax() {
        let d = to_distribution(&[1.0, 3.0, 2.0], 0.0, 1.0).unwrap();
        assert_eq!(d.probs(), &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn top_p_one_keeps_full_softmax() {
        let d = to_distribution(&[0.0, 1.0, 2.0], 1.0, 1.0).unwrap();
        let z = 1.0 + 1f64.exp() + 2f64.exp();
        assert!(close(d.prob(0), 1.0 / z, 1e-12));
        assert!(close(d.prob(2), 2f64.exp() / z, 1e-12));
        assert_eq!(d.support_len(), 3);
    }

    #[test]
    fn top_p_half_truncates_to_single_token() {
        // softmax = (0.25, 0.25, 0.5); 0.5 alone reaches top_p.
        let d = to_distribution(&[0.0, 0.0, std::f32::consts::LN_2], 1.0, 0.5).unwrap();
        assert!(close(d.prob(2), 1.0, 1e-12));
        assert_eq!(d.support_len(), 1);
    }

    #[test]
    fn top_p_ties_break_by_ascending_id() {
        // Four equal tokens, top_p 0.5 keeps the two lowest ids.
        let d = to_distribution(&[0.0; 4], 1.0, 0.5).unwrap();
        assert!(close(d.prob(0), 0.5, 1e-12));
        assert!(close(d.prob(1), 0.5, 1e-12));
        assert_eq!(d.prob(2), 0.0);
    }

    #[test]
    fn rejects_degenerate_logits() {
        let ninf = f32::NEG_INFINITY;
        assert_eq!(to_distribution(&[ninf, ninf], 1.0, 1.0), Err(SamplingError::NoSupport));
        assert_eq!(
            to_distribution(&[0.0, f32::NAN], 1.0, 1.0),
            Err(SamplingError::NonFinite)
        );
        assert!(matches!(
            to_distribution(&[0.0], 1.0, 0.0),
            Err(SamplingError::BadTopP(_))
        ));
        assert!(matches!(
            to_distribution(&[0.0], -1.0, 1.0),
            Err(SamplingError::BadTemperature(_))
        ));
    }

    #[test]
    fn neg_inf_logits_get_zero_mass() {
        let d = to_distribution(&[0.0, f32::NEG_INFINITY, 0.0], 1.0, 1.0).unwrap();
        assert_eq!(d.prob(1), 0.0);
        assert!(close(d.prob(0), 0.5, 1e-12));
    }

    #[test]
    fn identical_distributions_always_accept() {
        let q = to_distribution(&[0.3, -1.0, 2.0, 0.0], 1.0, 1.0).unwrap();
        for i in 0..200 {
            let u = i as f64 / 200.0;
            for tok in 0..4 {
                assert_eq!(
                    speculative_accept(&q, &q, tok, u, 0.5).unwrap(),
                    AcceptDecision::Accepted
                );
            }
        }
    }

    #[test]
    fn drafted_token_outside_support_is_an_error() {
        let q = TokenDistribution::uniform(3);
        let p = TokenDistribution::point_mass(3, 0);
        assert_eq!(
            speculative_accept(&q, &p, 2, 0.1, 0.1),
            Err(SamplingError::DraftTokenOutsideSupport { token: 2 })
        );
    }

    #[test]
    fn point_mass_draft_accepts_at_q_rate() {
        // q(A) = 0.5, p = delta_A: acceptance should be 0.5.
        let q = TokenDistribution::from_weights(vec![0.5, 0.3, 0.2]).unwrap();
        let p = TokenDistribution::point_mass(3, 0);
        let stream = RngStream::new(11, 0, StreamRole::Verify);
        let trials = 10_000;
        let mut accepted = 0;
        for t in 0..trials {
            let d = speculative_accept(&q, &p, 0, stream.uniform(t, 0), stream.uniform(t, 1)).unwrap();
            match d {
                AcceptDecision::Accepted => accepted += 1,
                AcceptDecision::Rejected { corrected } => assert_ne!(corrected, 0),
            }
        }
        let rate = accepted as f64 / trials as f64;
        assert!(close(rate, 0.5, 0.02), "rate {rate}");
    }

    #[test]
    fn uniform_sampling_frequencies() {
        let d = TokenDistribution::uniform(4);
        let stream = RngStream::new(3, 9, StreamRole::Draft);
        let n = 100_000;
        let mut counts = [0usize; 4];
        for c in 0..n {
            counts[d.sample_with(stream.uniform(c, 0)) as usize] += 1;
        }
        for c in counts {
            assert!(close(c as f64 / n as f64, 0.25, 0.01));
        }
    }

    #[test]
    fn point_mass_always_sampled() {
        let d = TokenDistribution::point_mass(8, 5);
        for u in [0.0, 0.3, 0.999_999] {
            assert_eq!(d.sample_with(u), 5);
        }
    }

    #[test]
    fn streams_are_replayable_and_keyed() {
        let a = RngStream::new(1, 2, StreamRole::Draft);
        assert_eq!(a.uniform(17, 0), a.uniform(17, 0));
        assert_ne!(a.uniform(17, 0), a.uniform(18, 0));
        assert_ne!(a.uniform(17, 0), a.uniform(17, 1));
        assert_ne!(a.uniform(17, 0), RngStream::new(1, 3, StreamRole::Draft).uniform(17, 0));
        assert_ne!(
            a.uniform(17, 0),
            RngStream::new(1, 2, StreamRole::Verify).uniform(17, 0)
        );
        let u = a.uniform(0, 0);
        assert!((0.0..1.0).contains(&u));
    }

    #[test]
    fn residual_none_when_q_dominated() {
        let q = TokenDistribution::uniform(4);
        assert_eq!(residual(&q, &q).unwrap(), None);
        let p = TokenDistribution::point_mass(4, 1);
        let r = residual(&q, &p).unwrap().unwrap();
        assert_eq!(r.prob(1), 0.0);
        assert!(close(r.prob(0), 1.0 / 3.0, 1e-12));
    }

    #[test]
    fn log_prob_matches_softmax() {
        let lp = log_prob(&[0.0, 0.0], 1);
        assert!(close(lp, 0.5f64.ln(), 1e-12));
    }
}
