//! Regular and batched speculative decoding loops.
//!
//! Both loops keep every model cache at `context_len - 1` positions after a
//! step: the newest committed token is pending and gets encoded as the first
//! input of the next forward pass. A step therefore feeds the main model
//! `pending tokens ++ drafts` and reads the last `k + 1` logits rows; on the
//! first step the pending tokens are the whole prompt.
//!
//! Randomness is keyed by `(seed, stream id, absolute output index)`, so a
//! sequence's sampled output does not depend on batch composition, step
//! boundaries or the draft length schedule.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attention::AttentionStrategy;
use crate::draft::{DraftError, DraftPolicy};
use crate::model::{LogitsProvider, ModelError};
use crate::sampling::{
    log_prob, speculative_accept, to_distribution, AcceptDecision, RngStream, SamplingError, StreamRole,
    TokenDistribution, VerifyLane,
};
use crate::TokenId;

/// Lane of the draft stream used to sample drafted tokens.
const DRAFT_LANE: u64 = 0;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("main vocab {main} differs from draft vocab {draft}")]
    VocabMismatch { main: usize, draft: usize },
    #[error("sequence {seq} needs {needed} positions, {model} max_seq_len is {max}")]
    ContextOverflow {
        seq: usize,
        needed: usize,
        max: usize,
        model: &'static str,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sampling(#[from] SamplingError),
    #[error(transparent)]
    Draft(#[from] DraftError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationRequest {
    pub prompts: Vec<Vec<TokenId>>,
    pub max_new_tokens: usize,
    /// 0 selects greedy decoding.
    pub temperature: f64,
    pub top_p: f64,
    pub eos_token: Option<TokenId>,
    pub strategy: AttentionStrategy,
    pub seed: u64,
    /// Per-sequence RNG stream ids; `None` means `0..b`.
    pub stream_ids: Option<Vec<u64>>,
}

impl GenerationRequest {
    pub fn new(prompts: Vec<Vec<TokenId>>, max_new_tokens: usize) -> Self {
        Self {
            prompts,
            max_new_tokens,
            temperature: 0.0,
            top_p: 1.0,
            eos_token: None,
            strategy: AttentionStrategy::Pad,
            seed: 0,
            stream_ids: None,
        }
    }

    /// `b` copies of one prompt.
    pub fn replicated(prompt: Vec<TokenId>, b: usize, max_new_tokens: usize) -> Self {
        Self::new(vec![prompt; b], max_new_tokens)
    }

    pub fn batch_size(&self) -> usize {
        self.prompts.len()
    }

    pub fn is_greedy(&self) -> bool {
        self.temperature == 0.0
    }

    pub fn stream_id(&self, seq: usize) -> u64 {
        match &self.stream_ids {
            Some(ids) => ids[seq],
            None => seq as u64,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |m: String| Err(EngineError::InvalidRequest(m));
        if self.prompts.is_empty() {
            return bad("batch size must be >= 1".into());
        }
        if self.max_new_tokens == 0 {
            return bad("max_new_tokens must be >= 1".into());
        }
        if let Some(i) = self.prompts.iter().position(Vec::is_empty) {
            return bad(format!("prompt {i} is empty"));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return bad(format!("temperature must be finite and >= 0, got {}", self.temperature));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return bad(format!("top_p must lie in (0, 1], got {}", self.top_p));
        }
        if let Some(ids) = &self.stream_ids {
            if ids.len() != self.prompts.len() {
                return bad(format!("{} stream ids for {} prompts", ids.len(), self.prompts.len()));
            }
        }
        Ok(())
    }

    fn check_context(&self, model: &dyn LogitsProvider, name: &'static str) -> Result<(), EngineError> {
        for (seq, p) in self.prompts.iter().enumerate() {
            let needed = p.len() + self.max_new_tokens;
            if needed > model.max_seq_len() {
                return Err(EngineError::ContextOverflow {
                    seq,
                    needed,
                    max: model.max_seq_len(),
                    model: name,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    Regular,
    Speculative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeqStepOutcome {
    pub seq: usize,
    /// False for sequences that had already finished; they are inert.
    pub active: bool,
    /// Drafted tokens that passed verification, before EOS or budget cuts.
    pub accepted: usize,
    pub emitted: Vec<TokenId>,
    pub finished: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecStepOutcome {
    pub step: usize,
    /// Length proposed by the draft policy; 0 for regular decoding.
    pub draft_len: usize,
    /// Length actually drafted after clamping to the remaining budget.
    pub effective_draft_len: usize,
    pub sequences: Vec<SeqStepOutcome>,
    pub duration_s: f64,
}

impl SpecStepOutcome {
    /// Accepted counts of the sequences that took part in the step.
    pub fn active_accepts(&self) -> Vec<usize> {
        self.sequences.iter().filter(|s| s.active).map(|s| s.accepted).collect()
    }

    pub fn was_clamped(&self) -> bool {
        self.effective_draft_len < self.draft_len
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceOutput {
    pub tokens: Vec<TokenId>,
    /// Main-model log-probability of each token under the raw logits.
    pub logprobs: Vec<f64>,
    /// Index of the step that committed the last token.
    pub completion_step: usize,
    pub finish_time_s: f64,
    pub hit_eos: bool,
}

impl SequenceOutput {
    pub fn mean_logprob(&self) -> f64 {
        if self.logprobs.is_empty() {
            return f64::NEG_INFINITY;
        }
        self.logprobs.iter().sum::<f64>() / self.logprobs.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub mode: DecodeMode,
    pub sequences: Vec<SequenceOutput>,
    pub trace: Vec<SpecStepOutcome>,
    pub main_invocations: usize,
    pub draft_invocations: usize,
    pub wall_time_s: f64,
}

impl GenerationResult {
    pub fn total_tokens(&self) -> usize {
        self.sequences.iter().map(|s| s.tokens.len()).sum()
    }

    /// Per-position acceptance estimate: accepted drafts over verified
    /// positions. Drafts after a rejection are never verified, so they are
    /// not counted.
    pub fn acceptance_rate(&self) -> Option<f64> {
        let (mut accepted, mut verified) = (0usize, 0usize);
        for step in &self.trace {
            for s in step.sequences.iter().filter(|s| s.active) {
                accepted += s.accepted;
                verified += s.accepted + usize::from(s.accepted < step.effective_draft_len);
            }
        }
        (verified > 0).then(|| accepted as f64 / verified as f64)
    }

    pub fn main_invocations_per_token(&self) -> f64 {
        self.main_invocations as f64 / self.total_tokens().max(1) as f64
    }

    pub fn tokens(&self) -> Vec<Vec<TokenId>> {
        self.sequences.iter().map(|s| s.tokens.clone()).collect()
    }
}

/// The recorded per-step trace.
pub fn step_trace(result: &GenerationResult) -> &[SpecStepOutcome] {
    &result.trace
}

struct SeqState {
    context: Vec<TokenId>,
    out: SequenceOutput,
    finished: bool,
}

struct Run<'r> {
    req: &'r GenerationRequest,
    seqs: Vec<SeqState>,
    trace: Vec<SpecStepOutcome>,
    start: Instant,
}

impl<'r> Run<'r> {
    fn new(req: &'r GenerationRequest) -> Self {
        let seqs = req
            .prompts
            .iter()
            .map(|p| SeqState {
                context: p.clone(),
                out: SequenceOutput {
                    tokens: Vec::new(),
                    logprobs: Vec::new(),
                    completion_step: 0,
                    finish_time_s: 0.0,
                    hit_eos: false,
                },
                finished: false,
            })
            .collect();
        Self {
            req,
            seqs,
            trace: Vec::new(),
            start: Instant::now(),
        }
    }

    fn active(&self) -> Vec<usize> {
        (0..self.seqs.len()).filter(|&i| !self.seqs[i].finished).collect()
    }

    fn verify_stream(&self, seq: usize) -> RngStream {
        RngStream::new(self.req.seed, self.req.stream_id(seq), StreamRole::Verify)
    }

    fn draft_stream(&self, seq: usize) -> RngStream {
        RngStream::new(self.req.seed, self.req.stream_id(seq), StreamRole::Draft)
    }

    fn distribution(&self, logits: &[f32]) -> Result<TokenDistribution, SamplingError> {
        to_distribution(logits, self.req.temperature, self.req.top_p)
    }

    /// Appends `(token, logprob)` pairs, applying EOS and budget cuts, and
    /// returns what was actually committed.
    fn commit(&mut self, seq: usize, step: usize, proposed: Vec<(TokenId, f64)>) -> (Vec<TokenId>, bool) {
        let budget = self.req.max_new_tokens;
        let eos = self.req.eos_token;
        let now = self.start.elapsed().as_secs_f64();
        let st = &mut self.seqs[seq];
        let mut emitted = Vec::with_capacity(proposed.len());
        for (token, lp) in proposed {
            if st.out.tokens.len() >= budget {
                break;
            }
            st.context.push(token);
            st.out.tokens.push(token);
            st.out.logprobs.push(lp);
            emitted.push(token);
            if Some(token) == eos {
                st.out.hit_eos = true;
                break;
            }
        }
        if st.out.hit_eos || st.out.tokens.len() >= budget {
            st.finished = true;
            st.out.completion_step = step;
            st.out.finish_time_s = now;
        }
        (emitted, st.finished)
    }

    fn pending(&self, seq: usize, cached: usize) -> Vec<TokenId> {
        self.seqs[seq].context[cached..].to_vec()
    }

    fn finish(self, mode: DecodeMode, main_invocations: usize, draft_invocations: usize) -> GenerationResult {
        GenerationResult {
            mode,
            sequences: self.seqs.into_iter().map(|s| s.out).collect(),
            trace: self.trace,
            main_invocations,
            draft_invocations,
            wall_time_s: self.start.elapsed().as_secs_f64(),
        }
    }
}

fn inert(seq: usize) -> SeqStepOutcome {
    SeqStepOutcome {
        seq,
        active: false,
        accepted: 0,
        emitted: Vec::new(),
        finished: true,
    }
}

/// One token per unfinished sequence per main-model call.
pub fn decode_regular(main: &mut dyn LogitsProvider, req: &GenerationRequest) -> Result<GenerationResult, EngineError> {
    req.validate()?;
    req.check_context(main, "main")?;
    main.reset(req.batch_size());
    let mut run = Run::new(req);
    let mut invocations = 0;
    for step in 0.. {
        let active = run.active();
        if active.is_empty() {
            break;
        }
        let t0 = Instant::now();
        let blocks: Vec<Vec<TokenId>> = active.iter().map(|&s| run.pending(s, main.cached_len(s))).collect();
        let logits = main.forward(&active, &blocks, req.strategy)?;
        invocations += 1;

        let mut outcomes: Vec<SeqStepOutcome> = (0..req.batch_size()).map(inert).collect();
        for (i, &s) in active.iter().enumerate() {
            let row = logits[i].row(logits[i].rows - 1);
            let q = run.distribution(row)?;
            let token = if req.is_greedy() {
                q.argmax()
            } else {
                let n = run.seqs[s].out.tokens.len() as u64;
                q.sample_with(run.verify_stream(s).uniform(n, VerifyLane::Regular as u64))
            };
            let (emitted, finished) = run.commit(s, step, vec![(token, log_prob(row, token))]);
            outcomes[s] = SeqStepOutcome {
                seq: s,
                active: true,
                accepted: 0,
                emitted,
                finished,
            };
        }
        run.trace.push(SpecStepOutcome {
            step,
            draft_len: 0,
            effective_draft_len: 0,
            sequences: outcomes,
            duration_s: t0.elapsed().as_secs_f64(),
        });
    }
    Ok(run.finish(DecodeMode::Regular, invocations, 0))
}

/// Batched speculative decoding with one uniform draft length per step.
///
/// Each step drafts `k` tokens for every unfinished sequence, verifies all of
/// them in one main-model call, and commits the accepted prefix plus one
/// corrected or bonus token. `k` is the policy's length clamped to the
/// smallest remaining budget; the policy only observes unclamped steps.
pub fn decode_speculative(
    main: &mut dyn LogitsProvider,
    draft: &mut dyn LogitsProvider,
    req: &GenerationRequest,
    policy: &mut DraftPolicy,
) -> Result<GenerationResult, EngineError> {
    req.validate()?;
    if main.vocab_size() != draft.vocab_size() {
        return Err(EngineError::VocabMismatch {
            main: main.vocab_size(),
            draft: draft.vocab_size(),
        });
    }
    req.check_context(main, "main")?;
    req.check_context(draft, "draft")?;
    main.reset(req.batch_size());
    draft.reset(req.batch_size());
    let mut run = Run::new(req);
    let (mut main_calls, mut draft_calls) = (0, 0);

    for step in 0.. {
        let active = run.active();
        if active.is_empty() {
            break;
        }
        let t0 = Instant::now();
        let draft_len = policy.current();
        let min_remaining = active
            .iter()
            .map(|&s| req.max_new_tokens - run.seqs[s].out.tokens.len())
            .min()
            .unwrap_or(1);
        let k = draft_len.min(min_remaining);
        let base: Vec<usize> = active.iter().map(|&s| run.seqs[s].out.tokens.len()).collect();

        // Draft phase: k autoregressive calls batched across sequences.
        let mut drafted: Vec<Vec<TokenId>> = vec![Vec::with_capacity(k); active.len()];
        let mut draft_dists: Vec<Vec<TokenDistribution>> = vec![Vec::with_capacity(k); active.len()];
        for j in 0..k {
            let blocks: Vec<Vec<TokenId>> = if j == 0 {
                active.iter().map(|&s| run.pending(s, draft.cached_len(s))).collect()
            } else {
                drafted.iter().map(|d| vec![d[j - 1]]).collect()
            };
            let logits = draft.forward(&active, &blocks, req.strategy)?;
            draft_calls += 1;
            for (i, &s) in active.iter().enumerate() {
                let p = run.distribution(logits[i].row(logits[i].rows - 1))?;
                let y = if req.is_greedy() {
                    p.argmax()
                } else {
                    p.sample_with(run.draft_stream(s).uniform((base[i] + j) as u64, DRAFT_LANE))
                };
                drafted[i].push(y);
                draft_dists[i].push(p);
            }
        }

        // Verification: one main call over pending tokens plus all drafts.
        let blocks: Vec<Vec<TokenId>> = active
            .iter()
            .enumerate()
            .map(|(i, &s)| {
                let mut b = run.pending(s, main.cached_len(s));
                b.extend_from_slice(&drafted[i]);
                b
            })
            .collect();
        let logits = main.forward(&active, &blocks, req.strategy)?;
        main_calls += 1;

        let mut proposed: Vec<Vec<(TokenId, f64)>> = vec![Vec::new(); active.len()];
        let mut accepted = vec![0usize; active.len()];
        let mut needs_bonus = Vec::new();
        for (i, &s) in active.iter().enumerate() {
            let rows = &logits[i];
            let first = rows.rows - (k + 1);
            let verify = run.verify_stream(s);
            let mut rejected = false;
            for j in 0..k {
                let row = rows.row(first + j);
                let q = run.distribution(row)?;
                let y = drafted[i][j];
                let decision = if req.is_greedy() {
                    if y == q.argmax() {
                        AcceptDecision::Accepted
                    } else {
                        AcceptDecision::Rejected { corrected: q.argmax() }
                    }
                } else {
                    let n = (base[i] + j) as u64;
                    speculative_accept(
                        &q,
                        &draft_dists[i][j],
                        y,
                        verify.uniform(n, VerifyLane::Accept as u64),
                        verify.uniform(n, VerifyLane::Residual as u64),
                    )?
                };
                match decision {
                    AcceptDecision::Accepted => {
                        accepted[i] += 1;
                        proposed[i].push((y, log_prob(row, y)));
                    }
                    AcceptDecision::Rejected { corrected } => {
                        proposed[i].push((corrected, log_prob(row, corrected)));
                        rejected = true;
                        break;
                    }
                }
            }
            if !rejected {
                let row = rows.row(first + k);
                if req.is_greedy() {
                    let t = run.distribution(row)?.argmax();
                    proposed[i].push((t, log_prob(row, t)));
                } else {
                    needs_bonus.push(i);
                }
            }
        }

        // Sampled bonus tokens go through the same draft/accept/residual rule
        // as a drafted token at that index would, keeping outputs independent
        // of where step boundaries fall.
        if !needs_bonus.is_empty() {
            let seqs: Vec<usize> = needs_bonus.iter().map(|&i| active[i]).collect();
            let blocks: Vec<Vec<TokenId>> = needs_bonus.iter().map(|&i| vec![drafted[i][k - 1]]).collect();
            let draft_logits = draft.forward(&seqs, &blocks, req.strategy)?;
            draft_calls += 1;
            for (b, &i) in needs_bonus.iter().enumerate() {
                let s = active[i];
                let n = (base[i] + k) as u64;
                let p = run.distribution(draft_logits[b].row(0))?;
                let y = p.sample_with(run.draft_stream(s).uniform(n, DRAFT_LANE));
                let rows = &logits[i];
                let row = rows.row(rows.rows - 1);
                let q = run.distribution(row)?;
                let verify = run.verify_stream(s);
                let token = match speculative_accept(
                    &q,
                    &p,
                    y,
                    verify.uniform(n, VerifyLane::Accept as u64),
                    verify.uniform(n, VerifyLane::Residual as u64),
                )? {
                    AcceptDecision::Accepted => y,
                    AcceptDecision::Rejected { corrected } => corrected,
                };
                proposed[i].push((token, log_prob(row, token)));
            }
        }

        let mut outcomes: Vec<SeqStepOutcome> = (0..req.batch_size()).map(inert).collect();
        for (i, &s) in active.iter().enumerate() {
            let (emitted, finished) = run.commit(s, step, std::mem::take(&mut proposed[i]));
            let keep = run.seqs[s].context.len() - 1;
            main.truncate(s, keep)?;
            let draft_keep = draft.cached_len(s).min(keep);
            draft.truncate(s, draft_keep)?;
            outcomes[s] = SeqStepOutcome {
                seq: s,
                active: true,
                accepted: accepted[i],
                emitted,
                finished,
            };
        }
        if k == draft_len {
            policy.observe(&accepted)?;
        }
        run.trace.push(SpecStepOutcome {
            step,
            draft_len,
            effective_draft_len: k,
            sequences: outcomes,
            duration_s: t0.elapsed().as_secs_f64(),
        });
    }
    Ok(run.finish(DecodeMode::Speculative, main_calls, draft_calls))
}
