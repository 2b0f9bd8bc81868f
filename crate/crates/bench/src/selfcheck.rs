//! Fast invariant checks runnable from the CLI.

use std::sync::Arc;

use anyhow::Result;
use bass_core::attention::AttentionStrategy;
use bass_core::draft::{DraftLengthParams, DraftLengthState, DraftPolicy};
use bass_core::engine::{decode_regular, decode_speculative, GenerationRequest};
use bass_core::model::{init_model, LogitsProvider, ModelConfig, SyntheticAlignedDraft, TransformerLm};
use bass_core::quant::{int_gemm_dequant, quantize_activations_per_token, quantize_weights_per_channel};
use bass_core::sampling::{residual, TokenDistribution};
use bass_core::tensor::Matrix;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, f: impl FnOnce() -> Result<(bool, String)>) -> CheckResult {
    match f() {
        Ok((passed, detail)) => CheckResult { name, passed, detail },
        Err(e) => CheckResult {
            name,
            passed: false,
            detail: format!("error: {e:#}"),
        },
    }
}

fn small() -> ModelConfig {
    ModelConfig {
        n_layer: 2,
        n_head: 4,
        d_model: 32,
        vocab_size: 128,
        max_seq_len: 128,
    }
}

pub fn run_selfcheck() -> Vec<CheckResult> {
    vec![
        check("accept-rule-law", accept_rule_law),
        check("greedy-equivalence", greedy_equivalence),
        check("batch-invariance", batch_invariance),
        check("pad-split-agreement", pad_split_agreement),
        check("draft-length-trace", draft_length_trace),
        check("int-gemm-factorization", int_gemm_factorization),
    ]
}

/// Emitted law `q(x) = min(q, p)(x) + P(reject) * residual(x)`, enumerated.
fn accept_rule_law() -> Result<(bool, String)> {
    let q = TokenDistribution::from_weights(vec![0.1, 0.4, 0.2, 0.3])?;
    let p = TokenDistribution::from_weights(vec![0.4, 0.1, 0.3, 0.2])?;
    let reject: f64 = (0..4u32).map(|x| p.prob(x) - p.prob(x).min(q.prob(x))).sum();
    let r = residual(&q, &p)?.expect("q differs from p");
    let worst = (0..4u32)
        .map(|x| (p.prob(x).min(q.prob(x)) + reject * r.prob(x) - q.prob(x)).abs())
        .fold(0.0, f64::max);
    Ok((worst < 1e-12, format!("max deviation {worst:.2e}")))
}

fn greedy_equivalence() -> Result<(bool, String)> {
    let w = Arc::new(init_model(small(), 1)?);
    let req = GenerationRequest::new(vec![vec![1, 2, 3], vec![7]], 32);
    let regular = decode_regular(&mut TransformerLm::new(w.clone()), &req)?;
    let mut draft = SyntheticAlignedDraft::new(TransformerLm::new(w.clone()), 0.5, 2)?;
    let mut policy = DraftPolicy::adaptive(DraftLengthParams::default())?;
    let spec = decode_speculative(&mut TransformerLm::new(w), &mut draft, &req, &mut policy)?;
    Ok((
        regular.tokens() == spec.tokens(),
        format!("{} tokens", spec.total_tokens()),
    ))
}

fn batch_invariance() -> Result<(bool, String)> {
    let w = Arc::new(init_model(small(), 3)?);
    let prompts = vec![vec![4, 5], vec![9, 9, 9], vec![1]];
    let mut req = GenerationRequest::new(prompts.clone(), 24);
    req.temperature = 1.0;
    req.seed = 11;
    let run = |req: &GenerationRequest| -> Result<Vec<Vec<u32>>> {
        let mut draft = SyntheticAlignedDraft::new(TransformerLm::new(w.clone()), 0.7, 4)?;
        let mut policy = DraftPolicy::adaptive(DraftLengthParams::default())?;
        Ok(decode_speculative(&mut TransformerLm::new(w.clone()), &mut draft, req, &mut policy)?.tokens())
    };
    let together = run(&req)?;
    let mut ok = true;
    for (i, p) in prompts.into_iter().enumerate() {
        let mut alone = GenerationRequest::new(vec![p], 24);
        alone.temperature = 1.0;
        alone.seed = 11;
        alone.stream_ids = Some(vec![i as u64]);
        ok &= run(&alone)?[0] == together[i];
    }
    Ok((ok, "3 sequences".into()))
}

fn pad_split_agreement() -> Result<(bool, String)> {
    let w = Arc::new(init_model(small(), 5)?);
    let blocks = vec![vec![1, 2, 3, 4, 5, 6, 7], vec![8], vec![9, 10, 11]];
    let seqs = [0, 1, 2];
    let mut a = TransformerLm::new(w.clone());
    let mut b = TransformerLm::new(w);
    a.reset(3);
    b.reset(3);
    let pa = a.forward(&seqs, &blocks, AttentionStrategy::Pad)?;
    let pb = b.forward(&seqs, &blocks, AttentionStrategy::Split)?;
    let diff = pa
        .iter()
        .zip(&pb)
        .map(|(x, y)| x.max_abs_diff(y))
        .fold(0.0f32, f32::max);
    Ok((diff <= 1e-5, format!("max abs diff {diff:.2e}")))
}

fn draft_length_trace() -> Result<(bool, String)> {
    let s = DraftLengthState::new(DraftLengthParams::default())?;
    let s1 = s.update(&[7, 3])?;
    let s2 = s1.update(&[3, 1])?;
    let s3 = s2.update(&[2, 2])?;
    let got = [(s1.l_draft, s1.s), (s2.l_draft, s2.s), (s3.l_draft, s3.s)];
    Ok((got == [(9, 0), (8, 1), (6, 1)], format!("{got:?}")))
}

fn int_gemm_factorization() -> Result<(bool, String)> {
    let a = Matrix::from_vec(2, 3, vec![0.5, -1.0, 0.25, 2.0, 0.1, -0.3]);
    let w = Matrix::from_vec(3, 2, vec![1.0, -0.5, 0.2, 0.7, -0.9, 0.05]);
    let aq = quantize_activations_per_token(&a)?;
    let wq = quantize_weights_per_channel(&w)?;
    let fused = int_gemm_dequant(&aq, &wq, None, None)?;
    let reference = aq.dequantize().matmul(&wq.dequantize());
    let rel = fused.max_abs_diff(&reference) / reference.data.iter().fold(0.0f32, |m, v| m.max(v.abs()));
    Ok((rel <= 1e-6, format!("relative diff {rel:.2e}")))
}
