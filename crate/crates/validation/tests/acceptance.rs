//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Run with `cargo test -p bass-validation --test acceptance`.

use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{ensure, Result};
use bass_bench::config::RunConfig;
use bass_bench::generate::{run_ablation, ABLATION_FIXED_LENGTHS};
use bass_core::attention::AttentionStrategy;
use bass_core::draft::{DraftLengthParams, DraftLengthState, DraftPolicy};
use bass_core::engine::{decode_regular, decode_speculative, GenerationRequest, GenerationResult};
use bass_core::model::{init_model, LogitsProvider, ModelConfig, ModelWeights, SyntheticAlignedDraft, TransformerLm};
use bass_core::perf::{
    cost_regular_step, cost_speculative_step, expected_tokens_naive_batch, simulate_run, AcceptanceModel,
    HardwareProfile, ModelGeometry, SimSetup, SimSource,
};
use bass_core::quant::{
    int_gemm_dequant, quantize_activations_per_token, quantize_kqv_per_head, quantize_weights_per_channel, QuantTensor,
};
use bass_core::sampling::{
    acceptance_probability, argmax_logits, residual, speculative_accept, AcceptDecision, TokenDistribution,
};
use bass_core::tensor::Matrix;
use bass_core::TokenId;
use bass_validation::{run_criterion as run, Check};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> ExitCode {
    // libtest flags (e.g. --nocapture) are accepted and ignored.
    let secs = Duration::from_secs;
    let results = [
        run(
            1,
            "distribution preservation",
            Some(secs(10)),
            distribution_preservation,
        ),
        run(2, "greedy equivalence", Some(secs(60)), greedy_equivalence),
        run(3, "batch invariance", None, batch_invariance),
        run(4, "PAD and SPLIT agree", None, pad_split),
        run(5, "draft-length controller trace", None, controller_trace),
        run(6, "acceptance math", None, acceptance_math),
        run(7, "cost model", Some(secs(5)), cost_model),
        run(8, "main-model efficiency", None, main_efficiency),
        run(9, "quantization", None, quantization),
        run(10, "ablation harness", None, ablation),
    ];
    let failed = results.iter().filter(|&&p| !p).count();
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

fn random_dist(rng: &mut ChaCha8Rng, vocab: usize) -> Result<TokenDistribution> {
    // About a quarter of entries are zeroed so support mismatches are exercised.
    let mut w: Vec<f64> = (0..vocab)
        .map(|_| {
            if rng.random_bool(0.25) {
                0.0
            } else {
                rng.random::<f64>().powi(2)
            }
        })
        .collect();
    if w.iter().all(|&x| x == 0.0) {
        w[rng.random_range(0..vocab)] = 1.0;
    }
    Ok(TokenDistribution::from_weights(w)?)
}

fn distribution_preservation() -> Check {
    const VOCAB: usize = 16;
    const DRAWS: usize = 200_000;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut worst_exact, mut worst_tv) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let q = random_dist(&mut rng, VOCAB)?;
        let p = random_dist(&mut rng, VOCAB)?;

        // Enumerate draft token y ~ p, then accept or take the residual.
        let r = residual(&q, &p)?;
        let mut law = [0.0f64; VOCAB];
        for y in 0..VOCAB as TokenId {
            let py = p.prob(y);
            if py == 0.0 {
                continue;
            }
            let a = acceptance_probability(&q, &p, y);
            law[y as usize] += py * a;
            if a < 1.0 {
                let r = r.as_ref().expect("rejection possible, so q > p somewhere");
                for (x, l) in law.iter_mut().enumerate() {
                    *l += py * (1.0 - a) * r.prob(x as TokenId);
                }
            }
        }
        let exact = law
            .iter()
            .enumerate()
            .map(|(x, l)| (l - q.prob(x as TokenId)).abs())
            .fold(0.0, f64::max);
        worst_exact = worst_exact.max(exact);

        let mut counts = [0usize; VOCAB];
        for _ in 0..DRAWS {
            let y = p.sample_with(rng.random());
            let x = match speculative_accept(&q, &p, y, rng.random(), rng.random())? {
                AcceptDecision::Accepted => y,
                AcceptDecision::Rejected { corrected } => corrected,
            };
            counts[x as usize] += 1;
        }
        let tv = 0.5
            * counts
                .iter()
                .enumerate()
                .map(|(x, &c)| (c as f64 / DRAWS as f64 - q.prob(x as TokenId)).abs())
                .sum::<f64>();
        worst_tv = worst_tv.max(tv);
    }
    Ok((
        worst_exact <= 1e-9 && worst_tv <= 0.01,
        format!("20 pairs, max |law - q| = {worst_exact:.2e} (tol 1e-9), max MC TV = {worst_tv:.4} (tol 0.01)"),
    ))
}

fn desk_main() -> Result<Arc<ModelWeights>> {
    Ok(Arc::new(init_model(ModelConfig::desk_main(), 0)?))
}

fn random_prompts(rng: &mut ChaCha8Rng, b: usize, vocab: usize) -> Vec<Vec<TokenId>> {
    (0..b)
        .map(|_| {
            let len = rng.random_range(4..=16);
            (0..len).map(|_| rng.random_range(0..vocab as TokenId)).collect()
        })
        .collect()
}

/// Draft sources used by the equivalence checks.
#[derive(Clone, Copy, Debug)]
enum DraftKind {
    Model,
    Synthetic(f64),
}

fn speculate(
    main: &Arc<ModelWeights>,
    draft_weights: &Arc<ModelWeights>,
    kind: DraftKind,
    req: &GenerationRequest,
) -> Result<GenerationResult> {
    let mut policy = DraftPolicy::adaptive(DraftLengthParams::default())?;
    let mut m = TransformerLm::new(main.clone());
    Ok(match kind {
        DraftKind::Model => {
            decode_speculative(&mut m, &mut TransformerLm::new(draft_weights.clone()), req, &mut policy)?
        }
        DraftKind::Synthetic(a) => {
            let mut d = SyntheticAlignedDraft::new(TransformerLm::new(main.clone()), a, 17)?;
            decode_speculative(&mut m, &mut d, req, &mut policy)?
        }
    })
}

fn greedy_equivalence() -> Check {
    let main = desk_main()?;
    let draft = Arc::new(init_model(ModelConfig::desk_draft(), 1)?);
    let kinds = [
        DraftKind::Model,
        DraftKind::Synthetic(0.0),
        DraftKind::Synthetic(0.6),
        DraftKind::Synthetic(1.0),
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut runs = 0;
    let mut mismatches = Vec::new();
    for b in [1, 2, 4, 8] {
        let req = GenerationRequest::new(random_prompts(&mut rng, b, 512), 128);
        let regular = decode_regular(&mut TransformerLm::new(main.clone()), &req)?.tokens();
        for kind in kinds {
            runs += 1;
            if speculate(&main, &draft, kind, &req)?.tokens() != regular {
                mismatches.push(format!("b={b} {kind:?}"));
            }
        }
    }
    Ok((
        mismatches.is_empty(),
        format!("{runs} runs of 128 tokens, drafts {kinds:?}, mismatches {mismatches:?}"),
    ))
}

fn batch_invariance() -> Check {
    let main = desk_main()?;
    let draft = Arc::new(init_model(ModelConfig::desk_draft(), 1)?);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let prompts = random_prompts(&mut rng, 8, 512);
    let sampled = |prompts: Vec<Vec<TokenId>>, ids: Vec<u64>, top_p: f64| {
        let mut req = GenerationRequest::new(prompts, 48);
        req.temperature = 1.0;
        req.top_p = top_p;
        req.seed = 99;
        req.stream_ids = Some(ids);
        req
    };
    let subset = [1usize, 4, 6];
    let mut compared = 0;
    let mut mismatches = Vec::new();
    for (kind, top_p) in [(DraftKind::Synthetic(0.8), 1.0), (DraftKind::Model, 0.9)] {
        let full = speculate(&main, &draft, kind, &sampled(prompts.clone(), (0..8).collect(), top_p))?.tokens();
        let part = speculate(
            &main,
            &draft,
            kind,
            &sampled(
                subset.iter().map(|&i| prompts[i].clone()).collect(),
                subset.iter().map(|&i| i as u64).collect(),
                top_p,
            ),
        )?
        .tokens();
        for (j, &i) in subset.iter().enumerate() {
            compared += 1;
            if part[j] != full[i] {
                mismatches.push(format!("{kind:?} seq {i} in b=3"));
            }
        }
        for (i, p) in prompts.iter().enumerate() {
            let alone = speculate(&main, &draft, kind, &sampled(vec![p.clone()], vec![i as u64], top_p))?.tokens();
            compared += 1;
            if alone[0] != full[i] {
                mismatches.push(format!("{kind:?} seq {i} in b=8"));
            }
        }
    }
    Ok((
        mismatches.is_empty(),
        format!("{compared} sequence comparisons (b=1 vs b=3, b=8), mismatches {mismatches:?}"),
    ))
}

fn pad_split() -> Check {
    let cfg = ModelConfig {
        n_layer: 2,
        n_head: 4,
        d_model: 64,
        vocab_size: 512,
        max_seq_len: 64,
    };
    let w = Arc::new(init_model(cfg, 4)?);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f32;
    for _ in 0..100 {
        let b = rng.random_range(1..=8);
        let mut pad = TransformerLm::new(w.clone());
        let mut split = TransformerLm::new(w.clone());
        pad.reset(b);
        split.reset(b);
        // Each sequence has total length 1..=64, part of it already cached.
        let mut prefixes = Vec::new();
        let mut blocks = Vec::new();
        for _ in 0..b {
            let len = rng.random_range(1..=64usize);
            let cached = rng.random_range(0..len);
            let tokens: Vec<TokenId> = (0..len).map(|_| rng.random_range(0..512)).collect();
            prefixes.push(tokens[..cached].to_vec());
            blocks.push(tokens[cached..].to_vec());
        }
        let warm: Vec<usize> = (0..b).filter(|&i| !prefixes[i].is_empty()).collect();
        if !warm.is_empty() {
            let pre: Vec<Vec<TokenId>> = warm.iter().map(|&i| prefixes[i].clone()).collect();
            let a = pad.forward(&warm, &pre, AttentionStrategy::Pad)?;
            let s = split.forward(&warm, &pre, AttentionStrategy::Split)?;
            worst = a.iter().zip(&s).map(|(x, y)| x.max_abs_diff(y)).fold(worst, f32::max);
        }
        let seqs: Vec<usize> = (0..b).collect();
        let a = pad.forward(&seqs, &blocks, AttentionStrategy::Pad)?;
        let s = split.forward(&seqs, &blocks, AttentionStrategy::Split)?;
        worst = a.iter().zip(&s).map(|(x, y)| x.max_abs_diff(y)).fold(worst, f32::max);
    }
    Ok((
        worst <= 1e-5,
        format!("100 ragged batches, max abs logit diff {worst:.2e} (tol 1e-5)"),
    ))
}

fn controller_trace() -> Check {
    let s0 = DraftLengthState::new(DraftLengthParams::default())?;
    ensure!((s0.l_draft, s0.s) == (7, 0), "initial state");
    let s1 = s0.update(&[7, 3])?;
    let s2 = s1.update(&[3, 1])?;
    let s3 = s2.update(&[2, 2])?;
    let trace = [(s1.l_draft, s1.s), (s2.l_draft, s2.s), (s3.l_draft, s3.s)];
    // Nine accepted tokens cannot come from a six-token draft.
    let fourth = s3.update(&[9, 0]);
    let mut ok = trace == [(9, 0), (8, 1), (6, 1)] && fourth.is_err();

    // Golden cases: a decrease never undercuts the longest accepted run.
    let floor = DraftLengthState {
        l_draft: 1,
        s: 1,
        params: DraftLengthParams::default(),
    }
    .update(&[0])?;
    ok &= (floor.l_draft, floor.s) == (1, 1);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut cases = 0;
    for _ in 0..20_000 {
        let params = DraftLengthParams {
            l0: 1,
            incre: rng.random_range(1..=4),
            modulus: rng.random_range(1..=12),
            limit: rng.random_range(1..=40),
        };
        let state = DraftLengthState {
            l_draft: rng.random_range(1..=params.limit),
            s: rng.random_range(0..=1),
            params,
        };
        let b = rng.random_range(1..=8);
        let accepted: Vec<usize> = (0..b).map(|_| rng.random_range(0..=state.l_draft)).collect();
        let next = state.update(&accepted)?;
        let max_x = *accepted.iter().max().expect("non-empty");
        cases += 1;
        ok &= next.l_draft >= max_x && next.l_draft >= 1 && next.l_draft <= params.limit;
        if max_x < state.l_draft {
            ok &= next.l_draft <= state.l_draft && next.s == 1;
        }
    }
    Ok((
        ok,
        format!(
            "l: 7 -> {} -> {} -> {} -> rejected ({}); clamp held on {cases} random transitions",
            s1.l_draft,
            s2.l_draft,
            s3.l_draft,
            fourth.err().map(|e| e.to_string()).unwrap_or_else(|| "accepted".into())
        ),
    ))
}

fn acceptance_math() -> Check {
    let one = expected_tokens_naive_batch(0.8, 1)?;
    let five = expected_tokens_naive_batch(0.8, 5)?;
    // 0.8 has no exact binary form; 5.0 is met up to rounding of the input.
    let ulps = (one - 5.0).abs() / f64::EPSILON / 4.0;
    let mut ok = ulps <= 4.0 && (five - 1.488).abs() <= 1e-3;

    const P: f64 = 0.8;
    const K: usize = 7;
    let oracle = (1.0 - P.powi(K as i32 + 1)) / (1.0 - P);
    let cfg = ModelConfig {
        n_layer: 1,
        n_head: 1,
        d_model: 8,
        vocab_size: 512,
        max_seq_len: 512,
    };
    let w = Arc::new(init_model(cfg, 6)?);
    let (mut positions, mut steps, mut tokens) = (0usize, 0usize, 0usize);
    let mut run_seed = 0;
    while positions < 400_000 {
        let prompts: Vec<Vec<TokenId>> = (0..16)
            .map(|i| vec![(i * 31 + run_seed * 7) as TokenId % 512])
            .collect();
        let mut req = GenerationRequest::new(prompts, 480);
        req.temperature = 1.0;
        req.seed = run_seed as u64;
        let mut draft = SyntheticAlignedDraft::new(TransformerLm::new(w.clone()), P, run_seed as u64)?;
        let mut policy = DraftPolicy::fixed(K)?;
        let out = decode_speculative(&mut TransformerLm::new(w.clone()), &mut draft, &req, &mut policy)?;
        for step in out.trace.iter().filter(|s| !s.was_clamped()) {
            for x in step.active_accepts() {
                positions += K;
                steps += 1;
                tokens += x + 1;
            }
        }
        run_seed += 1;
    }
    let mean = tokens as f64 / steps as f64;
    let rel = (mean - oracle).abs() / oracle;
    ok &= rel <= 0.01;
    Ok((
        ok,
        format!(
            "naive(0.8,1)={one:.15} ({ulps:.0} ulp), naive(0.8,5)={five:.4}; engine {mean:.4} tokens/step vs {oracle:.4} \
             (rel {rel:.4}, tol 0.01) over {positions} drafted positions"
        ),
    ))
}

fn cost_model() -> Check {
    let profile = HardwareProfile::default();
    let (main, draft) = (ModelGeometry::main_7_8b(), ModelGeometry::draft_310m());
    let ctx = |b: usize| vec![128usize; b];
    let mut ok = true;
    let mut detail = Vec::new();
    for strategy in [AttentionStrategy::Pad, AttentionStrategy::Split] {
        let rd = |b| cost_regular_step(&profile, &main, &ctx(b), strategy).utilization;
        let best_rd = [1, 2, 4, 8].into_iter().map(rd).fold(0.0, f64::max);
        let bass = cost_speculative_step(&profile, &main, Some(&draft), &ctx(8), 7, strategy).utilization;
        ok &= rd(1) < 0.01 && bass >= 3.0 * best_rd;
        detail.push(format!(
            "{}: RD b=1 {:.2}%, BASS b=8 {:.2}% = {:.1}x best RD {:.2}%",
            strategy.as_str(),
            100.0 * rd(1),
            100.0 * bass,
            bass / best_rd,
            100.0 * best_rd
        ));
    }
    let setup = SimSetup::default();
    let mut div = Vec::new();
    for b in [2, 4, 8] {
        let report = simulate_run(
            &setup,
            SimSource::Analytic {
                model: AcceptanceModel { p: 0.8, b, k: 7 },
                adaptive: Some(DraftLengthParams::default()),
                trials: 64,
                seed: 7,
            },
        )?;
        div.push(report.latency.divergence_s());
    }
    ok &= div.windows(2).all(|w| w[1] > w[0]);
    detail.push(format!(
        "last-first divergence b=2,4,8: {:.2}ms, {:.2}ms, {:.2}ms",
        div[0] * 1e3,
        div[1] * 1e3,
        div[2] * 1e3
    ));
    Ok((ok, detail.join("; ")))
}

fn main_efficiency() -> Check {
    let main = desk_main()?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut ok = true;
    let mut detail = Vec::new();
    for b in [1, 4] {
        let mut req = GenerationRequest::new(random_prompts(&mut rng, b, 512), 128);
        req.temperature = 1.0;
        req.seed = 8;
        let out = speculate(&main, &main, DraftKind::Synthetic(0.8), &req)?;
        let per_seq_tokens = out.total_tokens() as f64 / b as f64;
        let ratio = out.main_invocations as f64 / per_seq_tokens;
        if b == 1 {
            ok &= ratio <= 0.5;
        }
        detail.push(format!(
            "b={b}: {} main calls for {per_seq_tokens:.0} tokens/seq = {ratio:.3}{}",
            out.main_invocations,
            if b == 1 { " (tol 0.5)" } else { " (info)" }
        ));
    }
    Ok((ok, detail.join("; ")))
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    let scale = 10f32.powf(rng.random_range(-3.0..2.0));
    let data = (0..rows * cols)
        .map(|_| {
            // Occasional outliers stretch the group scale.
            let v = rng.random_range(-1.0f32..1.0) * scale;
            if rng.random_bool(0.02) {
                v * 20.0
            } else {
                v
            }
        })
        .collect();
    Matrix::from_vec(rows, cols, data)
}

fn roundtrip_excess(x: &Matrix, q: &QuantTensor) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for r in 0..x.rows {
        for c in 0..x.cols {
            let s = q.scale_at(r, c);
            let err = (x.row(r)[c] as f64 - q.payload[r * x.cols + c] as f64 * s).abs();
            worst = worst.max(err / (s / 2.0));
        }
    }
    worst
}

fn quantization() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst_rel = 0.0f64;
    let mut worst_roundtrip = 0.0f64;
    for _ in 0..50 {
        let (t, inner, out) = (
            rng.random_range(1..=16),
            rng.random_range(1..=96),
            rng.random_range(1..=48),
        );
        let a = random_matrix(&mut rng, t, inner);
        let w = random_matrix(&mut rng, inner, out);
        let aq = quantize_activations_per_token(&a)?;
        let wq = quantize_weights_per_channel(&w)?;
        let fused = int_gemm_dequant(&aq, &wq, None, None)?;
        let (ad, wd) = (aq.dequantize(), wq.dequantize());
        let mut reference = vec![0.0f64; t * out];
        for r in 0..t {
            for i in 0..inner {
                let av = ad.row(r)[i] as f64;
                for c in 0..out {
                    reference[r * out + c] += av * wd.row(i)[c] as f64;
                }
            }
        }
        let peak = reference.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let diff = fused
            .data
            .iter()
            .zip(&reference)
            .fold(0.0f64, |m, (&f, &r)| m.max((f as f64 - r).abs()));
        if peak > 0.0 {
            worst_rel = worst_rel.max(diff / peak);
        }
        let n_head = [1, 2, 4][rng.random_range(0..3)];
        let kqv = random_matrix(&mut rng, t, 8 * n_head);
        worst_roundtrip = worst_roundtrip
            .max(roundtrip_excess(&a, &aq))
            .max(roundtrip_excess(&w, &wq))
            .max(roundtrip_excess(&kqv, &quantize_kqv_per_head(&kqv, n_head)?));
    }
    // Ratio of error to scale/2; 1 + 1e-12 absorbs f64 evaluation of the bound.
    let roundtrip_ok = worst_roundtrip <= 1.0 + 1e-12;

    let weights = desk_main()?;
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let prompts = random_prompts(&mut rng, 8, 512);
    let req = GenerationRequest::new(prompts.clone(), 128);
    let fp = decode_regular(&mut TransformerLm::new(weights.clone()), &req)?;
    let free = decode_regular(&mut TransformerLm::quantized(weights.clone())?, &req)?;
    let prefix: usize = fp
        .sequences
        .iter()
        .zip(&free.sequences)
        .map(|(a, b)| a.tokens.iter().zip(&b.tokens).take_while(|(x, y)| x == y).count())
        .sum();
    // Teacher-forced: the quantized model predicts each position of the FP run.
    let mut quant = TransformerLm::quantized(weights)?;
    quant.reset(prompts.len());
    let blocks: Vec<Vec<TokenId>> = prompts
        .iter()
        .zip(&fp.sequences)
        .map(|(p, s)| p.iter().chain(&s.tokens[..s.tokens.len() - 1]).copied().collect())
        .collect();
    let seqs: Vec<usize> = (0..prompts.len()).collect();
    let logits = quant.forward(&seqs, &blocks, AttentionStrategy::Split)?;
    let (mut matched, mut total) = (0usize, 0usize);
    for (i, s) in fp.sequences.iter().enumerate() {
        let offset = prompts[i].len() - 1;
        for (j, &tok) in s.tokens.iter().enumerate() {
            total += 1;
            matched += (argmax_logits(logits[i].row(offset + j)) == tok) as usize;
        }
    }
    let rate = matched as f64 / total as f64;
    Ok((
        worst_rel <= 1e-6 && roundtrip_ok && rate >= 0.99,
        format!(
            "factorization max rel {worst_rel:.2e} (tol 1e-6); roundtrip max err {worst_roundtrip:.4} x scale/2; \
             greedy match {matched}/{total} = {:.1}% (tol 99%), free-running common prefix {prefix}/{total}",
            100.0 * rate
        ),
    ))
}

fn ablation() -> Check {
    let mut cfg = RunConfig::default();
    cfg.batch_size = 4;
    cfg.draft.alignment = Some(0.8);
    cfg.generation.temperature = 1.0;
    cfg.generation.max_new_tokens = 48;
    let rows = run_ablation(&cfg)?;
    let expected = 2 * (ABLATION_FIXED_LENGTHS.len() + 1);
    let mut ok = rows.len() == expected;
    for r in &rows {
        ok &= r.tokens == 4 * 48
            && r.steps > 0
            && r.main_invocations == r.steps
            && (0.0..=1.0).contains(&r.acceptance_rate)
            && [r.tokens_per_step, r.all_wall_s, r.all_sim_s, r.speedup_sim_all]
                .iter()
                .all(|v| v.is_finite() && *v > 0.0);
    }
    for strategy in ["pad", "split"] {
        for r in rows.iter().filter(|r| r.strategy == strategy) {
            println!(
                "    {:<6} {:<9} steps {:>3}  accept {:.3}  tokens/step {:>5.2}  sim speedup {:.2}x",
                r.strategy, r.variant, r.steps, r.acceptance_rate, r.tokens_per_step, r.speedup_sim_all
            );
        }
    }
    Ok((
        ok,
        format!(
            "{} rows (fixed {ABLATION_FIXED_LENGTHS:?} + adaptive, pad and split)",
            rows.len()
        ),
    ))
}
