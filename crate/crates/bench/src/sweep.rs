//! Cost-model sweep across batch sizes and decoding modes.

use anyhow::{bail, Result};
use bass_core::attention::AttentionStrategy;
use bass_core::perf::{cost_regular_step, cost_speculative_step, expected_tokens_per_seq};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSpec {
    pub batch_sizes: Vec<usize>,
    pub draft_lens: Vec<usize>,
    /// Per-position acceptance used for tokens per step.
    pub acceptance: f64,
    pub context_len: usize,
    /// Sequence `i` holds `context_len + i * context_spread` positions.
    pub context_spread: usize,
    pub strategies: Vec<AttentionStrategy>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            batch_sizes: vec![1, 2, 4, 8, 16, 32, 64],
            draft_lens: vec![7],
            acceptance: 0.8,
            context_len: 128,
            context_spread: 0,
            strategies: vec![AttentionStrategy::Pad, AttentionStrategy::Split],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepMode {
    /// Regular decoding.
    Rd,
    /// Single-sequence speculative decoding.
    Sd,
    /// Batched speculative decoding.
    Bass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostRow {
    pub mode: SweepMode,
    pub strategy: String,
    pub b: usize,
    pub k: usize,
    pub time_s: f64,
    pub flops: f64,
    pub bytes: f64,
    pub launches: usize,
    pub utilization: f64,
    pub tokens_per_seq_step: f64,
    pub time_per_token_s: f64,
}

pub fn run_cost_sweep(cfg: &RunConfig, spec: &SweepSpec) -> Result<Vec<CostRow>> {
    cfg.hardware.validate()?;
    if spec.batch_sizes.contains(&0) || spec.draft_lens.contains(&0) {
        bail!("batch sizes and draft lengths must be >= 1");
    }
    if !(0.0..=1.0).contains(&spec.acceptance) {
        bail!("acceptance must lie in [0, 1]");
    }
    let (profile, main, draft) = (&cfg.hardware, &cfg.sim.main, &cfg.sim.draft);
    let mut rows = Vec::new();
    for &strategy in &spec.strategies {
        for &b in &spec.batch_sizes {
            let ctx: Vec<usize> = (0..b).map(|i| spec.context_len + i * spec.context_spread).collect();
            let c = cost_regular_step(profile, main, &ctx, strategy);
            rows.push(row(SweepMode::Rd, strategy, b, 0, c, 1.0));
            for &k in &spec.draft_lens {
                let tokens = expected_tokens_per_seq(spec.acceptance, k)?;
                let c = cost_speculative_step(profile, main, Some(draft), &ctx, k, strategy);
                let mode = if b == 1 { SweepMode::Sd } else { SweepMode::Bass };
                rows.push(row(mode, strategy, b, k, c, tokens));
            }
        }
    }
    Ok(rows)
}

fn row(
    mode: SweepMode,
    strategy: AttentionStrategy,
    b: usize,
    k: usize,
    c: bass_core::perf::StepCost,
    tokens: f64,
) -> CostRow {
    CostRow {
        mode,
        strategy: strategy.as_str().into(),
        b,
        k,
        time_s: c.time_s,
        flops: c.flops,
        bytes: c.bytes,
        launches: c.launches,
        utilization: c.utilization,
        tokens_per_seq_step: tokens,
        time_per_token_s: c.time_s / tokens,
    }
}

pub fn write_cost_csv<W: std::io::Write>(rows: &[CostRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}
