use std::fs;
use std::path::Path;
use std::sync::Arc;

use anyhow::{Context, Result};
use bass_core::attention::AttentionStrategy;
use bass_core::draft::DraftPolicy;
use bass_core::engine::{decode_regular, decode_speculative, GenerationRequest, GenerationResult};
use bass_core::model::ModelWeights;
use bass_core::perf::{simulate_run, SimSource, SimulationReport};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::models::{build_draft, build_main, main_weights, prompts};
use crate::report::{write_jsonl, LatencyReport, ModeSummary, SequenceRecord, Speedup, REPORT_SCHEMA};

pub struct GenerateOutcome {
    pub report: LatencyReport,
    pub regular: GenerationResult,
    pub speculative: GenerationResult,
    pub records: Vec<SequenceRecord>,
}

pub fn request(cfg: &RunConfig) -> GenerationRequest {
    let g = &cfg.generation;
    GenerationRequest {
        prompts: prompts(cfg),
        max_new_tokens: g.max_new_tokens,
        temperature: g.temperature,
        top_p: g.top_p,
        eos_token: g.eos,
        strategy: cfg.strategy,
        seed: cfg.seed,
        stream_ids: None,
    }
}

pub fn simulate(cfg: &RunConfig, req: &GenerationRequest, result: &GenerationResult) -> Result<SimulationReport> {
    let lens: Vec<usize> = req.prompts.iter().map(Vec::len).collect();
    Ok(simulate_run(
        &cfg.sim_setup(),
        SimSource::Trace {
            result,
            prompt_lens: &lens,
        },
    )?)
}

fn speculative(
    cfg: &RunConfig,
    weights: &Arc<ModelWeights>,
    req: &GenerationRequest,
    policy: DraftPolicy,
) -> Result<GenerationResult> {
    let mut main = build_main(cfg, weights)?;
    let mut draft = build_draft(cfg, weights)?;
    let mut policy = policy;
    Ok(decode_speculative(&mut main, draft.provider(), req, &mut policy)?)
}

/// Regular baseline and speculative run on the same prompts, with reports
/// written to the output directory when one is configured.
pub fn run_generate(cfg: &RunConfig) -> Result<GenerateOutcome> {
    cfg.validate()?;
    let req = request(cfg);
    let weights = main_weights(cfg)?;
    let regular = decode_regular(&mut build_main(cfg, &weights)?, &req)?;
    let policy = cfg.draft.policy()?;
    let spec = speculative(cfg, &weights, &req, policy)?;

    let sim_regular = simulate(cfg, &req, &regular)?;
    let sim_spec = simulate(cfg, &req, &spec)?;
    let regular_summary = ModeSummary::new(&regular, &sim_regular);
    let spec_summary = ModeSummary::new(&spec, &sim_spec);
    let report = LatencyReport {
        schema: REPORT_SCHEMA.into(),
        record: "summary".into(),
        seed: cfg.seed,
        batch_size: cfg.batch_size,
        strategy: cfg.strategy.as_str().into(),
        draft_policy: policy.label(),
        draft_source: cfg.draft.source_label(),
        quantized: cfg.quant.enabled,
        temperature: cfg.generation.temperature,
        max_new_tokens: cfg.generation.max_new_tokens,
        speedup_wall: Speedup::new(&regular_summary.latency_wall_s, &spec_summary.latency_wall_s),
        speedup_sim: Speedup::new(&regular_summary.latency_sim_s, &spec_summary.latency_sim_s),
        regular: regular_summary,
        speculative: spec_summary,
        acceptance_rate: spec.acceptance_rate(),
        tokens_per_main_invocation: spec.total_tokens() as f64 / spec.main_invocations.max(1) as f64,
        main_invocations_per_token: spec.main_invocations_per_token(),
        exact_match: regular.tokens() == spec.tokens(),
    };
    let lens: Vec<usize> = req.prompts.iter().map(Vec::len).collect();
    let mut records = SequenceRecord::from_result(&regular, &sim_regular, &lens);
    records.extend(SequenceRecord::from_result(&spec, &sim_spec, &lens));

    if let Some(dir) = &cfg.output.dir {
        write_generate_outputs(dir, &report, &records)?;
    }
    Ok(GenerateOutcome {
        report,
        regular,
        speculative: spec,
        records,
    })
}

pub fn write_generate_outputs(dir: &Path, report: &LatencyReport, records: &[SequenceRecord]) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_jsonl(&dir.join("sequences.jsonl"), records)?;
    write_jsonl(&dir.join("summary.jsonl"), std::slice::from_ref(report))?;
    fs::write(dir.join("summary.txt"), report.table())?;
    Ok(())
}

/// One row of the draft-length and attention-strategy ablation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub strategy: String,
    pub tokens: usize,
    pub steps: usize,
    pub main_invocations: usize,
    pub acceptance_rate: f64,
    pub tokens_per_step: f64,
    pub all_wall_s: f64,
    pub all_sim_s: f64,
    pub speedup_sim_all: f64,
}

pub const ABLATION_FIXED_LENGTHS: [usize; 3] = [4, 6, 8];

/// Fixed draft lengths and the adaptive controller, each under PAD and
/// SPLIT, against one regular baseline per strategy.
pub fn run_ablation(cfg: &RunConfig) -> Result<Vec<AblationRow>> {
    cfg.validate()?;
    let mut variants: Vec<DraftPolicy> = ABLATION_FIXED_LENGTHS
        .iter()
        .map(|&k| DraftPolicy::fixed(k))
        .collect::<Result<_, _>>()?;
    variants.push(DraftPolicy::adaptive(cfg.draft.length_params())?);
    let mut rows = Vec::new();
    for strategy in [AttentionStrategy::Pad, AttentionStrategy::Split] {
        let cfg = RunConfig {
            strategy,
            ..cfg.clone()
        };
        let req = request(&cfg);
        let weights = main_weights(&cfg)?;
        let regular = decode_regular(&mut build_main(&cfg, &weights)?, &req)?;
        let baseline = simulate(&cfg, &req, &regular)?.latency;
        for policy in &variants {
            let out = speculative(&cfg, &weights, &req, *policy)?;
            let sim = simulate(&cfg, &req, &out)?;
            let summary = ModeSummary::new(&out, &sim);
            rows.push(AblationRow {
                variant: policy.label(),
                strategy: strategy.as_str().into(),
                tokens: out.total_tokens(),
                steps: out.trace.len(),
                main_invocations: out.main_invocations,
                acceptance_rate: out.acceptance_rate().unwrap_or(0.0),
                tokens_per_step: out.total_tokens() as f64 / out.trace.len().max(1) as f64,
                all_wall_s: summary.latency_wall_s.all_s,
                all_sim_s: summary.latency_sim_s.all_s,
                speedup_sim_all: Speedup::new(&baseline, &summary.latency_sim_s).all,
            });
        }
    }
    Ok(rows)
}

pub fn write_ablation_csv<W: std::io::Write>(rows: &[AblationRow], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r)?;
    }
    out.flush()?;
    Ok(())
}
