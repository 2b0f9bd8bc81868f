//! Report records. Every record is one JSON object per line carrying
//! `schema` and `record` tags; wall-clock fields are suffixed `_wall_s` and
//! simulated ones `_sim_s`.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Result;
use bass_core::engine::{DecodeMode, GenerationResult};
use bass_core::perf::{LatencyStats, SimulationReport};
use serde::{Deserialize, Serialize};

pub const REPORT_SCHEMA: &str = "bass-report/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceRecord {
    pub schema: String,
    pub record: String,
    pub mode: DecodeMode,
    pub seq: usize,
    pub prompt_len: usize,
    pub tokens: Vec<u32>,
    pub mean_logprob: f64,
    pub completion_step: usize,
    pub hit_eos: bool,
    pub finish_wall_s: f64,
    pub finish_sim_s: f64,
    pub per_token_wall_s: f64,
    pub per_token_sim_s: f64,
}

impl SequenceRecord {
    pub fn from_result(
        result: &GenerationResult,
        sim: &SimulationReport,
        prompt_lens: &[usize],
    ) -> Vec<SequenceRecord> {
        result
            .sequences
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let n = s.tokens.len().max(1) as f64;
                SequenceRecord {
                    schema: REPORT_SCHEMA.into(),
                    record: "sequence".into(),
                    mode: result.mode,
                    seq: i,
                    prompt_len: prompt_lens[i],
                    tokens: s.tokens.clone(),
                    mean_logprob: s.mean_logprob(),
                    completion_step: s.completion_step,
                    hit_eos: s.hit_eos,
                    finish_wall_s: s.finish_time_s,
                    finish_sim_s: sim.finish_times_s[i],
                    per_token_wall_s: s.finish_time_s / n,
                    per_token_sim_s: sim.finish_times_s[i] / n,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub mode: DecodeMode,
    pub tokens: usize,
    pub steps: usize,
    pub main_invocations: usize,
    pub draft_invocations: usize,
    pub latency_wall_s: LatencyStats,
    pub latency_sim_s: LatencyStats,
    pub total_wall_s: f64,
    pub total_sim_s: f64,
    pub sim_utilization: f64,
}

impl ModeSummary {
    pub fn new(result: &GenerationResult, sim: &SimulationReport) -> Self {
        let finishes: Vec<(f64, usize)> = result
            .sequences
            .iter()
            .map(|s| (s.finish_time_s, s.tokens.len()))
            .collect();
        Self {
            mode: result.mode,
            tokens: result.total_tokens(),
            steps: result.trace.len(),
            main_invocations: result.main_invocations,
            draft_invocations: result.draft_invocations,
            latency_wall_s: LatencyStats::from_finishes(&finishes),
            latency_sim_s: sim.latency,
            total_wall_s: result.wall_time_s,
            total_sim_s: sim.total_time_s,
            sim_utilization: sim.utilization,
        }
    }
}

/// Baseline per-token latency over speculative per-token latency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Speedup {
    pub first: f64,
    pub last: f64,
    pub all: f64,
}

impl Speedup {
    pub fn new(baseline: &LatencyStats, candidate: &LatencyStats) -> Self {
        let ratio = |a: f64, b: f64| if b > 0.0 { a / b } else { 0.0 };
        Self {
            first: ratio(baseline.first_s, candidate.first_s),
            last: ratio(baseline.last_s, candidate.last_s),
            all: ratio(baseline.all_s, candidate.all_s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub schema: String,
    pub record: String,
    pub seed: u64,
    pub batch_size: usize,
    pub strategy: String,
    pub draft_policy: String,
    pub draft_source: String,
    pub quantized: bool,
    pub temperature: f64,
    pub max_new_tokens: usize,
    pub regular: ModeSummary,
    pub speculative: ModeSummary,
    pub speedup_wall: Speedup,
    pub speedup_sim: Speedup,
    pub acceptance_rate: Option<f64>,
    pub tokens_per_main_invocation: f64,
    pub main_invocations_per_token: f64,
    /// Speculative tokens equal regular tokens for every sequence.
    pub exact_match: bool,
}

impl LatencyReport {
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "batch {} | strategy {} | draft {} ({}) | T={} | quant {}",
            self.batch_size, self.strategy, self.draft_policy, self.draft_source, self.temperature, self.quantized
        );
        let _ = writeln!(
            s,
            "{:<12} {:>7} {:>6} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12}",
            "mode", "tokens", "steps", "first_wall", "last_wall", "all_wall", "first_sim", "last_sim", "all_sim"
        );
        for m in [&self.regular, &self.speculative] {
            let _ = writeln!(
                s,
                "{:<12} {:>7} {:>6} {:>12.3e} {:>12.3e} {:>12.3e} {:>12.3e} {:>12.3e} {:>12.3e}",
                format!("{:?}", m.mode).to_lowercase(),
                m.tokens,
                m.steps,
                m.latency_wall_s.first_s,
                m.latency_wall_s.last_s,
                m.latency_wall_s.all_s,
                m.latency_sim_s.first_s,
                m.latency_sim_s.last_s,
                m.latency_sim_s.all_s,
            );
        }
        let _ = writeln!(
            s,
            "speedup wall first/last/all {:.2}/{:.2}/{:.2} | simulated {:.2}/{:.2}/{:.2}",
            self.speedup_wall.first,
            self.speedup_wall.last,
            self.speedup_wall.all,
            self.speedup_sim.first,
            self.speedup_sim.last,
            self.speedup_sim.all
        );
        let _ = writeln!(
            s,
            "acceptance {} | tokens/main call {:.2} | exact match {}",
            self.acceptance_rate
                .map(|a| format!("{a:.3}"))
                .unwrap_or_else(|| "n/a".into()),
            self.tokens_per_main_invocation,
            self.exact_match
        );
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QualityReport {
    pub schema: String,
    pub record: String,
    pub batch_size: usize,
    pub time_budget_sim_s: f64,
    pub tasks: usize,
    pub pass_at_first: f64,
    pub pass_at_finished: f64,
    /// Fraction of generated sequences that finished within the budget.
    pub finished_fraction: f64,
}

impl QualityReport {
    pub fn table(&self) -> String {
        format!(
            "batch {} | budget {:.3}s simulated | tasks {} | Pass@First {:.3} | Pass@Finished {:.3} | finished {:.3}\n",
            self.batch_size,
            self.time_budget_sim_s,
            self.tasks,
            self.pass_at_first,
            self.pass_at_finished,
            self.finished_fraction
        )
    }
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Serializes a record set as JSON lines into a string.
pub fn to_jsonl<T: Serialize>(records: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}
