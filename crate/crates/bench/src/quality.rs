//! Pass@First and Pass@Finished under a simulated-clock time budget.
//!
//! A task is a prompt plus the completions that count as correct; a
//! generation is correct when it starts with one of them. Each task is
//! decoded by `batch_size` sampled sequences, sequences whose simulated
//! finish time exceeds the budget are dropped, and the survivor with the
//! highest mean log-probability is the one displayed first.

use std::path::Path;

use anyhow::{bail, Context, Result};
use bass_core::attention::AttentionStrategy;
use bass_core::engine::{decode_speculative, GenerationRequest};
use bass_core::model::{LogitsProvider, ModelWeights, TransformerLm};
use bass_core::sampling::to_distribution;
use bass_core::TokenId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::generate::simulate;
use crate::models::{build_draft, build_main, main_weights};
use crate::report::{QualityReport, REPORT_SCHEMA};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub prompt: Vec<TokenId>,
    pub accepted: Vec<Vec<TokenId>>,
}

impl Task {
    pub fn is_correct(&self, tokens: &[TokenId]) -> bool {
        self.accepted.iter().any(|a| tokens.starts_with(a))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskFile {
    pub tasks: Vec<Task>,
}

impl TaskFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading task file {}", path.display()))?;
        let file: TaskFile =
            serde_json::from_str(&text).with_context(|| format!("parsing task file {}", path.display()))?;
        file.validate()?;
        Ok(file)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            bail!("task file has no tasks");
        }
        for (i, t) in self.tasks.iter().enumerate() {
            if t.prompt.is_empty() {
                bail!("task {i} has an empty prompt");
            }
            if t.accepted.is_empty() || t.accepted.iter().any(Vec::is_empty) {
                bail!("task {i} is missing its correctness oracle");
            }
        }
        Ok(())
    }
}

/// Mass of main-model next-token probability that the accepted set covers.
pub const TOY_ACCEPTED_MASS: f64 = 0.5;

/// Random prompts whose accepted completions are the most likely first tokens
/// under the main model at `temperature`, up to half the probability mass.
pub fn toy_task_suite(
    weights: &std::sync::Arc<ModelWeights>,
    n_tasks: usize,
    prompt_len: usize,
    temperature: f64,
    seed: u64,
) -> Result<TaskFile> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = weights.config.vocab_size as TokenId;
    let mut lm = TransformerLm::new(weights.clone());
    let mut tasks = Vec::with_capacity(n_tasks);
    for _ in 0..n_tasks {
        let prompt: Vec<TokenId> = (0..prompt_len.max(1)).map(|_| rng.random_range(0..vocab)).collect();
        lm.reset(1);
        let logits = lm.forward(&[0], std::slice::from_ref(&prompt), AttentionStrategy::Pad)?;
        let row = logits[0].row(prompt.len() - 1);
        let dist = to_distribution(row, temperature.max(1e-3), 1.0)?;
        let mut order: Vec<TokenId> = (0..vocab).collect();
        order.sort_by(|&a, &b| dist.prob(b).total_cmp(&dist.prob(a)).then(a.cmp(&b)));
        let mut mass = 0.0;
        let mut accepted = Vec::new();
        for t in order {
            accepted.push(vec![t]);
            mass += dist.prob(t);
            if mass >= TOY_ACCEPTED_MASS {
                break;
            }
        }
        tasks.push(Task { prompt, accepted });
    }
    Ok(TaskFile { tasks })
}

/// Per-task outcome, kept for inspection and tests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskOutcome {
    pub finished: usize,
    pub first_correct: bool,
    pub any_correct: bool,
}

pub fn run_quality(cfg: &RunConfig, tasks: &TaskFile) -> Result<(QualityReport, Vec<TaskOutcome>)> {
    cfg.validate()?;
    tasks.validate()?;
    let weights = main_weights(cfg)?;
    let budget = cfg.time_budget();
    let b = cfg.batch_size;
    let mut outcomes = Vec::with_capacity(tasks.tasks.len());
    for (i, task) in tasks.tasks.iter().enumerate() {
        let g = &cfg.generation;
        let req = GenerationRequest {
            prompts: vec![task.prompt.clone(); b],
            max_new_tokens: g.max_new_tokens,
            temperature: g.temperature,
            top_p: g.top_p,
            eos_token: g.eos,
            strategy: cfg.strategy,
            seed: cfg.seed.wrapping_add(i as u64),
            stream_ids: None,
        };
        let mut main = build_main(cfg, &weights)?;
        let mut draft = build_draft(cfg, &weights)?;
        let mut policy = cfg.draft.policy()?;
        let out = decode_speculative(&mut main, draft.provider(), &req, &mut policy)?;
        let sim = simulate(cfg, &req, &out)?;
        let finished: Vec<usize> = (0..b).filter(|&s| sim.finish_times_s[s] <= budget).collect();
        let first = finished.iter().copied().reduce(|best, s| {
            if out.sequences[s].mean_logprob() > out.sequences[best].mean_logprob() {
                s
            } else {
                best
            }
        });
        outcomes.push(TaskOutcome {
            finished: finished.len(),
            first_correct: first.is_some_and(|s| task.is_correct(&out.sequences[s].tokens)),
            any_correct: finished.iter().any(|&s| task.is_correct(&out.sequences[s].tokens)),
        });
    }
    let n = outcomes.len() as f64;
    let report = QualityReport {
        schema: REPORT_SCHEMA.into(),
        record: "quality".into(),
        batch_size: b,
        time_budget_sim_s: budget,
        tasks: outcomes.len(),
        pass_at_first: outcomes.iter().filter(|o| o.first_correct).count() as f64 / n,
        pass_at_finished: outcomes.iter().filter(|o| o.any_correct).count() as f64 / n,
        finished_fraction: outcomes.iter().map(|o| o.finished).sum::<usize>() as f64 / (n * b as f64),
    };
    Ok((report, outcomes))
}
