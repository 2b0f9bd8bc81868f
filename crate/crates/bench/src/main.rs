use std::fs::File;
use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use bass_bench::config::{Overrides, RunConfig};
use bass_bench::generate::{run_ablation, run_generate, write_ablation_csv};
use bass_bench::models::main_weights;
use bass_bench::quality::{run_quality, toy_task_suite, TaskFile};
use bass_bench::report::write_jsonl;
use bass_bench::selfcheck::run_selfcheck;
use bass_bench::sweep::{run_cost_sweep, write_cost_csv, SweepSpec};
use bass_core::attention::AttentionStrategy;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "bass", version, about = "Batched speculative decoding benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Regular vs speculative decoding with latency reports.
    Generate {
        #[command(flatten)]
        run: RunArgs,
        /// Also run the draft-length and strategy ablation.
        #[arg(long)]
        ablation: bool,
    },
    /// Pass@First and Pass@Finished under a simulated time budget.
    Quality {
        #[command(flatten)]
        run: RunArgs,
        /// JSON task file; a toy suite is generated when absent.
        #[arg(long)]
        tasks: Option<PathBuf>,
        /// Number of toy tasks.
        #[arg(long, default_value_t = 16)]
        toy: usize,
        #[arg(long, default_value_t = 8)]
        toy_prompt_len: usize,
    },
    /// Roofline cost sweep over batch sizes, written as CSV.
    CostSweep {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_delimiter = ',', default_values_t = [1usize, 2, 4, 8, 16, 32, 64])]
        batch_sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [7usize])]
        draft_lens: Vec<usize>,
        #[arg(long, default_value_t = 0.8)]
        acceptance: f64,
        #[arg(long, default_value_t = 128)]
        context_len: usize,
        #[arg(long, default_value_t = 0)]
        context_spread: usize,
        /// CSV destination; stdout when absent.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Runs the invariant checks.
    Selfcheck,
}

#[derive(Args)]
struct RunArgs {
    /// TOML run config.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = ["pad", "split"])]
    strategy: Option<String>,
    #[arg(long)]
    fixed_draft: Option<usize>,
    #[arg(long)]
    alignment: Option<f64>,
    /// Simulated-clock budget in seconds.
    #[arg(long)]
    time_budget: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    max_new_tokens: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    quant: bool,
    /// Output directory for report files.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        let strategy = self
            .strategy
            .as_deref()
            .map(str::parse::<AttentionStrategy>)
            .transpose()
            .map_err(anyhow::Error::msg)?;
        cfg.apply(&Overrides {
            seed: self.seed,
            strategy,
            fixed_draft: self.fixed_draft,
            alignment: self.alignment,
            time_budget_s: self.time_budget,
            batch_size: self.batch_size,
            max_new_tokens: self.max_new_tokens,
            temperature: self.temperature,
            quant: self.quant.then_some(true),
            out_dir: self.out.clone(),
        });
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut stdout = io::stdout().lock();
    match cli.command {
        Command::Generate { run, ablation } => {
            let cfg = run.config()?;
            let out = run_generate(&cfg)?;
            write!(stdout, "{}", out.report.table())?;
            if ablation {
                let rows = run_ablation(&cfg)?;
                match &cfg.output.dir {
                    Some(dir) => write_ablation_csv(&rows, File::create(dir.join("ablation.csv"))?)?,
                    None => write_ablation_csv(&rows, &mut stdout)?,
                }
            }
        }
        Command::Quality {
            run,
            tasks,
            toy,
            toy_prompt_len,
        } => {
            let cfg = run.config()?;
            let tasks = match tasks {
                Some(p) => TaskFile::load(&p)?,
                None => toy_task_suite(
                    &main_weights(&cfg)?,
                    toy,
                    toy_prompt_len,
                    cfg.generation.temperature,
                    cfg.seed,
                )?,
            };
            let (report, _) = run_quality(&cfg, &tasks)?;
            write!(stdout, "{}", report.table())?;
            if let Some(dir) = &cfg.output.dir {
                std::fs::create_dir_all(dir)?;
                write_jsonl(&dir.join("quality.jsonl"), std::slice::from_ref(&report))?;
            }
        }
        Command::CostSweep {
            run,
            batch_sizes,
            draft_lens,
            acceptance,
            context_len,
            context_spread,
            csv,
        } => {
            let cfg = run.config()?;
            let spec = SweepSpec {
                batch_sizes,
                draft_lens,
                acceptance,
                context_len,
                context_spread,
                ..SweepSpec::default()
            };
            let rows = run_cost_sweep(&cfg, &spec)?;
            match csv {
                Some(p) => write_cost_csv(
                    &rows,
                    File::create(&p).with_context(|| format!("creating {}", p.display()))?,
                )?,
                None => write_cost_csv(&rows, &mut stdout)?,
            }
        }
        Command::Selfcheck => {
            let results = run_selfcheck();
            for r in &results {
                writeln!(
                    stdout,
                    "{} {:<24} {}",
                    if r.passed { "PASS" } else { "FAIL" },
                    r.name,
                    r.detail
                )?;
            }
            if results.iter().any(|r| !r.passed) {
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
