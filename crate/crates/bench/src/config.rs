//! Run configuration, loaded from TOML and overridable from the command line.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use bass_core::attention::AttentionStrategy;
use bass_core::draft::{DraftLengthParams, DraftPolicy};
use bass_core::model::ModelConfig;
use bass_core::perf::{HardwareProfile, ModelGeometry, SimSetup};
use bass_core::TokenId;
use serde::{Deserialize, Serialize};

/// Default simulated-clock budget for quality runs, in seconds.
pub const DEFAULT_TIME_BUDGET_S: f64 = 2.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub strategy: AttentionStrategy,
    pub time_budget_s: Option<f64>,
    pub main: MainConfig,
    pub draft: DraftConfig,
    pub generation: GenerationConfig,
    pub quant: QuantConfig,
    pub hardware: HardwareProfile,
    pub sim: SimGeometryConfig,
    pub output: OutputConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            batch_size: 4,
            strategy: AttentionStrategy::Pad,
            time_budget_s: None,
            main: MainConfig::default(),
            draft: DraftConfig::default(),
            generation: GenerationConfig::default(),
            quant: QuantConfig::default(),
            hardware: HardwareProfile::default(),
            sim: SimGeometryConfig::default(),
            output: OutputConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MainConfig {
    pub model: ModelConfig,
    pub checkpoint: Option<PathBuf>,
    /// Weight seed when no checkpoint is given; defaults to the run seed.
    pub init_seed: Option<u64>,
}

impl Default for MainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::desk_main(),
            checkpoint: None,
            init_seed: None,
        }
    }
}

/// Draft source and length control.
///
/// `alignment` selects a synthetic draft mixed from the main model,
/// `checkpoint` a stored draft model; with neither, a seeded draft model of
/// shape `model` is used. `fixed` replaces the adaptive controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DraftConfig {
    pub alignment: Option<f64>,
    pub checkpoint: Option<PathBuf>,
    pub model: ModelConfig,
    pub init_seed: Option<u64>,
    pub l0: Option<usize>,
    pub incre: Option<usize>,
    #[serde(rename = "mod")]
    pub modulus: Option<usize>,
    pub limit: Option<usize>,
    pub fixed: Option<usize>,
}

impl Default for DraftConfig {
    fn default() -> Self {
        Self {
            alignment: None,
            checkpoint: None,
            model: ModelConfig::desk_draft(),
            init_seed: None,
            l0: None,
            incre: None,
            modulus: None,
            limit: None,
            fixed: None,
        }
    }
}

impl DraftConfig {
    pub fn length_params(&self) -> DraftLengthParams {
        let d = DraftLengthParams::default();
        DraftLengthParams {
            l0: self.l0.unwrap_or(d.l0),
            incre: self.incre.unwrap_or(d.incre),
            modulus: self.modulus.unwrap_or(d.modulus),
            limit: self.limit.unwrap_or(d.limit),
        }
    }

    pub fn policy(&self) -> Result<DraftPolicy> {
        Ok(match self.fixed {
            Some(k) => DraftPolicy::fixed(k)?,
            None => DraftPolicy::adaptive(self.length_params())?,
        })
    }

    pub fn source_label(&self) -> String {
        match (&self.alignment, &self.checkpoint) {
            (Some(a), _) => format!("synthetic-{a}"),
            (None, Some(p)) => format!("checkpoint:{}", p.display()),
            (None, None) => "seeded".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerationConfig {
    pub max_new_tokens: usize,
    pub temperature: f64,
    pub top_p: f64,
    pub eos: Option<TokenId>,
    /// Length of generated prompts when `prompts` is not given.
    pub prompt_len: usize,
    /// One random prompt per sequence instead of one shared prompt.
    pub distinct_prompts: bool,
    /// Explicit prompts: one (replicated) or exactly `batch_size`.
    pub prompts: Option<Vec<Vec<TokenId>>>,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            max_new_tokens: 64,
            temperature: 0.0,
            top_p: 1.0,
            eos: None,
            prompt_len: 16,
            distinct_prompts: true,
            prompts: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct QuantConfig {
    pub enabled: bool,
}

/// Geometries priced by the simulated clock.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimGeometryConfig {
    pub main: ModelGeometry,
    pub draft: ModelGeometry,
}

impl Default for SimGeometryConfig {
    fn default() -> Self {
        Self {
            main: ModelGeometry::main_7_8b(),
            draft: ModelGeometry::draft_310m(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
}

/// Command-line overrides; `None` leaves the file value alone.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub strategy: Option<AttentionStrategy>,
    pub fixed_draft: Option<usize>,
    pub alignment: Option<f64>,
    pub time_budget_s: Option<f64>,
    pub batch_size: Option<usize>,
    pub max_new_tokens: Option<usize>,
    pub temperature: Option<f64>,
    pub quant: Option<bool>,
    pub out_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).context("parsing run config")?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml_str(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = o.strategy {
            self.strategy = v;
        }
        if let Some(v) = o.fixed_draft {
            self.draft.fixed = Some(v);
        }
        if let Some(v) = o.alignment {
            self.draft.alignment = Some(v);
        }
        if let Some(v) = o.time_budget_s {
            self.time_budget_s = Some(v);
        }
        if let Some(v) = o.batch_size {
            self.batch_size = v;
        }
        if let Some(v) = o.max_new_tokens {
            self.generation.max_new_tokens = v;
        }
        if let Some(v) = o.temperature {
            self.generation.temperature = v;
        }
        if let Some(v) = o.quant {
            self.quant.enabled = v;
        }
        if let Some(v) = &o.out_dir {
            self.output.dir = Some(v.clone());
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            bail!("batch_size must be >= 1");
        }
        self.main.model.validate()?;
        let d = &self.draft;
        if d.alignment.is_some() && d.checkpoint.is_some() {
            bail!("draft.alignment and draft.checkpoint are mutually exclusive");
        }
        if let Some(a) = d.alignment {
            if !(0.0..=1.0).contains(&a) {
                bail!("draft.alignment must lie in [0, 1], got {a}");
            }
        } else {
            d.model.validate()?;
            if d.model.vocab_size != self.main.model.vocab_size {
                bail!(
                    "draft vocab {} differs from main vocab {}",
                    d.model.vocab_size,
                    self.main.model.vocab_size
                );
            }
        }
        let adaptive_keys = d.l0.is_some() || d.incre.is_some() || d.modulus.is_some() || d.limit.is_some();
        if d.fixed.is_some() && adaptive_keys {
            bail!("draft.fixed cannot be combined with l0/incre/mod/limit");
        }
        d.policy()?;
        let g = &self.generation;
        if g.max_new_tokens == 0 {
            bail!("generation.max_new_tokens must be >= 1");
        }
        if !(g.temperature >= 0.0 && g.temperature.is_finite()) {
            bail!("generation.temperature must be finite and >= 0");
        }
        if !(g.top_p > 0.0 && g.top_p <= 1.0) {
            bail!("generation.top_p must lie in (0, 1]");
        }
        match &g.prompts {
            Some(p) if p.len() != 1 && p.len() != self.batch_size => {
                bail!("{} prompts given for batch_size {}", p.len(), self.batch_size)
            }
            Some(p) if p.iter().any(Vec::is_empty) => bail!("prompts must be non-empty"),
            None if g.prompt_len == 0 => bail!("generation.prompt_len must be >= 1"),
            _ => {}
        }
        if let Some(t) = self.time_budget_s {
            if !(t > 0.0 && t.is_finite()) {
                bail!("time_budget_s must be positive, got {t}");
            }
        }
        self.hardware.validate()?;
        Ok(())
    }

    pub fn time_budget(&self) -> f64 {
        self.time_budget_s.unwrap_or(DEFAULT_TIME_BUDGET_S)
    }

    pub fn sim_setup(&self) -> SimSetup {
        SimSetup {
            profile: self.hardware,
            main: self.sim.main,
            draft: self.sim.draft,
            strategy: self.strategy,
            prompt_len: self.generation.prompt_len,
            new_tokens: self.generation.max_new_tokens,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate_and_round_trip() {
        let cfg = RunConfig::default();
        cfg.validate().unwrap();
        let back = RunConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn partial_file_fills_defaults() {
        let cfg = RunConfig::from_toml_str(
            r#"
            seed = 3
            strategy = "split"
            [draft]
            alignment = 0.8
            mod = 5
            [generation]
            max_new_tokens = 12
            "#,
        )
        .unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.strategy, AttentionStrategy::Split);
        assert_eq!(cfg.draft.length_params().modulus, 5);
        assert_eq!(cfg.draft.length_params().l0, 7);
        assert_eq!(cfg.main.model, ModelConfig::desk_main());
    }

    #[test]
    fn exclusive_keys_rejected() {
        let mut cfg = RunConfig::default();
        cfg.draft.alignment = Some(0.5);
        cfg.draft.checkpoint = Some("d.bin".into());
        assert!(cfg.validate().is_err());

        let mut cfg = RunConfig::default();
        cfg.draft.fixed = Some(4);
        cfg.draft.l0 = Some(3);
        assert!(cfg.validate().is_err());

        assert!(RunConfig::from_toml_str("batch = 3").is_err());
    }

    #[test]
    fn overrides_apply() {
        let mut cfg = RunConfig::default();
        cfg.apply(&Overrides {
            seed: Some(9),
            fixed_draft: Some(6),
            alignment: Some(0.9),
            time_budget_s: Some(1.0),
            ..Overrides::default()
        });
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.draft.policy().unwrap(), DraftPolicy::Fixed(6));
        assert_eq!(cfg.time_budget(), 1.0);
        cfg.validate().unwrap();
    }
}
