use std::sync::Arc;

use anyhow::{Context, Result};
use bass_core::model::{
    init_model, load_checkpoint, LogitsProvider, ModelWeights, SyntheticAlignedDraft, TransformerLm,
};
use bass_core::TokenId;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;

/// Offsets the default draft weight seed from the main one.
const DRAFT_SEED_OFFSET: u64 = 1;
/// Keeps prompt tokens apart from every other seeded draw.
const PROMPT_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

pub enum DraftModel {
    Synthetic(SyntheticAlignedDraft),
    Model(TransformerLm),
}

impl DraftModel {
    pub fn provider(&mut self) -> &mut dyn LogitsProvider {
        match self {
            Self::Synthetic(d) => d,
            Self::Model(m) => m,
        }
    }
}

pub fn main_weights(cfg: &RunConfig) -> Result<Arc<ModelWeights>> {
    let w = match &cfg.main.checkpoint {
        Some(path) => load_checkpoint(path, &cfg.main.model)
            .with_context(|| format!("loading main checkpoint {}", path.display()))?,
        None => init_model(cfg.main.model, cfg.main.init_seed.unwrap_or(cfg.seed))?,
    };
    Ok(Arc::new(w))
}

fn lm(weights: Arc<ModelWeights>, quantized: bool) -> Result<TransformerLm> {
    Ok(if quantized {
        TransformerLm::quantized(weights)?
    } else {
        TransformerLm::new(weights)
    })
}

pub fn build_main(cfg: &RunConfig, weights: &Arc<ModelWeights>) -> Result<TransformerLm> {
    lm(weights.clone(), cfg.quant.enabled)
}

pub fn build_draft(cfg: &RunConfig, main_weights: &Arc<ModelWeights>) -> Result<DraftModel> {
    let q = cfg.quant.enabled;
    let d = &cfg.draft;
    Ok(match (d.alignment, &d.checkpoint) {
        (Some(a), _) => DraftModel::Synthetic(SyntheticAlignedDraft::new(lm(main_weights.clone(), q)?, a, cfg.seed)?),
        (None, Some(path)) => {
            let w = load_checkpoint(path, &d.model)
                .with_context(|| format!("loading draft checkpoint {}", path.display()))?;
            DraftModel::Model(lm(Arc::new(w), q)?)
        }
        (None, None) => {
            let seed = d.init_seed.unwrap_or(cfg.seed.wrapping_add(DRAFT_SEED_OFFSET));
            DraftModel::Model(lm(Arc::new(init_model(d.model, seed)?), q)?)
        }
    })
}

/// Prompts for the configured batch: explicit ones, or seeded random tokens.
pub fn prompts(cfg: &RunConfig) -> Vec<Vec<TokenId>> {
    let b = cfg.batch_size;
    let g = &cfg.generation;
    if let Some(p) = &g.prompts {
        return if p.len() == 1 { vec![p[0].clone(); b] } else { p.clone() };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ PROMPT_SALT);
    let vocab = cfg.main.model.vocab_size as TokenId;
    let mut draw = || {
        (0..g.prompt_len)
            .map(|_| rng.random_range(0..vocab))
            .collect::<Vec<_>>()
    };
    if g.distinct_prompts {
        (0..b).map(|_| draw()).collect()
    } else {
        vec![draw(); b]
    }
}
