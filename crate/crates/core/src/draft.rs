//! Uniform per-step draft length control.
//!
//! [`DraftLengthState`] implements the adaptive heuristic: grow by `incre`
//! when some sequence accepted its whole draft, otherwise shrink by
//! `ceil(l / modulus) + s` where `s` marks a consecutive decrease, never going
//! below the largest accepted count in the batch.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DraftError {
    #[error("invalid draft-length parameters: {0}")]
    InvalidParams(String),
    #[error("accepted count {accepted} exceeds the draft length {draft_len}")]
    AcceptedExceedsDraft { accepted: usize, draft_len: usize },
    #[error("fixed draft length must be >= 1")]
    ZeroFixedLength,
}

/// Parameters of the adaptive heuristic. Config keys: `draft.l0`,
/// `draft.incre`, `draft.mod`, `draft.limit`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DraftLengthParams {
    pub l0: usize,
    pub incre: usize,
    #[serde(rename = "mod")]
    pub modulus: usize,
    pub limit: usize,
}

impl Default for DraftLengthParams {
    fn default() -> Self {
        Self {
            l0: 7,
            incre: 2,
            modulus: 10,
            limit: 32,
        }
    }
}

impl DraftLengthParams {
    pub fn validate(&self) -> Result<(), DraftError> {
        if self.l0 == 0 || self.l0 > self.limit {
            return Err(DraftError::InvalidParams(format!(
                "need 1 <= l0 <= limit, got l0={} limit={}",
                self.l0, self.limit
            )));
        }
        if self.modulus == 0 {
            return Err(DraftError::InvalidParams("mod must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DraftLengthState {
    pub l_draft: usize,
    /// 1 right after a decrease, 0 otherwise.
    pub s: usize,
    pub params: DraftLengthParams,
}

impl DraftLengthState {
    pub fn new(params: DraftLengthParams) -> Result<Self, DraftError> {
        params.validate()?;
        Ok(Self {
            l_draft: params.l0,
            s: 0,
            params,
        })
    }

    /// One transition given the accepted draft-token counts of the sequences
    /// that were active this step (corrected/bonus tokens excluded).
    pub fn update(&self, accepted: &[usize]) -> Result<Self, DraftError> {
        let l = self.l_draft;
        if let Some(&bad) = accepted.iter().find(|&&x| x > l) {
            return Err(DraftError::AcceptedExceedsDraft {
                accepted: bad,
                draft_len: l,
            });
        }
        let max_x = accepted.iter().copied().max().unwrap_or(0);
        let mut next = *self;
        if max_x == l {
            next.l_draft = (l + self.params.incre).min(self.params.limit);
            next.s = 0;
        } else {
            let shrunk = l as isize - l.div_ceil(self.params.modulus) as isize - self.s as isize;
            next.l_draft = shrunk.max(max_x as isize).max(1) as usize;
            next.s = 1;
        }
        Ok(next)
    }
}

/// How the engine picks each step's uniform draft length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DraftPolicy {
    Adaptive(DraftLengthState),
    Fixed(usize),
}

impl DraftPolicy {
    pub fn adaptive(params: DraftLengthParams) -> Result<Self, DraftError> {
        DraftLengthState::new(params).map(Self::Adaptive)
    }

    pub fn fixed(len: usize) -> Result<Self, DraftError> {
        if len == 0 {
            return Err(DraftError::ZeroFixedLength);
        }
        Ok(Self::Fixed(len))
    }

    pub fn current(&self) -> usize {
        match self {
            Self::Adaptive(state) => state.l_draft,
            Self::Fixed(len) => *len,
        }
    }

    pub fn observe(&mut self, accepted: &[usize]) -> Result<(), DraftError> {
        if let Self::Adaptive(state) = self {
            *state = state.update(accepted)?;
        }
        Ok(())
    }

    pub fn label(&self) -> String {
        match self {
            Self::Adaptive(_) => "adaptive".to_string(),
            Self::Fixed(len) => format!("fixed-{len}"),
        }
    }
}
