//! Ragged key/value cache: one growable history per (sequence, layer), with
//! lengths free to differ across sequences.
//!
//! Keys and values are stored token-major, `n_head * d_head` floats per
//! position, heads contiguous within a position.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CacheError {
    #[error("sequence {seq} out of range (cache holds {n_seqs})")]
    NoSuchSequence { seq: usize, n_seqs: usize },
    #[error("layer {layer} out of range (cache has {n_layer})")]
    NoSuchLayer { layer: usize, n_layer: usize },
    #[error("kv entry geometry mismatch: expected multiples of {width} floats, got keys={keys} values={values}")]
    Geometry { width: usize, keys: usize, values: usize },
    #[error("cannot truncate sequence {seq} of length {len} to {new_len}")]
    TruncateBeyondLength { seq: usize, len: usize, new_len: usize },
}

#[derive(Debug, Clone, Default, PartialEq)]
struct LayerHistory {
    keys: Vec<f32>,
    values: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RaggedKvCache {
    n_layer: usize,
    n_head: usize,
    d_head: usize,
    // seqs[seq][layer]
    seqs: Vec<Vec<LayerHistory>>,
}

/// Per-sequence lengths captured before a speculative step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CacheSnapshot {
    pub lengths: Vec<usize>,
}

impl RaggedKvCache {
    pub fn new(n_layer: usize, n_head: usize, d_head: usize, n_seqs: usize) -> Self {
        Self {
            n_layer,
            n_head,
            d_head,
            seqs: vec![vec![LayerHistory::default(); n_layer]; n_seqs],
        }
    }

    pub fn n_layer(&self) -> usize {
        self.n_layer
    }

    pub fn n_head(&self) -> usize {
        self.n_head
    }

    pub fn d_head(&self) -> usize {
        self.d_head
    }

    pub fn n_seqs(&self) -> usize {
        self.seqs.len()
    }

    /// Floats per cached position.
    pub fn width(&self) -> usize {
        self.n_head * self.d_head
    }

    fn check(&self, seq: usize, layer: usize) -> Result<(), CacheError> {
        if seq >= self.seqs.len() {
            return Err(CacheError::NoSuchSequence {
                seq,
                n_seqs: self.seqs.len(),
            });
        }
        if layer >= self.n_layer {
            return Err(CacheError::NoSuchLayer {
                layer,
                n_layer: self.n_layer,
            });
        }
        Ok(())
    }

    /// Appends `keys.len() / width` positions to one layer of one sequence.
    pub fn append(&mut self, seq: usize, layer: usize, keys: &[f32], values: &[f32]) -> Result<(), CacheError> {
        self.check(seq, layer)?;
        let width = self.width();
        if keys.len() != values.len() || !keys.len().is_multiple_of(width) {
            return Err(CacheError::Geometry {
                width,
                keys: keys.len(),
                values: values.len(),
            });
        }
        let hist = &mut self.seqs[seq][layer];
        hist.keys.extend_from_slice(keys);
        hist.values.extend_from_slice(values);
        Ok(())
    }

    /// Drops every position at or after `new_len` in all layers of `seq`.
    pub fn truncate(&mut self, seq: usize, new_len: usize) -> Result<(), CacheError> {
        self.check(seq, 0)?;
        let len = self.len(seq);
        if new_len > len {
            return Err(CacheError::TruncateBeyondLength { seq, len, new_len });
        }
        let width = self.width();
        for hist in &mut self.seqs[seq] {
            hist.keys.truncate(new_len * width);
            hist.values.truncate(new_len * width);
        }
        Ok(())
    }

    /// Committed length of `seq` (positions stored in layer 0).
    pub fn len(&self, seq: usize) -> usize {
        match self.seqs.get(seq).and_then(|layers| layers.first()) {
            Some(hist) => hist.keys.len() / self.width(),
            None => 0,
        }
    }

    pub fn is_empty(&self, seq: usize) -> bool {
        self.len(seq) == 0
    }

    pub fn lengths(&self) -> Vec<usize> {
        (0..self.seqs.len()).map(|s| self.len(s)).collect()
    }

    /// Stored positions of one layer; differs from [`len`](Self::len) only
    /// while a forward pass is partway through the layers.
    pub fn layer_len(&self, seq: usize, layer: usize) -> usize {
        self.seqs[seq][layer].keys.len() / self.width()
    }

    pub fn keys(&self, seq: usize, layer: usize) -> &[f32] {
        &self.seqs[seq][layer].keys
    }

    pub fn values(&self, seq: usize, layer: usize) -> &[f32] {
        &self.seqs[seq][layer].values
    }

    pub fn snapshot(&self) -> CacheSnapshot {
        CacheSnapshot {
            lengths: self.lengths(),
        }
    }

    /// Rolls every sequence back to the lengths in `snapshot`.
    pub fn restore(&mut self, snapshot: &CacheSnapshot) -> Result<(), CacheError> {
        for (seq, &len) in snapshot.lengths.iter().enumerate() {
            self.truncate(seq, len)?;
        }
        Ok(())
    }

    /// True when every sequence has the same length in every layer.
    pub fn is_coherent(&self) -> bool {
        (0..self.seqs.len()).all(|s| {
            let len = self.len(s);
            (0..self.n_layer).all(|l| self.layer_len(s, l) == len)
        })
    }
}
