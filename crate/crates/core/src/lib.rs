//! Batched speculative decoding on a desk-scale transformer.
//!
//! The crate covers the whole pipeline: a deterministic decoder-only model
//! ([`model`]) over a ragged per-sequence KV cache ([`kv`]), ragged-batch
//! attention with padding or per-sequence splitting ([`attention`]), the
//! distribution-preserving accept/reject rule ([`sampling`]), adaptive draft
//! lengths ([`draft`]) and the decoding loops ([`engine`]). Around it sit an
//! analytic roofline cost model ([`perf`]) and an INT8 numerics simulator
//! ([`quant`]).

pub mod attention;
pub mod draft;
pub mod engine;
pub mod kv;
pub mod model;
pub mod perf;
pub mod quant;
pub mod sampling;
pub mod tensor;

/// Token ids are the model interface; there is no tokenizer.
pub type TokenId = u32;
