//! Binary checkpoint container.
//!
//! Layout, all integers little-endian `u32`:
//!
//! ```text
//! "BASSCKPT" | version | array count
//! per array: name length | UTF-8 name | rank | dims[rank] | dtype tag | raw data
//! ```
//!
//! The only dtype is tag 0, `f32` little-endian. Arrays are matched by name
//! and their shapes are checked against the expected [`ModelConfig`].

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::tensor::Matrix;

use super::{LayerWeights, ModelConfig, ModelError, ModelWeights};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"BASSCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;
const DTYPE_F32: u32 = 0;

fn put_u32(w: &mut impl Write, v: u32) -> std::io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn to_u32(v: usize, what: &str) -> Result<u32, ModelError> {
    u32::try_from(v).map_err(|_| ModelError::Checkpoint(format!("{what} {v} does not fit in u32")))
}

pub fn write_checkpoint(w: &mut impl Write, weights: &ModelWeights) -> Result<(), ModelError> {
    let arrays = weights.named_arrays();
    w.write_all(CHECKPOINT_MAGIC)?;
    put_u32(w, CHECKPOINT_VERSION)?;
    put_u32(w, to_u32(arrays.len(), "array count")?)?;
    for (name, dims, data) in arrays {
        put_u32(w, to_u32(name.len(), "name length")?)?;
        w.write_all(name.as_bytes())?;
        put_u32(w, to_u32(dims.len(), "rank")?)?;
        for d in &dims {
            put_u32(w, to_u32(*d, "dimension")?)?;
        }
        put_u32(w, DTYPE_F32)?;
        for v in data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn save_checkpoint(path: impl AsRef<Path>, weights: &ModelWeights) -> Result<(), ModelError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, weights)?;
    w.flush()?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<u32, ModelError> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)
        .map_err(|e| ModelError::Checkpoint(format!("truncated file: {e}")))?;
    Ok(u32::from_le_bytes(buf))
}

struct RawArray {
    dims: Vec<usize>,
    data: Vec<f32>,
}

pub fn read_checkpoint(r: &mut impl Read, config: &ModelConfig) -> Result<ModelWeights, ModelError> {
    config.validate()?;
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| ModelError::Checkpoint("file too short for magic".into()))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(ModelError::Checkpoint("bad magic bytes".into()));
    }
    let version = get_u32(r)?;
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::Checkpoint(format!("unsupported version {version}")));
    }
    let count = get_u32(r)? as usize;
    let mut arrays: HashMap<String, RawArray> = HashMap::with_capacity(count);
    for _ in 0..count {
        let name_len = get_u32(r)? as usize;
        let mut name = vec![0u8; name_len];
        r.read_exact(&mut name)
            .map_err(|e| ModelError::Checkpoint(format!("truncated name: {e}")))?;
        let name = String::from_utf8(name).map_err(|_| ModelError::Checkpoint("array name is not UTF-8".into()))?;
        let rank = get_u32(r)? as usize;
        let dims = (0..rank)
            .map(|_| get_u32(r).map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        let tag = get_u32(r)?;
        if tag != DTYPE_F32 {
            return Err(ModelError::Checkpoint(format!("{name}: unknown dtype tag {tag}")));
        }
        let n: usize = dims.iter().product();
        let mut bytes = vec![0u8; n * 4];
        r.read_exact(&mut bytes)
            .map_err(|e| ModelError::Checkpoint(format!("{name}: truncated data: {e}")))?;
        let data = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        if arrays.insert(name.clone(), RawArray { dims, data }).is_some() {
            return Err(ModelError::Checkpoint(format!("duplicate array {name}")));
        }
    }

    let mut arrays = ArrayTable(arrays);
    let (d, v) = (config.d_model, config.vocab_size);
    let tok_emb = arrays.matrix("tok_emb", v, d)?;
    let pos_emb = arrays.matrix("pos_emb", config.max_seq_len, d)?;
    let layers = (0..config.n_layer)
        .map(|i| {
            let p = |n: &str| format!("layers.{i}.{n}");
            Ok(LayerWeights {
                ln1_gain: arrays.vector(&p("ln1.gain"), d)?,
                ln1_bias: arrays.vector(&p("ln1.bias"), d)?,
                w_qkv: arrays.matrix(&p("attn.w_qkv"), d, 3 * d)?,
                b_qkv: arrays.vector(&p("attn.b_qkv"), 3 * d)?,
                w_out: arrays.matrix(&p("attn.w_out"), d, d)?,
                b_out: arrays.vector(&p("attn.b_out"), d)?,
                ln2_gain: arrays.vector(&p("ln2.gain"), d)?,
                ln2_bias: arrays.vector(&p("ln2.bias"), d)?,
                w_fc: arrays.matrix(&p("mlp.w_fc"), d, 4 * d)?,
                b_fc: arrays.vector(&p("mlp.b_fc"), 4 * d)?,
                w_proj: arrays.matrix(&p("mlp.w_proj"), 4 * d, d)?,
                b_proj: arrays.vector(&p("mlp.b_proj"), d)?,
            })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let lnf_gain = arrays.vector("lnf.gain", d)?;
    let lnf_bias = arrays.vector("lnf.bias", d)?;
    let head = arrays.matrix("head", d, v)?;
    if let Some(extra) = arrays.0.keys().next() {
        return Err(ModelError::Checkpoint(format!("unexpected array {extra}")));
    }
    Ok(ModelWeights {
        config: *config,
        tok_emb,
        pos_emb,
        layers,
        lnf_gain,
        lnf_bias,
        head,
    })
}

struct ArrayTable(HashMap<String, RawArray>);

impl ArrayTable {
    fn take(&mut self, name: &str, dims: &[usize]) -> Result<Vec<f32>, ModelError> {
        let arr = self
            .0
            .remove(name)
            .ok_or_else(|| ModelError::Checkpoint(format!("missing array {name}")))?;
        if arr.dims != dims {
            return Err(ModelError::Checkpoint(format!(
                "{name}: shape {:?} does not match config {:?}",
                arr.dims, dims
            )));
        }
        if arr.data.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::Checkpoint(format!("{name}: non-finite values")));
        }
        Ok(arr.data)
    }

    fn matrix(&mut self, name: &str, rows: usize, cols: usize) -> Result<Matrix, ModelError> {
        self.take(name, &[rows, cols])
            .map(|data| Matrix::from_vec(rows, cols, data))
    }

    fn vector(&mut self, name: &str, len: usize) -> Result<Vec<f32>, ModelError> {
        self.take(name, &[len])
    }
}

pub fn load_checkpoint(path: impl AsRef<Path>, config: &ModelConfig) -> Result<ModelWeights, ModelError> {
    let mut r = BufReader::new(File::open(path)?);
    read_checkpoint(&mut r, config)
}
