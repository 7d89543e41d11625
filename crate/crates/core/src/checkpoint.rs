//! Versioned binary checkpoints.
//!
//! Layout (little-endian):
//!
//! ```text
//! magic "GIPCKPT\0" | version u32
//! config  : u64 length + TOML text
//! meta    : u64 length + JSON text
//! tensors : u64 count, then per tensor
//!           u32 name length + name | u64 rows | u64 cols | rows*cols f64
//! ```

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::TrainConfig;
use crate::error::{GipError, Result};
use crate::graph::SplitSpec;
use crate::model::{Architecture, ModelState};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

const MAGIC: &[u8; 8] = b"GIPCKPT\0";
pub const VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub dataset: String,
    pub arch: Architecture,
    pub split: SplitSpec,
    pub best_epoch: usize,
    pub best_val_acc: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint<T> {
    pub model: ModelState<T>,
    pub config: TrainConfig,
    pub meta: CheckpointMeta,
}

fn bad(msg: impl Into<String>) -> GipError {
    GipError::Checkpoint(msg.into())
}

fn write_blob(out: &mut impl Write, bytes: &[u8]) -> Result<()> {
    out.write_all(&(bytes.len() as u64).to_le_bytes())?;
    out.write_all(bytes)?;
    Ok(())
}

fn read_u32(input: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    input.read_exact(&mut buf).map_err(|_| bad("truncated file"))?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(input: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    input.read_exact(&mut buf).map_err(|_| bad("truncated file"))?;
    Ok(u64::from_le_bytes(buf))
}

fn read_bytes(input: &mut impl Read, len: u64) -> Result<Vec<u8>> {
    if len > 1 << 32 {
        return Err(bad(format!("implausible section length {len}")));
    }
    let mut buf = vec![0u8; len as usize];
    input.read_exact(&mut buf).map_err(|_| bad("truncated file"))?;
    Ok(buf)
}

fn read_text(input: &mut impl Read) -> Result<String> {
    let len = read_u64(input)?;
    String::from_utf8(read_bytes(input, len)?).map_err(|_| bad("section is not UTF-8"))
}

pub fn save_checkpoint<T: Scalar>(
    path: impl AsRef<Path>,
    model: &ModelState<T>,
    config: &TrainConfig,
    meta: &CheckpointMeta,
) -> Result<()> {
    let mut out = BufWriter::new(std::fs::File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    write_blob(&mut out, config.to_toml_string().as_bytes())?;
    write_blob(&mut out, serde_json::to_string(meta)?.as_bytes())?;
    let names = model.tensor_names();
    let tensors = model.tensors();
    out.write_all(&(tensors.len() as u64).to_le_bytes())?;
    for (name, t) in names.iter().zip(tensors) {
        out.write_all(&(name.len() as u32).to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(t.rows() as u64).to_le_bytes())?;
        out.write_all(&(t.cols() as u64).to_le_bytes())?;
        for v in t.data() {
            out.write_all(&v.to_f64_lossy().to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(GipError::MissingFile(path.to_path_buf()));
    }
    let mut input = BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(|_| bad("truncated file"))?;
    if &magic != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = read_u32(&mut input)?;
    if version != VERSION {
        return Err(bad(format!("unsupported checkpoint version {version}")));
    }
    let config = TrainConfig::from_toml_str(&read_text(&mut input)?)?;
    let meta: CheckpointMeta = serde_json::from_str(&read_text(&mut input)?)?;

    // Shapes come from the architecture; values are overwritten below.
    let mut model = ModelState::<T>::new(meta.arch.clone(), &config, &mut ChaCha8Rng::seed_from_u64(0))?;
    let names = model.tensor_names();
    let count = read_u64(&mut input)? as usize;
    if count != names.len() {
        return Err(bad(format!("{count} tensors stored, model expects {}", names.len())));
    }
    let mut slots = model.tensors_mut();
    for (expected, slot) in names.iter().zip(slots.iter_mut()) {
        let len = read_u32(&mut input)? as u64;
        let name = String::from_utf8(read_bytes(&mut input, len)?).map_err(|_| bad("tensor name is not UTF-8"))?;
        if &name != expected {
            return Err(bad(format!("expected tensor {expected}, found {name}")));
        }
        let rows = read_u64(&mut input)? as usize;
        let cols = read_u64(&mut input)? as usize;
        if (rows, cols) != slot.shape() {
            return Err(bad(format!("{name}: stored {rows}x{cols}, expected {:?}", slot.shape())));
        }
        let raw = read_bytes(&mut input, (rows * cols * 8) as u64)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
            .collect();
        **slot = Tensor::from_vec(rows, cols, data)?;
    }
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(bad("trailing bytes after the last tensor"));
    }
    Ok(Checkpoint { model, config, meta })
}
