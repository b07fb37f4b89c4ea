//! Weight file container.
//!
//! Layout: 8-byte magic, `u32` LE version, `u64` LE manifest length, a JSON
//! manifest (`config` plus `{name, shape, offset}` per tensor, offsets in
//! bytes from the start of the data section), then little-endian `f32`
//! tensors in manifest order.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::weights::{init_model, ModelWeights};
use super::ModelError;
use crate::Scalar;

pub const WEIGHT_FILE_MAGIC: &[u8; 8] = b"SEMRANKW";
pub const WEIGHT_FILE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

fn io_err(e: impl std::fmt::Display) -> ModelError {
    ModelError::WeightFile(e.to_string())
}

pub fn save_weights<T: Scalar, W: Write>(weights: &ModelWeights<T>, mut out: W) -> Result<(), ModelError> {
    let tensors = weights.named_tensors();
    let mut offset = 0u64;
    let entries = tensors
        .iter()
        .map(|(name, shape, data)| {
            let e = TensorEntry { name: name.clone(), shape: shape.clone(), offset };
            offset += 4 * data.len() as u64;
            e
        })
        .collect();
    let manifest =
        serde_json::to_vec(&Manifest { config: weights.config.clone(), tensors: entries }).map_err(io_err)?;
    out.write_all(WEIGHT_FILE_MAGIC).map_err(io_err)?;
    out.write_all(&WEIGHT_FILE_VERSION.to_le_bytes()).map_err(io_err)?;
    out.write_all(&(manifest.len() as u64).to_le_bytes()).map_err(io_err)?;
    out.write_all(&manifest).map_err(io_err)?;
    for (_, _, data) in tensors {
        let bytes: Vec<u8> = data.iter().flat_map(|v| v.to_le_f32_bytes()).collect();
        out.write_all(&bytes).map_err(io_err)?;
    }
    Ok(())
}

pub fn load_weights<T: Scalar, R: Read>(mut input: R) -> Result<ModelWeights<T>, ModelError> {
    let mut magic = [0u8; 8];
    input.read_exact(&mut magic).map_err(io_err)?;
    if &magic != WEIGHT_FILE_MAGIC {
        return Err(ModelError::WeightFile("bad magic".into()));
    }
    let mut word = [0u8; 4];
    input.read_exact(&mut word).map_err(io_err)?;
    let version = u32::from_le_bytes(word);
    if version != WEIGHT_FILE_VERSION {
        return Err(ModelError::WeightFile(format!("unsupported version {version}")));
    }
    let mut len = [0u8; 8];
    input.read_exact(&mut len).map_err(io_err)?;
    let mut manifest = vec![0u8; u64::from_le_bytes(len) as usize];
    input.read_exact(&mut manifest).map_err(io_err)?;
    let manifest: Manifest = serde_json::from_slice(&manifest).map_err(io_err)?;
    let mut data = Vec::new();
    input.read_to_end(&mut data).map_err(io_err)?;

    // Shapes come from the config; the manifest must agree with them.
    let mut weights = init_model::<T>(&manifest.config, 0)?;
    let expected: Vec<(String, Vec<usize>)> = weights.named_tensors().into_iter().map(|(n, s, _)| (n, s)).collect();
    if expected.len() != manifest.tensors.len() {
        return Err(ModelError::WeightFile("tensor count does not match config".into()));
    }
    for ((name, slot), ((exp_name, exp_shape), entry)) in
        weights.named_tensors_mut().into_iter().zip(expected.iter().zip(&manifest.tensors))
    {
        if entry.name != *exp_name || entry.shape != *exp_shape || name != entry.name {
            return Err(ModelError::WeightFile(format!("unexpected tensor '{}' {:?}", entry.name, entry.shape)));
        }
        let start = entry.offset as usize;
        let end = start + 4 * slot.len();
        let bytes = data.get(start..end).ok_or_else(|| io_err(format!("tensor '{}' truncated", entry.name)))?;
        for (v, chunk) in slot.iter_mut().zip(bytes.chunks_exact(4)) {
            let x = f32::from_le_bytes(chunk.try_into().expect("4-byte chunk"));
            if !x.is_finite() {
                return Err(io_err(format!("non-finite value in '{}'", entry.name)));
            }
            *v = T::lit(x as f64);
        }
    }
    Ok(weights)
}
