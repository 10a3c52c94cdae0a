//! Binary checkpoint format.
//!
//! ```text
//! "DRVB"  u32 version
//! u64 metadata length, metadata JSON (model config, training config,
//!     epoch, RNG position, optimizer settings and step)
//! u32 tensor count, then per tensor:
//!     u32 name length, name, u32 rank, rank × u32 extents, f32 values
//! per tensor: f64 first moments, f64 second moments
//! ```
//! All integers and floats are little-endian.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{TrainConfig, TrainError};
use crate::models::ModelConfig;
use crate::nn::{AdamConfig, AdamState, ParamStore, Tensor};
use crate::rng::RngState;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"DRVB";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Everything needed to resume training or run inference. Parameters are
/// held at f32 precision, exactly as stored.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub params: ParamStore,
    pub adam: AdamState,
    pub epoch: usize,
    pub rng: RngState,
    pub train: TrainConfig,
}

#[derive(Serialize, Deserialize)]
struct Meta {
    model: ModelConfig,
    train: TrainConfig,
    epoch: usize,
    rng: RngState,
    adam: AdamConfig,
    adam_step: u64,
}

pub fn encode(ckpt: &Checkpoint) -> Result<Vec<u8>, TrainError> {
    let meta = Meta {
        model: ckpt.model.clone(),
        train: ckpt.train.clone(),
        epoch: ckpt.epoch,
        rng: ckpt.rng,
        adam: ckpt.adam.config,
        adam_step: ckpt.adam.step,
    };
    let json = serde_json::to_vec(&meta).map_err(|e| TrainError::Parse(e.to_string()))?;
    let mut buf = Vec::new();
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.extend_from_slice(&(json.len() as u64).to_le_bytes());
    buf.extend_from_slice(&json);
    buf.extend_from_slice(&(ckpt.params.len() as u32).to_le_bytes());
    for (name, t) in ckpt.params.iter() {
        buf.extend_from_slice(&(name.len() as u32).to_le_bytes());
        buf.extend_from_slice(name.as_bytes());
        buf.extend_from_slice(&(t.rank() as u32).to_le_bytes());
        for &d in t.shape() {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    for (m, v) in ckpt.adam.m.iter().zip(&ckpt.adam.v) {
        for x in m.data().iter().chain(v.data()) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    Ok(buf)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], TrainError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| TrainError::Parse(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, TrainError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, TrainError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>, TrainError> {
        let raw = self.take(n.checked_mul(4).ok_or_else(|| TrainError::Parse("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>, TrainError> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| TrainError::Parse("size overflow".into()))?)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn decode(bytes: &[u8]) -> Result<Checkpoint, TrainError> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(TrainError::Parse("bad magic".into()));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(TrainError::VersionMismatch {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let meta_len = r.u64()? as usize;
    let meta: Meta = serde_json::from_slice(r.take(meta_len)?).map_err(|e| TrainError::Parse(e.to_string()))?;
    let count = r.u32()? as usize;
    let mut named = Vec::with_capacity(count.min(4096));
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(len)?)
            .map_err(|e| TrainError::Parse(e.to_string()))?
            .to_string();
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
        let n = n.ok_or_else(|| TrainError::Parse("size overflow".into()))?;
        let data = r.f32s(n)?;
        let t = Tensor::new(shape, data).map_err(|e| TrainError::Parse(e.to_string()))?;
        named.push((name, t));
    }
    let params = ParamStore::from_named(named).map_err(|e| TrainError::Parse(e.to_string()))?;
    let expected: Vec<(String, Vec<usize>)> = meta
        .model
        .param_specs()
        .into_iter()
        .map(|s| (s.name, s.shape))
        .collect();
    let actual: Vec<(String, Vec<usize>)> = params.iter().map(|(n, t)| (n.to_string(), t.shape().to_vec())).collect();
    if expected != actual {
        return Err(TrainError::Parse("parameters do not match the model config".into()));
    }
    let mut m = Vec::with_capacity(params.len());
    let mut v = Vec::with_capacity(params.len());
    for t in params.tensors() {
        let shape = t.shape().to_vec();
        let mk = |d| Tensor::new(shape.clone(), d).map_err(|e| TrainError::Parse(e.to_string()));
        m.push(mk(r.f64s(t.len())?)?);
        v.push(mk(r.f64s(t.len())?)?);
    }
    if r.pos != bytes.len() {
        return Err(TrainError::Parse(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(Checkpoint {
        model: meta.model,
        params,
        adam: AdamState {
            config: meta.adam,
            step: meta.adam_step,
            m,
            v,
        },
        epoch: meta.epoch,
        rng: meta.rng,
        train: meta.train,
    })
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), TrainError> {
    let bytes = encode(ckpt)?;
    std::fs::write(path, bytes).map_err(|e| TrainError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, TrainError> {
    let bytes = std::fs::read(path).map_err(|e| TrainError::io(path, e))?;
    decode(&bytes)
}
