//! `BDKT` checkpoint files.
//!
//! Layout (little-endian): magic, version `u32`, schedule block
//! (`T: u64, β_start: f64, β_end: f64, η: f64`), architecture block, `f32`
//! parameter payload, trailing FNV-1a `u64` checksum over everything before it.
//!
//! Parameters live as `f64` in memory but are kept `f32`-representable by
//! [`NoisePredictor::quantize`], so a save/load round trip is bitwise exact.

use std::path::Path;

use crate::binio::{Reader, Writer};
use crate::model::{NoisePredictor, Preconditioner};
use crate::schedule::NoiseSchedule;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"BDKT";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn checkpoint_to_bytes(predictor: &NoisePredictor, schedule: &NoiseSchedule) -> Vec<u8> {
    let mut w = Writer::new(CHECKPOINT_MAGIC, CHECKPOINT_VERSION);
    w.u64(schedule.steps() as u64);
    w.f64(schedule.beta_start());
    w.f64(schedule.beta_end());
    w.f64(schedule.eta());

    let sizes = predictor.layer_sizes();
    w.u32(sizes.len() as u32);
    for &s in sizes {
        w.u64(s as u64);
    }
    w.u32(predictor.time_embed_dim() as u32);
    w.u32(predictor.bottleneck_index() as u32);
    w.u64(predictor.train_steps());
    match predictor.preconditioner() {
        Some(pc) => {
            w.u32(1);
            w.f64(pc.second_moment());
        }
        None => {
            w.u32(0);
            w.f64(0.0);
        }
    }

    w.u64(predictor.param_count() as u64);
    for &p in predictor.params() {
        w.f32(p as f32);
    }
    w.finish()
}

pub fn checkpoint_from_bytes(bytes: &[u8]) -> Result<(NoisePredictor, NoiseSchedule)> {
    let mut r = Reader::open(bytes, CHECKPOINT_MAGIC, "BDKT", CHECKPOINT_VERSION)?;
    let steps = r.u64()? as usize;
    let beta_start = r.f64()?;
    let beta_end = r.f64()?;
    let eta = r.f64()?;
    let schedule = NoiseSchedule::linear(steps, beta_start, beta_end, eta)
        .map_err(|e| Error::Malformed(format!("schedule block: {e}")))?;

    let n_sizes = r.u32()? as usize;
    if n_sizes > 64 {
        return Err(Error::Malformed(format!("{n_sizes} layer sizes")));
    }
    let mut sizes = Vec::with_capacity(n_sizes);
    for _ in 0..n_sizes {
        sizes.push(r.u64()? as usize);
    }
    let embed = r.u32()? as usize;
    let bottleneck = r.u32()? as usize;
    let train_steps = r.u64()?;
    let has_precond = r.u32()?;
    let second_moment = r.f64()?;

    let count = r.u64()? as usize;
    let mut params = Vec::with_capacity(count.min(bytes.len() / 4));
    for _ in 0..count {
        params.push(r.f32()? as f64);
    }
    r.finish()?;

    let precond = match has_precond {
        0 => None,
        1 => Some(Preconditioner::new(&schedule, second_moment)?),
        other => return Err(Error::Malformed(format!("preconditioner flag {other}"))),
    };
    let predictor = NoisePredictor::from_parts(sizes, embed, bottleneck, train_steps, params)
        .map_err(|e| Error::Malformed(format!("architecture block: {e}")))?
        .with_preconditioner(precond);
    Ok((predictor, schedule))
}

pub fn save_checkpoint(predictor: &NoisePredictor, schedule: &NoiseSchedule, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_to_bytes(predictor, schedule))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(NoisePredictor, NoiseSchedule)> {
    checkpoint_from_bytes(&std::fs::read(path)?)
}

/// Checksum stored in the last eight bytes of a checkpoint, for manifests.
pub fn stored_checksum(bytes: &[u8]) -> Option<u64> {
    let tail = bytes.len().checked_sub(8)?;
    Some(u64::from_le_bytes(bytes[tail..].try_into().ok()?))
}
