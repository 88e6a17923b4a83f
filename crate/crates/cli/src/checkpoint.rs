//! Denoiser checkpoints.
//!
//! Little-endian layout:
//!
//! | bytes | field                                   |
//! |-------|-----------------------------------------|
//! | 4     | magic `DFCK`                            |
//! | 4     | format version (`u32`, currently 1)     |
//! | 20    | `dim, hidden, time_freqs, max_positions, num_prompts` as `u32` |
//! | 8     | parameter count `P` (`u64`)             |
//! | 8 P   | parameters as `f64`                     |

use std::path::Path;

use anyhow::{bail, ensure, Context, Result};
use dforce_core::flow::{Denoiser, DenoiserConfig};

use crate::io::write_atomic;

pub const MAGIC: &[u8; 4] = b"DFCK";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 5 * 4 + 8;

pub fn encode(model: &Denoiser) -> Vec<u8> {
    let c = model.config();
    let params = model.params();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * params.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for v in [c.dim, c.hidden, c.time_freqs, c.max_positions, c.num_prompts] {
        out.extend_from_slice(&(v as u32).to_le_bytes());
    }
    out.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        out.extend_from_slice(&p.to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

pub fn decode(bytes: &[u8]) -> Result<Denoiser> {
    ensure!(bytes.len() >= HEADER_LEN, "checkpoint truncated: {} bytes", bytes.len());
    ensure!(&bytes[..4] == MAGIC, "not a checkpoint (bad magic bytes)");
    let version = u32_at(bytes, 4);
    ensure!(version == VERSION, "unsupported checkpoint version {version}");
    let f = |i: usize| u32_at(bytes, 8 + 4 * i) as usize;
    let config = DenoiserConfig {
        dim: f(0),
        hidden: f(1),
        time_freqs: f(2),
        max_positions: f(3),
        num_prompts: f(4),
    };
    let count = u64::from_le_bytes(bytes[28..36].try_into().unwrap()) as usize;
    let body = &bytes[HEADER_LEN..];
    if body.len() != count.saturating_mul(8) {
        bail!("checkpoint holds {} weight bytes, header promises {count} weights", body.len());
    }
    let params = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Denoiser::from_params(config, params).context("checkpoint does not match its header")
}

pub fn save(model: &Denoiser, path: &Path) -> Result<()> {
    write_atomic(path, &encode(model))
}

pub fn load(path: &Path) -> Result<Denoiser> {
    let bytes = std::fs::read(path).with_context(|| format!("reading checkpoint {}", path.display()))?;
    decode(&bytes).with_context(|| format!("in {}", path.display()))
}
