//! Per-frame timestep schedules.
//!
//! Discrete timesteps live in `0..=T`, where `0` is a clean frame and `T` is
//! pure noise. Training schedules draw from `1..=T`; inference plans may hold
//! already-denoised frames at `0`.

mod ad;
mod dp;
mod fopp;

pub use ad::{ad_schedule, ad_steps_closed_form, SchedulePlan};
pub use dp::{
    build_prefix_table, build_suffix_table, count_nondecreasing, count_unconstrained,
    DpTable, TableDirection,
};
pub use fopp::{fopp_sample, FoppSampler};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One timestep per frame, bounded by `max_timestep`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ScheduleVector {
    pub timesteps: Vec<usize>,
    pub max_timestep: usize,
}

impl ScheduleVector {
    pub fn new(timesteps: Vec<usize>, max_timestep: usize) -> Result<Self> {
        if timesteps.is_empty() {
            return Err(Error::domain("schedule needs at least one frame"));
        }
        if max_timestep == 0 {
            return Err(Error::domain("max timestep must be at least 1"));
        }
        if let Some(t) = timesteps.iter().find(|&&t| t > max_timestep) {
            return Err(Error::domain(format!(
                "timestep {t} exceeds max timestep {max_timestep}"
            )));
        }
        Ok(Self {
            timesteps,
            max_timestep,
        })
    }

    /// All frames at the same timestep.
    pub fn constant(frames: usize, timestep: usize, max_timestep: usize) -> Result<Self> {
        Self::new(vec![timestep; frames], max_timestep)
    }

    pub fn frames(&self) -> usize {
        self.timesteps.len()
    }

    pub fn is_nondecreasing(&self) -> bool {
        self.timesteps.windows(2).all(|w| w[0] <= w[1])
    }

    /// Noise level per frame in `[0, 1]` (`t / T`).
    pub fn noise_levels(&self) -> Vec<f64> {
        let t_max = self.max_timestep as f64;
        self.timesteps.iter().map(|&t| t as f64 / t_max).collect()
    }
}

/// True iff every timestep lies in `[0, T]` and the vector is non-decreasing
/// across frames.
pub fn validate_schedule(v: &ScheduleVector) -> bool {
    !v.timesteps.is_empty()
        && v.max_timestep >= 1
        && v.timesteps.iter().all(|&t| t <= v.max_timestep)
        && v.is_nondecreasing()
}

pub(crate) fn check_dims(frames: usize, max_timestep: usize) -> Result<()> {
    if frames == 0 {
        return Err(Error::domain("frame count must be at least 1"));
    }
    if max_timestep == 0 {
        return Err(Error::domain("max timestep must be at least 1"));
    }
    Ok(())
}
