//! Diffusion forcing: training with independent per-frame noise levels, toy
//! video dynamics, and sliding-window long rollout.

mod dynamics;
mod rollout;

pub use dynamics::{drift_metric, make_toy_dataset, Clip, Dynamics, ToyVideoSpec};
pub use rollout::{condition_on_first_frame, rollout, segment_bounds, RolloutConfig};

use crate::error::Result;
use crate::flow::{LatentSequence, Trainer};
use crate::rng::SeededRng;
use crate::schedule::{FoppSampler, ScheduleVector};

/// Source of per-frame training schedules.
pub trait ScheduleSource {
    fn draw(&self, rng: &mut SeededRng, frames: usize) -> ScheduleVector;
}

impl ScheduleSource for FoppSampler {
    fn draw(&self, rng: &mut SeededRng, frames: usize) -> ScheduleVector {
        assert_eq!(frames, self.frames(), "sampler built for a different frame count");
        self.sample(rng)
    }
}

/// Every frame at the same level: synchronous full-sequence diffusion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstantSchedule {
    pub level: usize,
    pub max_timestep: usize,
}

impl ScheduleSource for ConstantSchedule {
    fn draw(&self, _rng: &mut SeededRng, frames: usize) -> ScheduleVector {
        ScheduleVector {
            timesteps: vec![self.level; frames],
            max_timestep: self.max_timestep,
        }
    }
}

/// One diffusion-forcing step: a schedule per clip from `source`, then a
/// flow-matching update at those per-frame noise levels.
pub fn df_train_step<S: ScheduleSource + ?Sized>(
    trainer: &mut Trainer,
    source: &S,
    batch: &[(LatentSequence, usize)],
) -> Result<f64> {
    trainer.step_with(batch, |rng, frames| {
        crate::flow::level_taus(&source.draw(rng, frames))
    })
}
