//! Adaptive-difference inference plans.
//!
//! Every frame starts at `T`. Each global step updates frames left to right:
//!
//! * frame 1, or a frame whose predecessor was already clean when the step
//!   began, denoises itself by one level;
//! * any other frame follows its predecessor: `t_i = min(t_{i-1} + s, T)`,
//!   using the predecessor's freshly updated value.
//!
//! `s = 0` keeps all frames in lockstep; `s = T` denoises one frame at a time.

use serde::{Deserialize, Serialize};

use super::{check_dims, ScheduleVector};
use crate::error::{Error, Result};

/// The ordered schedule vectors of one sampling trajectory. The implicit
/// starting state (all frames at `T`) is not part of `steps`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchedulePlan {
    pub steps: Vec<ScheduleVector>,
    pub diff: usize,
    pub frames: usize,
    pub max_timestep: usize,
}

impl SchedulePlan {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn initial(&self) -> ScheduleVector {
        ScheduleVector {
            timesteps: vec![self.max_timestep; self.frames],
            max_timestep: self.max_timestep,
        }
    }

    /// The starting state followed by every step.
    pub fn states(&self) -> Vec<ScheduleVector> {
        std::iter::once(self.initial())
            .chain(self.steps.iter().cloned())
            .collect()
    }

    /// Steps as a `steps x frames` matrix.
    pub fn matrix(&self) -> Vec<Vec<usize>> {
        self.steps.iter().map(|v| v.timesteps.clone()).collect()
    }
}

pub fn ad_schedule(frames: usize, max_timestep: usize, diff: usize) -> Result<SchedulePlan> {
    check_dims(frames, max_timestep)?;
    if diff > max_timestep {
        return Err(Error::domain(format!(
            "adaptive difference {diff} outside [0, {max_timestep}]"
        )));
    }
    let t_max = max_timestep;
    let mut current = vec![t_max; frames];
    let mut steps = Vec::with_capacity(ad_steps_closed_form(frames, max_timestep, diff));
    while current.iter().any(|&t| t > 0) {
        let before = current.clone();
        for i in 0..frames {
            current[i] = if i == 0 || before[i - 1] == 0 {
                current[i].saturating_sub(1)
            } else {
                (current[i - 1] + diff).min(t_max)
            };
        }
        steps.push(ScheduleVector {
            timesteps: current.clone(),
            max_timestep,
        });
    }
    Ok(SchedulePlan {
        steps,
        diff,
        frames,
        max_timestep,
    })
}

/// `T + (F - 1) * min(s, T)`.
pub fn ad_steps_closed_form(frames: usize, max_timestep: usize, diff: usize) -> usize {
    max_timestep + frames.saturating_sub(1) * diff.min(max_timestep)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synchronous_plan() {
        let plan = ad_schedule(3, 4, 0).unwrap();
        assert_eq!(
            plan.matrix(),
            vec![vec![3, 3, 3], vec![2, 2, 2], vec![1, 1, 1], vec![0, 0, 0]]
        );
    }

    #[test]
    fn autoregressive_plan() {
        let plan = ad_schedule(2, 3, 3).unwrap();
        assert_eq!(
            plan.matrix(),
            vec![
                vec![2, 3],
                vec![1, 3],
                vec![0, 3],
                vec![0, 2],
                vec![0, 1],
                vec![0, 0]
            ]
        );
    }

    #[test]
    fn length_example() {
        assert_eq!(ad_schedule(4, 10, 2).unwrap().len(), 16);
        assert_eq!(ad_steps_closed_form(4, 10, 2), 16);
    }

    #[test]
    fn diff_out_of_range_rejected() {
        assert!(ad_schedule(3, 4, 5).is_err());
        assert!(ad_schedule(0, 4, 1).is_err());
    }

    #[test]
    fn states_start_at_noise() {
        let plan = ad_schedule(2, 5, 1).unwrap();
        let states = plan.states();
        assert_eq!(states[0].timesteps, vec![5, 5]);
        assert_eq!(states.len(), plan.len() + 1);
        assert!(plan.steps.last().unwrap().timesteps.iter().all(|&t| t == 0));
    }
}
