//! Euler integration along per-frame discrete schedules.

use super::{level_to_tau, LatentSequence, VelocityField};
use crate::error::{Error, Result};
use crate::schedule::{SchedulePlan, ScheduleVector};

/// Integrates `dx/dtau = u` frame by frame along `states`, a sequence of
/// per-frame levels starting with the state of `x_init`. Between consecutive
/// states a frame moves from level `a` to `b <= a` with a single Euler step
/// of size `(a - b) / T`, using the velocity evaluated at the earlier state.
/// Frames whose level does not change are left bit-identical.
pub fn denoise_along<V: VelocityField + ?Sized>(
    field: &V,
    states: &[ScheduleVector],
    x_init: &LatentSequence,
    prompt: usize,
) -> Result<LatentSequence> {
    let first = states
        .first()
        .ok_or_else(|| Error::domain("sampling needs at least one schedule state"))?;
    let frames = x_init.frames();
    if first.frames() != frames {
        return Err(Error::shape(format!("{frames} frames"), format!("{} frames", first.frames())));
    }
    if field.dim() != x_init.dim() {
        return Err(Error::shape(format!("dimension {}", field.dim()), format!("dimension {}", x_init.dim())));
    }
    let t_max = first.max_timestep;
    let mut x = x_init.clone();

    for (k, pair) in states.windows(2).enumerate() {
        let (now, next) = (&pair[0], &pair[1]);
        if next.frames() != frames || next.max_timestep != t_max {
            return Err(Error::shape(format!("{frames} frames"), format!("{} frames", next.frames())));
        }
        if now.timesteps.iter().zip(&next.timesteps).any(|(a, b)| b > a) {
            return Err(Error::domain(format!("schedule step {k} increases a frame's noise level")));
        }
        if now.timesteps == next.timesteps {
            continue;
        }
        let taus: Vec<f64> = now.timesteps.iter().map(|&t| level_to_tau(t, t_max)).collect();
        let u = field.velocity(&x, &taus, prompt)?;
        for i in 0..frames {
            let drop = now.timesteps[i] - next.timesteps[i];
            if drop == 0 {
                continue;
            }
            let h = drop as f64 / t_max as f64;
            for (xv, uv) in x.frame_mut(i).iter_mut().zip(u.frame(i)) {
                *xv += h * uv;
            }
        }
        if !x.is_finite() {
            return Err(Error::non_finite(format!("sampler state after step {k}")));
        }
    }

    let last = states.last().unwrap();
    x.set_noise_levels(Some(last.noise_levels()));
    Ok(x)
}

/// Samples from noise along a full plan; the result is annotated with the
/// plan's final levels (all zero).
pub fn euler_sample<V: VelocityField + ?Sized>(
    field: &V,
    plan: &SchedulePlan,
    x_init: &LatentSequence,
    prompt: usize,
) -> Result<LatentSequence> {
    denoise_along(field, &plan.states(), x_init, prompt)
}
