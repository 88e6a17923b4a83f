//! Flow matching on per-frame latent sequences.
//!
//! Flow time `tau` runs from `0` (pure noise `x0`) to `1` (data `x1`) along
//! `x_tau = tau * x1 + (1 - tau) * x0`, and the regression target is the
//! constant velocity `x1 - x0`. Discrete schedule levels map to flow time as
//! `tau = 1 - t / T`, so level `0` is a clean frame.

mod latent;
mod model;
mod optim;
mod sampler;
mod train;

pub use latent::LatentSequence;
pub use model::{
    ConstantField, ContextMode, Denoiser, DenoiserConfig, GaussianOracleField, ParamGroup,
    VelocityField,
};
pub use optim::{Optimizer, OptimizerKind};
pub use sampler::{denoise_along, euler_sample};
pub use train::{fm_loss, level_taus, FmExample, LossAndGrad, LrSchedule, TrainConfig, TrainSchedule, Trainer};

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::standard_normal;

/// Flow time for a discrete level `t` out of `T`.
pub fn level_to_tau(level: usize, max_timestep: usize) -> f64 {
    1.0 - level as f64 / max_timestep as f64
}

/// Frame `i` of the result is `tau_i * x1_i + (1 - tau_i) * x0_i`.
pub fn interpolate(x1: &LatentSequence, x0: &LatentSequence, taus: &[f64]) -> Result<LatentSequence> {
    x1.check_same_shape(x0)?;
    if taus.len() != x1.frames() {
        return Err(Error::shape(
            format!("{} timesteps", x1.frames()),
            format!("{} timesteps", taus.len()),
        ));
    }
    if let Some(t) = taus.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::domain(format!("timestep {t} outside [0, 1]")));
    }
    let dim = x1.dim();
    let mut out = x1.clone();
    for (i, &tau) in taus.iter().enumerate() {
        let a = x1.frame(i);
        let b = x0.frame(i);
        for (d, o) in out.frame_mut(i).iter_mut().enumerate().take(dim) {
            *o = tau * a[d] + (1.0 - tau) * b[d];
        }
    }
    out.set_noise_levels(Some(taus.iter().map(|t| 1.0 - t).collect()));
    Ok(out)
}

/// `x1 - x0`, framewise.
pub fn target_velocity(x1: &LatentSequence, x0: &LatentSequence) -> Result<LatentSequence> {
    x1.check_same_shape(x0)?;
    let data = x1.data().iter().zip(x0.data()).map(|(a, b)| a - b).collect();
    LatentSequence::new(x1.frames(), x1.dim(), data)
}

/// `sigmoid(z)` with `z ~ Normal(mean, std^2)`.
pub fn sample_timestep_logitnormal<R: Rng + ?Sized>(rng: &mut R, mean: f64, std: f64) -> f64 {
    debug_assert!(std > 0.0);
    let z = mean + std * standard_normal(rng);
    let tau = 1.0 / (1.0 + (-z).exp());
    // Keep strictly inside (0, 1) even when the sigmoid rounds.
    tau.clamp(f64::EPSILON, 1.0 - f64::EPSILON)
}

/// Coefficient `c(tau)` such that `E[x1 - x0 | x_tau] = c(tau) * x_tau` when
/// `x1 ~ N(0, sigma1^2 I)` and `x0 ~ N(0, I)`.
pub fn gaussian_velocity_coefficient(tau: f64, sigma1: f64) -> f64 {
    let s2 = sigma1 * sigma1;
    (tau * s2 - (1.0 - tau)) / (tau * tau * s2 + (1.0 - tau) * (1.0 - tau))
}

/// Exact minimizer of the flow-matching loss for the isotropic Gaussian toy.
pub fn closed_form_velocity_gaussian(x_t: &[f64], tau: f64, sigma1: f64) -> Vec<f64> {
    let c = gaussian_velocity_coefficient(tau, sigma1);
    x_t.iter().map(|x| c * x).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn seq(frames: Vec<Vec<f64>>) -> LatentSequence {
        LatentSequence::from_frames(frames).unwrap()
    }

    #[test]
    fn interpolate_endpoints() {
        let x1 = seq(vec![vec![1.0, 2.0], vec![3.0, -1.0]]);
        let x0 = seq(vec![vec![0.5, 0.1], vec![-2.0, 4.0]]);
        let at0 = interpolate(&x1, &x0, &[0.0, 0.0]).unwrap();
        let at1 = interpolate(&x1, &x0, &[1.0, 1.0]).unwrap();
        assert_eq!(at0.data(), x0.data());
        assert_eq!(at1.data(), x1.data());
    }

    #[test]
    fn interpolate_quarter() {
        let out = interpolate(&seq(vec![vec![2.0]]), &seq(vec![vec![0.0]]), &[0.25]).unwrap();
        assert_eq!(out.frame(0), &[0.5]);
        assert_eq!(out.noise_levels().unwrap(), &[0.75]);
    }

    #[test]
    fn interpolate_rejects_bad_input() {
        let a = seq(vec![vec![1.0, 2.0]]);
        let b = seq(vec![vec![1.0]]);
        assert!(matches!(interpolate(&a, &b, &[0.5]), Err(Error::Shape { .. })));
        assert!(interpolate(&a, &a, &[1.5]).is_err());
        assert!(interpolate(&a, &a, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn target_velocity_examples() {
        let a = seq(vec![vec![3.0, 1.0]]);
        let b = seq(vec![vec![1.0, 1.0]]);
        assert_eq!(target_velocity(&a, &b).unwrap().data(), &[2.0, 0.0]);
        assert!(target_velocity(&a, &a).unwrap().data().iter().all(|&v| v == 0.0));
        let ab = target_velocity(&a, &b).unwrap();
        let ba = target_velocity(&b, &a).unwrap();
        for (x, y) in ab.data().iter().zip(ba.data()) {
            assert_eq!(*x, -*y);
        }
    }

    #[test]
    fn logitnormal_median_and_range() {
        let mut rng = seeded(11);
        let mut draws: Vec<f64> = (0..100_000)
            .map(|_| sample_timestep_logitnormal(&mut rng, 0.0, 1.0))
            .collect();
        assert!(draws.iter().all(|&t| t > 0.0 && t < 1.0));
        draws.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = draws[draws.len() / 2];
        assert!((median - 0.5).abs() < 0.01, "median {median}");
    }

    #[test]
    fn logitnormal_reproducible() {
        let a: Vec<f64> = {
            let mut r = seeded(5);
            (0..10).map(|_| sample_timestep_logitnormal(&mut r, 0.3, 0.8)).collect()
        };
        let b: Vec<f64> = {
            let mut r = seeded(5);
            (0..10).map(|_| sample_timestep_logitnormal(&mut r, 0.3, 0.8)).collect()
        };
        assert_eq!(a, b);
    }

    #[test]
    fn closed_form_special_points() {
        assert_eq!(gaussian_velocity_coefficient(0.5, 1.0), 0.0);
        assert!((gaussian_velocity_coefficient(1.0 - 1e-9, 2.0) - 1.0).abs() < 1e-6);
        assert_eq!(closed_form_velocity_gaussian(&[0.0, 0.0], 0.3, 2.0), vec![0.0, 0.0]);
    }

    /// Regress `x1 - x0` on `x_tau` by Monte Carlo; the slope is the
    /// conditional-expectation coefficient for jointly Gaussian variables.
    fn monte_carlo_coefficient(tau: f64, sigma1: f64, n: usize, seed: u64) -> f64 {
        let mut rng = seeded(seed);
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for _ in 0..n {
            let x1 = sigma1 * standard_normal(&mut rng);
            let x0 = standard_normal(&mut rng);
            let xt = tau * x1 + (1.0 - tau) * x0;
            sxy += xt * (x1 - x0);
            sxx += xt * xt;
        }
        sxy / sxx
    }

    #[test]
    fn closed_form_matches_monte_carlo() {
        for &(tau, sigma1) in &[(0.5, 1.0), (0.3, 2.0), (0.8, 2.0), (0.99, 1.5)] {
            let mc = monte_carlo_coefficient(tau, sigma1, 1_000_000, 17);
            let exact = gaussian_velocity_coefficient(tau, sigma1);
            assert!((mc - exact).abs() < 0.01, "tau {tau}: mc {mc} vs {exact}");
        }
    }
}
