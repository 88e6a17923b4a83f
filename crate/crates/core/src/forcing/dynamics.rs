//! Synthetic video dynamics standing in for real clips, with exact
//! trajectory oracles.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::flow::LatentSequence;
use crate::rng::{normal_vec, standard_normal};

/// How a clip's latent evolves from frame to frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Dynamics {
    /// A point moving at the prompt's constant velocity, plus a random walk
    /// of scale `process_noise`.
    ConstantVelocity { speed: f64, start_scale: f64 },
    /// The same motion folded into the box `[-half_width, half_width]^D` by
    /// elastic reflection.
    Bounce { speed: f64, half_width: f64 },
    /// Stationary AR(1) process `x' = rho x + sqrt(1 - rho^2) sigma1 eps`
    /// with marginal `N(0, sigma1^2 I)`.
    LinearGaussian { sigma1: f64, rho: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyVideoSpec {
    pub dynamics: Dynamics,
    pub dim: usize,
    pub frames: usize,
    #[serde(default)]
    pub process_noise: f64,
    #[serde(default = "one")]
    pub num_prompts: usize,
}

fn one() -> usize {
    1
}

/// A clean clip and the prompt that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub frames: LatentSequence,
    pub prompt: usize,
}

/// Folds `q` into `[-w, w]` as a point reflecting elastically off the walls.
fn reflect(q: f64, w: f64) -> f64 {
    let period = 4.0 * w;
    let m = (q + w).rem_euclid(period);
    if m <= 2.0 * w {
        m - w
    } else {
        3.0 * w - m
    }
}

impl ToyVideoSpec {
    pub fn constant_velocity(dim: usize, frames: usize, speed: f64, process_noise: f64) -> Self {
        Self {
            dynamics: Dynamics::ConstantVelocity { speed, start_scale: 1.0 },
            dim,
            frames,
            process_noise,
            num_prompts: 1,
        }
    }

    pub fn bounce(dim: usize, frames: usize, speed: f64, half_width: f64) -> Self {
        Self {
            dynamics: Dynamics::Bounce { speed, half_width },
            dim,
            frames,
            process_noise: 0.0,
            num_prompts: 1,
        }
    }

    pub fn linear_gaussian(dim: usize, frames: usize, sigma1: f64, rho: f64) -> Self {
        Self {
            dynamics: Dynamics::LinearGaussian { sigma1, rho },
            dim,
            frames,
            process_noise: 0.0,
            num_prompts: 1,
        }
    }

    /// Per-frame displacement for `prompt`:
    /// `v[d] = speed * cos(2 pi prompt / C + pi d / (2 D))`.
    pub fn velocity(&self, prompt: usize) -> Vec<f64> {
        let speed = match self.dynamics {
            Dynamics::ConstantVelocity { speed, .. } | Dynamics::Bounce { speed, .. } => speed,
            Dynamics::LinearGaussian { .. } => 0.0,
        };
        let base = std::f64::consts::TAU * prompt as f64 / self.num_prompts.max(1) as f64;
        (0..self.dim)
            .map(|d| {
                speed * (base + std::f64::consts::FRAC_PI_2 * d as f64 / self.dim as f64).cos()
            })
            .collect()
    }

    fn sample_clip<R: Rng + ?Sized>(&self, rng: &mut R) -> Clip {
        let (f, d) = (self.frames, self.dim);
        let prompt = if self.num_prompts > 1 { rng.random_range(0..self.num_prompts) } else { 0 };
        let mut data = Vec::with_capacity(f * d);
        match self.dynamics {
            Dynamics::ConstantVelocity { start_scale, .. } => {
                let v = self.velocity(prompt);
                let p0: Vec<f64> = normal_vec(rng, d).into_iter().map(|x| start_scale * x).collect();
                let mut walk = vec![0.0; d];
                for i in 0..f {
                    if i > 0 && self.process_noise > 0.0 {
                        for w in walk.iter_mut() {
                            *w += self.process_noise * standard_normal(rng);
                        }
                    }
                    data.extend((0..d).map(|k| p0[k] + i as f64 * v[k] + walk[k]));
                }
            }
            Dynamics::Bounce { half_width, .. } => {
                let v = self.velocity(prompt);
                let p0: Vec<f64> = (0..d).map(|_| rng.random_range(-half_width..=half_width)).collect();
                let mut walk = vec![0.0; d];
                for i in 0..f {
                    if i > 0 && self.process_noise > 0.0 {
                        for w in walk.iter_mut() {
                            *w += self.process_noise * standard_normal(rng);
                        }
                    }
                    data.extend((0..d).map(|k| reflect(p0[k] + i as f64 * v[k] + walk[k], half_width)));
                }
            }
            Dynamics::LinearGaussian { sigma1, rho } => {
                let innov = (1.0 - rho * rho).max(0.0).sqrt() * sigma1;
                let mut x: Vec<f64> = normal_vec(rng, d).into_iter().map(|z| sigma1 * z).collect();
                data.extend_from_slice(&x);
                for _ in 1..f {
                    for xk in x.iter_mut() {
                        *xk = rho * *xk + innov * standard_normal(rng);
                    }
                    data.extend_from_slice(&x);
                }
            }
        }
        Clip {
            frames: LatentSequence::new(f, d, data).expect("clip shape"),
            prompt,
        }
    }

    /// Noise-free trajectory of `frames` frames anchored on the first
    /// `window` frames of `observed`.
    pub fn oracle_trajectory(&self, observed: &LatentSequence, window: usize, prompt: usize, frames: usize) -> LatentSequence {
        let d = observed.dim();
        let w = window.clamp(1, observed.frames());
        let mut out = LatentSequence::zeros(frames, d);
        match self.dynamics {
            Dynamics::ConstantVelocity { .. } => {
                let v = self.velocity(prompt);
                // Offset that best explains the window under the known velocity.
                let anchor: Vec<f64> = (0..d)
                    .map(|k| (0..w).map(|i| observed.frame(i)[k] - i as f64 * v[k]).sum::<f64>() / w as f64)
                    .collect();
                for i in 0..frames {
                    for k in 0..d {
                        out.frame_mut(i)[k] = anchor[k] + i as f64 * v[k];
                    }
                }
            }
            Dynamics::Bounce { half_width, .. } => {
                let v = self.velocity(prompt);
                let start = observed.frame(0);
                for i in 0..frames {
                    for k in 0..d {
                        out.frame_mut(i)[k] = reflect(start[k] + i as f64 * v[k], half_width);
                    }
                }
            }
            Dynamics::LinearGaussian { rho, .. } => {
                for i in 0..frames {
                    if i < w {
                        out.frame_mut(i).copy_from_slice(observed.frame(i));
                    } else {
                        let decay = rho.powi((i + 1 - w) as i32);
                        let last = observed.frame(w - 1).to_vec();
                        for (o, x) in out.frame_mut(i).iter_mut().zip(last) {
                            *o = decay * x;
                        }
                    }
                }
            }
        }
        out
    }
}

/// `n` clips drawn from `spec`; a pure function of the generator state.
pub fn make_toy_dataset<R: Rng + ?Sized>(spec: &ToyVideoSpec, n: usize, rng: &mut R) -> Vec<Clip> {
    (0..n).map(|_| spec.sample_clip(rng)).collect()
}

/// Mean, over the frames after the first `window`, of the per-frame RMS
/// deviation from the oracle trajectory anchored on that window. Sequences
/// no longer than the window are scored over all frames.
pub fn drift_metric(generated: &LatentSequence, spec: &ToyVideoSpec, prompt: usize, window: usize) -> f64 {
    let f = generated.frames();
    if f == 0 {
        return 0.0;
    }
    let oracle = spec.oracle_trajectory(generated, window, prompt, f);
    let start = if f > window { window } else { 0 };
    let d = generated.dim() as f64;
    let total: f64 = (start..f)
        .map(|i| {
            let sq: f64 = generated
                .frame(i)
                .iter()
                .zip(oracle.frame(i))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            (sq / d).sqrt()
        })
        .sum();
    total / (f - start) as f64
}
