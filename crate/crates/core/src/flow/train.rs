//! Flow-matching loss with analytic gradients, and the training loop.

use serde::{Deserialize, Serialize};

use super::{interpolate, level_to_tau, sample_timestep_logitnormal, target_velocity};
use super::{Denoiser, LatentSequence, Optimizer, OptimizerKind};
use crate::error::{Error, Result};
use crate::rng::{normal_vec, seeded, SeededRng};
use crate::schedule::{FoppSampler, ScheduleVector};

/// One training sequence with its noise draw and per-frame flow times.
#[derive(Debug, Clone)]
pub struct FmExample {
    pub x1: LatentSequence,
    pub x0: LatentSequence,
    pub taus: Vec<f64>,
    pub prompt: usize,
}

#[derive(Debug, Clone)]
pub struct LossAndGrad {
    pub loss: f64,
    pub grad: Vec<f64>,
}

/// Mean over examples and frames of `|u(x_tau) - (x1 - x0)|^2`, with its
/// gradient.
pub fn fm_loss(model: &Denoiser, examples: &[FmExample]) -> Result<LossAndGrad> {
    if examples.is_empty() {
        return Err(Error::domain("flow-matching loss needs at least one example"));
    }
    let mut grad = vec![0.0; model.num_params()];
    let mut loss = 0.0;
    let b = examples.len() as f64;
    for (n, ex) in examples.iter().enumerate() {
        let x_t = interpolate(&ex.x1, &ex.x0, &ex.taus)?;
        let target = target_velocity(&ex.x1, &ex.x0)?;
        let scale = 1.0 / (b * ex.x1.frames() as f64);
        let mut sq = 0.0;
        model
            .backprop(&x_t, &ex.taus, ex.prompt, &mut grad, |u| {
                let mut g = u.clone();
                for (gv, t) in g.data_mut().iter_mut().zip(target.data()) {
                    let r = *gv - t;
                    sq += r * r;
                    *gv = 2.0 * scale * r;
                }
                g
            })
            .map_err(|e| annotate(e, n, &ex.taus))?;
        loss += scale * sq;
    }
    if !loss.is_finite() {
        return Err(Error::non_finite(format!(
            "flow-matching loss over {} examples",
            examples.len()
        )));
    }
    Ok(LossAndGrad { loss, grad })
}

fn annotate(err: Error, example: usize, taus: &[f64]) -> Error {
    match err {
        Error::NonFinite { context } => Error::non_finite(format!(
            "{context} (example {example}, flow times {taus:?})"
        )),
        other => other,
    }
}

/// How per-frame flow times are drawn during training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrainSchedule {
    /// One logit-normal time shared by every frame of a sequence.
    Synchronous,
    /// Non-decreasing discrete per-frame levels drawn by FoPP.
    Fopp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub steps: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub logit_mean: f64,
    #[serde(default = "default_logit_std")]
    pub logit_std: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default = "default_schedule")]
    pub schedule: TrainSchedule,
    /// Number of discrete levels `T` for FoPP schedules and sampling.
    #[serde(default = "default_timesteps")]
    pub max_timestep: usize,
    #[serde(default)]
    pub lr_schedule: LrSchedule,
}

/// Learning rate over the configured number of steps.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine from the base rate down to zero at `steps`.
    Cosine,
}

impl LrSchedule {
    pub fn rate(self, base: f64, step: u64, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                let frac = (step as f64 / total.max(1) as f64).min(1.0);
                0.5 * base * (1.0 + (std::f64::consts::PI * frac).cos())
            }
        }
    }
}

fn default_logit_std() -> f64 {
    1.0
}

fn default_optimizer() -> OptimizerKind {
    OptimizerKind::RmsProp
}

fn default_schedule() -> TrainSchedule {
    TrainSchedule::Synchronous
}

fn default_timesteps() -> usize {
    50
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 32,
            steps: 1000,
            seed: 0,
            logit_mean: 0.0,
            logit_std: default_logit_std(),
            weight_decay: 0.0,
            optimizer: default_optimizer(),
            schedule: default_schedule(),
            max_timestep: default_timesteps(),
            lr_schedule: LrSchedule::Constant,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::domain("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::domain("batch_size must be at least 1"));
        }
        if !(self.logit_std > 0.0) {
            return Err(Error::domain("logit_std must be positive"));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::domain("weight_decay must be non-negative"));
        }
        if self.max_timestep == 0 {
            return Err(Error::domain("max_timestep must be at least 1"));
        }
        Ok(())
    }
}

/// Owns the model, optimizer state and the training random stream.
#[derive(Debug, Clone)]
pub struct Trainer {
    model: Denoiser,
    optimizer: Optimizer,
    config: TrainConfig,
    rng: SeededRng,
    fopp: Option<FoppSampler>,
}

impl Trainer {
    pub fn new(model: Denoiser, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = Optimizer::new(
            config.optimizer,
            model.num_params(),
            config.learning_rate,
            config.weight_decay,
        );
        Ok(Self {
            model,
            optimizer,
            config,
            rng: seeded(config.seed),
            fopp: None,
        })
    }

    pub fn model(&self) -> &Denoiser {
        &self.model
    }

    pub fn into_model(self) -> Denoiser {
        self.model
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn rng_mut(&mut self) -> &mut SeededRng {
        &mut self.rng
    }

    pub fn optimizer_mut(&mut self) -> &mut Optimizer {
        &mut self.optimizer
    }

    /// One step with the configured schedule. `batch` holds clean sequences
    /// and their prompt ids.
    pub fn step(&mut self, batch: &[(LatentSequence, usize)]) -> Result<f64> {
        match self.config.schedule {
            TrainSchedule::Synchronous => {
                let (m, s) = (self.config.logit_mean, self.config.logit_std);
                self.step_with(batch, |rng, frames| {
                    vec![sample_timestep_logitnormal(rng, m, s); frames]
                })
            }
            TrainSchedule::Fopp => {
                let frames = batch.first().map_or(1, |(x, _)| x.frames());
                let t_max = self.config.max_timestep;
                if self.fopp.as_ref().is_none_or(|s| s.frames() != frames) {
                    self.fopp = Some(FoppSampler::new(frames, t_max)?);
                }
                let sampler = self.fopp.take().unwrap();
                let out = self.step_with(batch, |rng, _| level_taus(&sampler.sample(rng)));
                self.fopp = Some(sampler);
                out
            }
        }
    }

    /// One step where `times(rng, frames)` supplies each example's flow
    /// times. Times are drawn before that example's noise.
    pub fn step_with<F>(&mut self, batch: &[(LatentSequence, usize)], mut times: F) -> Result<f64>
    where
        F: FnMut(&mut SeededRng, usize) -> Vec<f64>,
    {
        let examples: Vec<FmExample> = batch
            .iter()
            .map(|(x1, prompt)| {
                let taus = times(&mut self.rng, x1.frames());
                let x0 = LatentSequence::new(
                    x1.frames(),
                    x1.dim(),
                    normal_vec(&mut self.rng, x1.frames() * x1.dim()),
                )
                .expect("noise has the clip's shape");
                FmExample {
                    x1: x1.clone(),
                    x0,
                    taus,
                    prompt: *prompt,
                }
            })
            .collect();
        self.step_examples(&examples)
    }

    /// One optimizer step on fully specified examples.
    pub fn step_examples(&mut self, examples: &[FmExample]) -> Result<f64> {
        let LossAndGrad { loss, grad } = fm_loss(&self.model, examples)?;
        let lr = self.config.lr_schedule.rate(
            self.config.learning_rate,
            self.optimizer.steps_taken(),
            self.config.steps,
        );
        self.optimizer.set_lr(lr);
        self.optimizer.step(self.model.params_mut(), &grad);
        if !self.model.is_finite() {
            return Err(Error::non_finite(format!(
                "parameters after optimizer step {}",
                self.optimizer.steps_taken()
            )));
        }
        Ok(loss)
    }
}

/// Flow times for a discrete schedule.
pub fn level_taus(v: &ScheduleVector) -> Vec<f64> {
    v.timesteps
        .iter()
        .map(|&t| level_to_tau(t, v.max_timestep))
        .collect()
}
