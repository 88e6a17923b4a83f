//! Flow-DPO on (chosen, rejected, prompt) triplets with staged reference
//! refresh.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{RewardModel, Triplet};
use crate::error::{Error, Result};
use crate::flow::{
    interpolate, sample_timestep_logitnormal, target_velocity, Denoiser, LatentSequence,
    LossAndGrad, Optimizer, OptimizerKind, VelocityField,
};
use crate::rng::{normal_vec, seeded, split, SeededRng};

/// Anything that scores a generated clip; higher is better.
pub trait SequenceScorer {
    fn score(&self, x: &LatentSequence, prompt: usize) -> Result<f64>;
}

impl SequenceScorer for RewardModel {
    fn score(&self, x: &LatentSequence, _prompt: usize) -> Result<f64> {
        RewardModel::score(self, x)
    }
}

impl<F: Fn(&LatentSequence, usize) -> f64> SequenceScorer for F {
    fn score(&self, x: &LatentSequence, prompt: usize) -> Result<f64> {
        Ok(self(x, prompt))
    }
}

/// Noise and flow times used for all four loss terms of one triplet.
#[derive(Debug, Clone, PartialEq)]
pub struct DpoDraw {
    pub x0_chosen: LatentSequence,
    pub x0_rejected: LatentSequence,
    pub taus: Vec<f64>,
}

impl DpoDraw {
    pub fn shared(x0: LatentSequence, taus: Vec<f64>) -> Self {
        Self { x0_chosen: x0.clone(), x0_rejected: x0, taus }
    }

    /// One logit-normal flow time for every frame; the rejected sample gets
    /// its own noise unless `shared`.
    pub fn sample<R: Rng + ?Sized>(rng: &mut R, frames: usize, dim: usize, shared: bool) -> Self {
        let tau = sample_timestep_logitnormal(rng, 0.0, 1.0);
        let mut noise = || LatentSequence::new(frames, dim, normal_vec(rng, frames * dim)).expect("noise shape");
        let x0 = noise();
        if shared {
            Self::shared(x0, vec![tau; frames])
        } else {
            let x0_rejected = noise();
            Self { x0_chosen: x0, x0_rejected, taus: vec![tau; frames] }
        }
    }
}

/// `1/2` mean over frames of `|u(x_tau) - (x1 - x0)|^2`; accumulates its
/// gradient into `grad` when given.
fn half_sq_error(
    model: &Denoiser,
    x1: &LatentSequence,
    x0: &LatentSequence,
    taus: &[f64],
    prompt: usize,
    grad: Option<&mut [f64]>,
) -> Result<f64> {
    let x_t = interpolate(x1, x0, taus)?;
    let y = target_velocity(x1, x0)?;
    let inv_f = 1.0 / x1.frames() as f64;
    let u = match grad {
        Some(g) => model.backprop(&x_t, taus, prompt, g, |u| {
            let mut g_u = u.clone();
            for (gv, t) in g_u.data_mut().iter_mut().zip(y.data()) {
                *gv = (*gv - t) * inv_f;
            }
            g_u
        })?,
        None => model.velocity(&x_t, taus, prompt)?,
    };
    let sq: f64 = u.data().iter().zip(y.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(0.5 * sq * inv_f)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

/// `z = beta/2 * ((L_model^w - L_model^l) - (L_ref^w - L_ref^l))` and the
/// model's gradients of `L^w` and `L^l`.
fn dpo_logit(
    model: &Denoiser,
    reference: &Denoiser,
    t: &Triplet,
    draw: &DpoDraw,
    beta: f64,
    grads: Option<(&mut [f64], &mut [f64])>,
) -> Result<f64> {
    let (gw, gl) = match grads {
        Some((a, b)) => (Some(a), Some(b)),
        None => (None, None),
    };
    let mw = half_sq_error(model, &t.chosen, &draw.x0_chosen, &draw.taus, t.prompt, gw)?;
    let ml = half_sq_error(model, &t.rejected, &draw.x0_rejected, &draw.taus, t.prompt, gl)?;
    let rw = half_sq_error(reference, &t.chosen, &draw.x0_chosen, &draw.taus, t.prompt, None)?;
    let rl = half_sq_error(reference, &t.rejected, &draw.x0_rejected, &draw.taus, t.prompt, None)?;
    let z = 0.5 * beta * ((mw - ml) - (rw - rl));
    if !z.is_finite() {
        return Err(Error::non_finite("preference logit"));
    }
    Ok(z)
}

/// `-log sigmoid(-z)` for one triplet, with the gradient on `model` only.
pub fn dpo_loss(
    model: &Denoiser,
    reference: &Denoiser,
    triplet: &Triplet,
    draw: &DpoDraw,
    beta: f64,
) -> Result<LossAndGrad> {
    dpo_batch_loss(model, reference, std::slice::from_ref(triplet), std::slice::from_ref(draw), beta)
}

/// Mean of the per-triplet losses.
pub fn dpo_batch_loss(
    model: &Denoiser,
    reference: &Denoiser,
    triplets: &[Triplet],
    draws: &[DpoDraw],
    beta: f64,
) -> Result<LossAndGrad> {
    check_batch(model, reference, triplets, draws, beta)?;
    let n = model.num_params();
    let mut grad = vec![0.0; n];
    let mut gw = vec![0.0; n];
    let mut gl = vec![0.0; n];
    let mut loss = 0.0;
    let b = triplets.len() as f64;
    for (t, d) in triplets.iter().zip(draws) {
        gw.iter_mut().for_each(|g| *g = 0.0);
        gl.iter_mut().for_each(|g| *g = 0.0);
        let z = dpo_logit(model, reference, t, d, beta, Some((&mut gw, &mut gl)))?;
        loss += softplus(z) / b;
        let c = sigmoid(z) * 0.5 * beta / b;
        for ((g, w), l) in grad.iter_mut().zip(&gw).zip(&gl) {
            *g += c * (w - l);
        }
    }
    Ok(LossAndGrad { loss, grad })
}

/// Mean implicit preference `sigmoid(-z)` over the triplets.
pub fn dpo_margin(
    model: &Denoiser,
    reference: &Denoiser,
    triplets: &[Triplet],
    draws: &[DpoDraw],
    beta: f64,
) -> Result<f64> {
    check_batch(model, reference, triplets, draws, beta)?;
    let mut total = 0.0;
    for (t, d) in triplets.iter().zip(draws) {
        total += sigmoid(-dpo_logit(model, reference, t, d, beta, None)?);
    }
    Ok(total / triplets.len() as f64)
}

fn check_batch(model: &Denoiser, reference: &Denoiser, triplets: &[Triplet], draws: &[DpoDraw], beta: f64) -> Result<()> {
    if model.config() != reference.config() {
        return Err(Error::domain("model and reference architectures differ"));
    }
    if triplets.is_empty() || triplets.len() != draws.len() {
        return Err(Error::shape(format!("{} draws", triplets.len()), format!("{} draws", draws.len())));
    }
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(Error::domain(format!("temperature {beta} must be non-negative")));
    }
    Ok(())
}

/// Per prompt, generates `k` samples, scores them, and pairs the best with
/// the worst. Also returns every score, in generation order.
fn triplets_with_scores<G, S, R>(
    mut generate: G,
    scorer: &S,
    prompts: &[usize],
    k: usize,
    rng: &mut R,
) -> Result<(Vec<Triplet>, Vec<f64>)>
where
    G: FnMut(usize, &mut R) -> Result<LatentSequence>,
    S: SequenceScorer + ?Sized,
    R: Rng + ?Sized,
{
    if k < 2 {
        return Err(Error::domain(format!("need at least two samples per prompt, got {k}")));
    }
    let mut triplets = Vec::with_capacity(prompts.len());
    let mut all = Vec::with_capacity(prompts.len() * k);
    for &prompt in prompts {
        let mut samples = Vec::with_capacity(k);
        let mut scores = Vec::with_capacity(k);
        for _ in 0..k {
            let x = generate(prompt, rng)?;
            scores.push(scorer.score(&x, prompt)?);
            samples.push(x);
        }
        let best = (0..k).fold(0, |b, i| if scores[i] > scores[b] { i } else { b });
        let mut worst = (0..k).rev().fold(k - 1, |w, i| if scores[i] < scores[w] { i } else { w });
        if worst == best {
            worst = if best == 0 { 1 } else { 0 };
        }
        let mut t = Triplet::new(samples[best].clone(), samples[worst].clone(), prompt)?;
        t.chosen_reward = scores[best];
        t.rejected_reward = scores[worst];
        triplets.push(t);
        all.extend(scores);
    }
    Ok((triplets, all))
}

/// One best-versus-worst triplet per prompt from `k` scored generations.
pub fn build_triplets<G, S, R>(generate: G, scorer: &S, prompts: &[usize], k: usize, rng: &mut R) -> Result<Vec<Triplet>>
where
    G: FnMut(usize, &mut R) -> Result<LatentSequence>,
    S: SequenceScorer + ?Sized,
    R: Rng + ?Sized,
{
    Ok(triplets_with_scores(generate, scorer, prompts, k, rng)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpoConfig {
    pub beta: f64,
    /// Stages; the reference is refreshed at the start of each one.
    pub stages: usize,
    /// Optimizer steps per stage, i.e. the reference refresh interval.
    pub steps_per_stage: usize,
    #[serde(default = "default_k")]
    pub samples_per_prompt: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_true")]
    pub shared_noise: bool,
    #[serde(default)]
    pub seed: u64,
}

fn default_k() -> usize {
    8
}

fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Adam
}

fn default_true() -> bool {
    true
}

impl Default for DpoConfig {
    fn default() -> Self {
        Self {
            beta: 50.0,
            stages: 3,
            steps_per_stage: 50,
            samples_per_prompt: default_k(),
            batch_size: 8,
            learning_rate: 1e-3,
            optimizer: default_optimizer(),
            weight_decay: 0.0,
            shared_noise: true,
            seed: 0,
        }
    }
}

impl DpoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::domain(format!("beta {} must be positive", self.beta)));
        }
        if self.stages == 0 || self.batch_size == 0 || self.samples_per_prompt < 2 {
            return Err(Error::domain("stages and batch size must be positive, samples per prompt at least 2"));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::domain(format!("learning rate {} must be positive", self.learning_rate)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: usize,
    /// Mean score of generations from a fixed noise stream, shared by every
    /// stage, before and after the stage's updates.
    pub reward_before: f64,
    pub reward_after: f64,
    /// Mean score of the generations the stage's triplets were built from.
    pub mean_reward: f64,
    pub mean_chosen_reward: f64,
    pub mean_rejected_reward: f64,
    /// Loss of the first batch, before any update against the new reference.
    pub first_loss: f64,
    pub losses: Vec<f64>,
    /// Implicit preference over the stage's triplets on fixed evaluation draws.
    pub margin_before: f64,
    pub margin_after: f64,
}

/// Staged Flow-DPO. Each stage freezes the current model as the reference,
/// builds fresh triplets from the model's own generations, then runs
/// `steps_per_stage` updates.
pub fn dpo_stage_loop<G, S>(
    mut model: Denoiser,
    cfg: &DpoConfig,
    prompts: &[usize],
    mut generate: G,
    scorer: &S,
) -> Result<(Denoiser, Vec<StageReport>)>
where
    G: FnMut(&Denoiser, usize, &mut SeededRng) -> Result<LatentSequence>,
    S: SequenceScorer + ?Sized,
{
    cfg.validate()?;
    if prompts.is_empty() {
        return Err(Error::domain("preference training needs at least one prompt"));
    }
    let mut opt = Optimizer::new(cfg.optimizer, model.num_params(), cfg.learning_rate, cfg.weight_decay);
    let mut train_rng = seeded(cfg.seed);
    let evaluate = |model: &Denoiser, generate: &mut G| -> Result<f64> {
        let mut rng = split(cfg.seed, 0);
        let mut total = 0.0;
        for &p in prompts {
            for _ in 0..cfg.samples_per_prompt {
                total += scorer.score(&generate(model, p, &mut rng)?, p)?;
            }
        }
        Ok(total / (prompts.len() * cfg.samples_per_prompt) as f64)
    };
    let mut reward = evaluate(&model, &mut generate)?;
    let mut reports = Vec::with_capacity(cfg.stages);
    for stage in 0..cfg.stages {
        let reference = model.clone();
        let mut gen_rng = split(cfg.seed, 2 * stage as u64 + 1);
        let (triplets, scores) = triplets_with_scores(
            |p, r| generate(&model, p, r),
            scorer,
            prompts,
            cfg.samples_per_prompt,
            &mut gen_rng,
        )?;
        let (frames, dim) = (triplets[0].chosen.frames(), triplets[0].chosen.dim());
        let mut eval_rng = split(cfg.seed, 2 * stage as u64 + 2);
        let eval_draws: Vec<DpoDraw> = triplets
            .iter()
            .map(|_| DpoDraw::sample(&mut eval_rng, frames, dim, cfg.shared_noise))
            .collect();
        let margin_before = dpo_margin(&model, &reference, &triplets, &eval_draws, cfg.beta)?;

        let b = cfg.batch_size.min(triplets.len());
        let mut losses = Vec::with_capacity(cfg.steps_per_stage);
        let mut first_loss = f64::NAN;
        // A zero-step stage still measures its first batch.
        for step in 0..cfg.steps_per_stage.max(1) {
            let batch: Vec<Triplet> = sample(&mut train_rng, triplets.len(), b)
                .into_iter()
                .map(|i| triplets[i].clone())
                .collect();
            let draws: Vec<DpoDraw> = batch
                .iter()
                .map(|_| DpoDraw::sample(&mut train_rng, frames, dim, cfg.shared_noise))
                .collect();
            let LossAndGrad { loss, grad } = dpo_batch_loss(&model, &reference, &batch, &draws, cfg.beta)?;
            if step == 0 {
                first_loss = loss;
            }
            if step >= cfg.steps_per_stage {
                break;
            }
            opt.step(model.params_mut(), &grad);
            if !model.is_finite() {
                return Err(Error::non_finite(format!("parameters at stage {stage}, step {step}")));
            }
            losses.push(loss);
        }
        let margin_after = dpo_margin(&model, &reference, &triplets, &eval_draws, cfg.beta)?;
        let reward_before = reward;
        reward = evaluate(&model, &mut generate)?;
        let n = triplets.len() as f64;
        reports.push(StageReport {
            stage,
            reward_before,
            reward_after: reward,
            mean_reward: scores.iter().sum::<f64>() / scores.len() as f64,
            mean_chosen_reward: triplets.iter().map(|t| t.chosen_reward).sum::<f64>() / n,
            mean_rejected_reward: triplets.iter().map(|t| t.rejected_reward).sum::<f64>() / n,
            first_loss,
            losses,
            margin_before,
            margin_after,
        });
    }
    Ok((model, reports))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::DenoiserConfig;
    use crate::rng::seeded;

    fn tiny() -> Denoiser {
        let cfg = DenoiserConfig { hidden: 6, time_freqs: 2, num_prompts: 2, ..DenoiserConfig::new(2, 4) };
        Denoiser::new(cfg, &mut seeded(1)).unwrap()
    }

    fn triplet(seed: u64) -> Triplet {
        let mut rng = seeded(seed);
        let a = LatentSequence::new(4, 2, normal_vec(&mut rng, 8)).unwrap();
        let b = LatentSequence::new(4, 2, normal_vec(&mut rng, 8)).unwrap();
        Triplet::new(a, b, 1).unwrap()
    }

    #[test]
    fn identity_point_is_ln2() {
        let m = tiny();
        let t = triplet(3);
        let d = DpoDraw::sample(&mut seeded(4), 4, 2, true);
        let out = dpo_loss(&m, &m, &t, &d, 10.0).unwrap();
        assert_eq!(out.loss, std::f64::consts::LN_2);
        assert!(out.grad.iter().any(|g| *g != 0.0));
    }

    #[test]
    fn zero_beta_is_ln2() {
        let m = tiny();
        let mut r = tiny();
        r.params_mut()[0] += 0.5;
        let d = DpoDraw::sample(&mut seeded(4), 4, 2, false);
        let out = dpo_loss(&m, &r, &triplet(3), &d, 0.0).unwrap();
        assert_eq!(out.loss, std::f64::consts::LN_2);
    }

    #[test]
    fn rejects_bad_inputs() {
        let m = tiny();
        let d = DpoDraw::sample(&mut seeded(4), 4, 2, true);
        assert!(dpo_batch_loss(&m, &m, &[], &[], 1.0).is_err());
        assert!(dpo_batch_loss(&m, &m, &[triplet(1)], &[d.clone(), d], 1.0).is_err());
        let x = triplet(1).chosen;
        assert!(Triplet::new(x.clone(), x, 0).is_err());
    }

    #[test]
    fn two_samples_ordered_by_reward() {
        let scorer = |x: &LatentSequence, _p: usize| x.data()[0];
        let ts = build_triplets(
            |_, r: &mut SeededRng| Ok(LatentSequence::new(3, 1, normal_vec(r, 3)).unwrap()),
            &scorer,
            &[0, 1, 2],
            2,
            &mut seeded(2),
        )
        .unwrap();
        for t in &ts {
            assert!(t.chosen_reward >= t.rejected_reward);
            assert_eq!(t.chosen.data()[0], t.chosen_reward);
        }
        let fail = build_triplets(
            |_, r: &mut SeededRng| Ok(LatentSequence::new(3, 1, normal_vec(r, 3)).unwrap()),
            &scorer,
            &[0],
            1,
            &mut seeded(2),
        );
        assert!(fail.is_err());
    }
}
