//! Bradley-Terry with ties (Rao-Kupper) and a small sequence reward model.

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{PreferenceLabel, PreferencePair};
use crate::error::{Error, Result};
use crate::flow::{LatentSequence, LossAndGrad, Optimizer, OptimizerKind};
use crate::rng::{seeded, standard_normal};

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `(P(a > b), P(b > a), P(tie))` with strength `exp(r)` and tie parameter
/// `theta > 1`.
pub fn btt_prob(r_a: f64, r_b: f64, theta: f64) -> Result<(f64, f64, f64)> {
    if !(theta > 1.0) || !theta.is_finite() {
        return Err(Error::domain(format!("tie parameter {theta} must exceed 1")));
    }
    let ln_theta = theta.ln();
    let gap = r_a - r_b;
    let p_a = sigmoid(gap - ln_theta);
    let p_b = sigmoid(-gap - ln_theta);
    // Closed form of 1 - p_a - p_b; avoids cancellation for large gaps.
    let p_tie = (theta * theta - 1.0) * p_a * p_b;
    Ok((p_a, p_b, p_tie))
}

/// Negative log-likelihood of `label` and its derivative with respect to the
/// reward gap `r_a - r_b`.
fn nll_and_slope(gap: f64, theta: f64, label: PreferenceLabel) -> (f64, f64) {
    let (p_a, p_b, p_tie) = btt_prob(gap, 0.0, theta).expect("theta checked by caller");
    match label {
        PreferenceLabel::ABetter => (-p_a.ln(), -(1.0 - p_a)),
        PreferenceLabel::BBetter => (-p_b.ln(), 1.0 - p_b),
        PreferenceLabel::Tie => {
            let d_tie = -(p_a * (1.0 - p_a)) + p_b * (1.0 - p_b);
            (-p_tie.ln(), -d_tie / p_tie)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardConfig {
    pub dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_theta")]
    pub theta_tie: f64,
}

fn default_hidden() -> usize {
    16
}

fn default_theta() -> f64 {
    1.5
}

impl RewardConfig {
    pub fn new(dim: usize) -> Self {
        Self { dim, hidden: default_hidden(), theta_tie: default_theta() }
    }

    fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.hidden == 0 {
            return Err(Error::domain("reward model needs positive dim and hidden width"));
        }
        if !(self.theta_tie > 1.0) || !self.theta_tie.is_finite() {
            return Err(Error::domain(format!("tie parameter {} must exceed 1", self.theta_tie)));
        }
        Ok(())
    }

    fn num_params(&self) -> usize {
        let h = self.hidden;
        h * 2 * self.dim + h + h
    }
}

/// Scores a clip from its consecutive frame pairs: each pair `(x_k, x_{k+1})`
/// is mapped to `tanh(W [x_{k+1} - x_k, x_k] + b)`, the features are averaged
/// over the clip and read out by `w`. The scorer never sees the prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardModel {
    config: RewardConfig,
    params: Vec<f64>,
}

impl RewardModel {
    pub fn new<R: Rng + ?Sized>(config: RewardConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (h, z) = (config.hidden, 2 * config.dim);
        let mut params = vec![0.0; config.num_params()];
        let w_scale = 1.0 / (z as f64).sqrt();
        for p in &mut params[..h * z] {
            *p = w_scale * standard_normal(rng);
        }
        let out_scale = 1.0 / (h as f64).sqrt();
        for p in &mut params[h * z + h..] {
            *p = out_scale * standard_normal(rng);
        }
        Ok(Self { config, params })
    }

    pub fn from_params(config: RewardConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        if params.len() != config.num_params() {
            return Err(Error::shape(config.num_params(), params.len()));
        }
        Ok(Self { config, params })
    }

    pub fn config(&self) -> &RewardConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn theta_tie(&self) -> f64 {
        self.config.theta_tie
    }

    fn check(&self, x: &LatentSequence) -> Result<()> {
        if x.dim() != self.config.dim {
            return Err(Error::shape(
                format!("dimension {}", self.config.dim),
                format!("dimension {}", x.dim()),
            ));
        }
        if x.frames() < 2 {
            return Err(Error::domain("reward needs at least two frames"));
        }
        Ok(())
    }

    /// Hidden pre-activations `a` and activations for every frame pair.
    fn features(&self, x: &LatentSequence) -> Vec<(Vec<f64>, Vec<f64>)> {
        let (h, d) = (self.config.hidden, self.config.dim);
        let z = 2 * d;
        let (w, rest) = self.params.split_at(h * z);
        let b = &rest[..h];
        (0..x.frames() - 1)
            .map(|k| {
                let (cur, next) = (x.frame(k), x.frame(k + 1));
                let input: Vec<f64> = (0..d).map(|j| next[j] - cur[j]).chain(cur.iter().copied()).collect();
                let act: Vec<f64> = (0..h)
                    .map(|r| {
                        let row = &w[r * z..(r + 1) * z];
                        (b[r] + row.iter().zip(&input).map(|(a, c)| a * c).sum::<f64>()).tanh()
                    })
                    .collect();
                (input, act)
            })
            .collect()
    }

    pub fn score(&self, x: &LatentSequence) -> Result<f64> {
        self.check(x)?;
        let h = self.config.hidden;
        let w_out = &self.params[self.params.len() - h..];
        let feats = self.features(x);
        let n = feats.len() as f64;
        let r = feats
            .iter()
            .map(|(_, act)| act.iter().zip(w_out).map(|(a, w)| a * w).sum::<f64>())
            .sum::<f64>()
            / n;
        if !r.is_finite() {
            return Err(Error::non_finite("reward score"));
        }
        Ok(r)
    }

    /// Adds `scale * d score / d params` into `grad` and returns the score.
    pub fn accumulate_grad(&self, x: &LatentSequence, scale: f64, grad: &mut [f64]) -> Result<f64> {
        self.check(x)?;
        let (h, z) = (self.config.hidden, 2 * self.config.dim);
        let off_b = h * z;
        let off_w = off_b + h;
        let w_out = &self.params[off_w..];
        let feats = self.features(x);
        let n = feats.len() as f64;
        let mut r = 0.0;
        for (input, act) in &feats {
            for j in 0..h {
                r += act[j] * w_out[j] / n;
                grad[off_w + j] += scale * act[j] / n;
                let g_a = scale * w_out[j] * (1.0 - act[j] * act[j]) / n;
                grad[off_b + j] += g_a;
                for (gw, c) in grad[j * z..(j + 1) * z].iter_mut().zip(input) {
                    *gw += g_a * c;
                }
            }
        }
        Ok(r)
    }
}

/// Mean negative log-likelihood of `pairs` under the model's rewards, with
/// its gradient.
pub fn btt_loss(model: &RewardModel, pairs: &[PreferencePair]) -> Result<LossAndGrad> {
    if pairs.is_empty() {
        return Err(Error::domain("reward loss needs at least one pair"));
    }
    let theta = model.theta_tie();
    let n = pairs.len() as f64;
    let mut grad = vec![0.0; model.params.len()];
    let mut loss = 0.0;
    for pair in pairs {
        let gap = model.score(&pair.a)? - model.score(&pair.b)?;
        let (nll, slope) = nll_and_slope(gap, theta, pair.label);
        loss += nll / n;
        model.accumulate_grad(&pair.a, slope / n, &mut grad)?;
        model.accumulate_grad(&pair.b, -slope / n, &mut grad)?;
    }
    if !loss.is_finite() {
        return Err(Error::non_finite("reward loss"));
    }
    Ok(LossAndGrad { loss, grad })
}

/// Fraction of non-tie pairs whose better member scores strictly higher.
pub fn ranking_accuracy(model: &RewardModel, pairs: &[PreferencePair]) -> Result<f64> {
    let mut hits = 0usize;
    let mut total = 0usize;
    for pair in pairs {
        let gap = model.score(&pair.a)? - model.score(&pair.b)?;
        let correct = match pair.label {
            PreferenceLabel::ABetter => gap > 0.0,
            PreferenceLabel::BBetter => gap < 0.0,
            PreferenceLabel::Tie => continue,
        };
        total += 1;
        hits += usize::from(correct);
    }
    if total == 0 {
        return Err(Error::domain("no decisive pairs to rank"));
    }
    Ok(hits as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardTrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_optimizer")]
    pub optimizer: OptimizerKind,
    #[serde(default)]
    pub seed: u64,
}

fn default_optimizer() -> OptimizerKind {
    OptimizerKind::Adam
}

impl Default for RewardTrainConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            batch_size: 32,
            learning_rate: 1e-2,
            weight_decay: 0.0,
            optimizer: default_optimizer(),
            seed: 0,
        }
    }
}

/// Minibatch training on `pairs`; returns the loss of every step.
pub fn train_reward(
    model: &mut RewardModel,
    pairs: &[PreferencePair],
    cfg: &RewardTrainConfig,
) -> Result<Vec<f64>> {
    if pairs.is_empty() || cfg.batch_size == 0 {
        return Err(Error::domain("reward training needs pairs and a positive batch size"));
    }
    if !(cfg.learning_rate > 0.0) {
        return Err(Error::domain(format!("learning rate {} must be positive", cfg.learning_rate)));
    }
    let mut rng = seeded(cfg.seed);
    let mut opt = Optimizer::new(cfg.optimizer, model.params.len(), cfg.learning_rate, cfg.weight_decay);
    let b = cfg.batch_size.min(pairs.len());
    let mut losses = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let batch: Vec<PreferencePair> = sample(&mut rng, pairs.len(), b)
            .into_iter()
            .map(|i| pairs[i].clone())
            .collect();
        let LossAndGrad { loss, grad } = btt_loss(model, &batch)?;
        opt.step(&mut model.params, &grad);
        if model.params.iter().any(|p| !p.is_finite()) {
            return Err(Error::non_finite("reward parameters"));
        }
        losses.push(loss);
    }
    Ok(losses)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{normal_vec, seeded};

    #[test]
    fn symmetric_and_normalized() {
        let (a, b, t) = btt_prob(0.3, 0.3, 1.5).unwrap();
        assert_eq!(a, b);
        assert!((a + b + t - 1.0).abs() < 1e-12);
        let mut rng = seeded(1);
        for _ in 0..1000 {
            let (ra, rb) = (5.0 * standard_normal(&mut rng), 5.0 * standard_normal(&mut rng));
            let theta = 1.0 + rng.random::<f64>() * 4.0 + 1e-3;
            let (a, b, t) = btt_prob(ra, rb, theta).unwrap();
            assert!((a + b + t - 1.0).abs() < 1e-12);
            assert!(a > 0.0 && b > 0.0 && t > 0.0);
        }
    }

    #[test]
    fn large_gap_prefers_a() {
        let (a, _, _) = btt_prob(20.0, 0.0, 1.5).unwrap();
        assert!(a > 1.0 - 1e-8);
    }

    #[test]
    fn rejects_small_theta() {
        assert!(btt_prob(0.0, 0.0, 1.0).is_err());
        assert!(btt_prob(0.0, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn equal_reward_loss() {
        let theta = 1.5f64;
        let (nll, _) = nll_and_slope(0.0, theta, PreferenceLabel::ABetter);
        assert!((nll - (2.0 + (theta - 1.0)).ln()).abs() < 1e-12);
    }

    #[test]
    fn slope_matches_finite_difference() {
        for label in [PreferenceLabel::ABetter, PreferenceLabel::BBetter, PreferenceLabel::Tie] {
            for gap in [-2.0, -0.1, 0.0, 0.7, 3.0] {
                let (_, s) = nll_and_slope(gap, 1.7, label);
                let e = 1e-6;
                let fd = (nll_and_slope(gap + e, 1.7, label).0 - nll_and_slope(gap - e, 1.7, label).0) / (2.0 * e);
                assert!((s - fd).abs() < 1e-6, "{label:?} {gap}: {s} vs {fd}");
            }
        }
    }

    #[test]
    fn reward_needs_two_frames() {
        let m = RewardModel::new(RewardConfig::new(2), &mut seeded(0)).unwrap();
        let x = LatentSequence::new(1, 2, normal_vec(&mut seeded(1), 2)).unwrap();
        assert!(m.score(&x).is_err());
        assert!(btt_loss(&m, &[]).is_err());
    }
}
