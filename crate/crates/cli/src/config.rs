//! Experiment configuration: one TOML file, unknown keys rejected.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use dforce_core::flow::{DenoiserConfig, TrainConfig};
use dforce_core::forcing::{Dynamics, RolloutConfig, ToyVideoSpec};
use dforce_core::preference::{DpoConfig, RewardConfig, RewardTrainConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    /// Independent (or AR(1)) Gaussian frames with a closed-form velocity.
    GaussianToy,
    /// A point moving at constant velocity.
    Blob,
    /// A point bouncing inside a box.
    Bounce,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub dim: usize,
    pub frames: usize,
    #[serde(default)]
    pub process_noise: f64,
    #[serde(default = "default_speed")]
    pub speed: f64,
    #[serde(default = "default_sigma1")]
    pub sigma1: f64,
    #[serde(default)]
    pub rho: f64,
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_one")]
    pub num_prompts: usize,
}

fn default_speed() -> f64 {
    0.1
}

fn default_sigma1() -> f64 {
    2.0
}

fn default_half_width() -> f64 {
    1.0
}

fn default_one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_freqs")]
    pub time_freqs: usize,
}

fn default_hidden() -> usize {
    64
}

fn default_freqs() -> usize {
    8
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { hidden: default_hidden(), time_freqs: default_freqs() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    #[serde(default = "default_count")]
    pub count: usize,
    /// AD difference for sampling plans.
    #[serde(default)]
    pub diff: usize,
    /// Paired rollouts per history-noise setting.
    #[serde(default = "default_rollouts")]
    pub rollouts: usize,
}

fn default_count() -> usize {
    256
}

fn default_rollouts() -> usize {
    8
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self { count: default_count(), diff: 0, rollouts: default_rollouts() }
    }
}

/// Reward-model experiment: synthesized clean-versus-distorted pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardSection {
    pub train_pairs: usize,
    pub test_pairs: usize,
    #[serde(default = "default_hidden_reward")]
    pub hidden: usize,
    #[serde(default = "default_theta")]
    pub theta_tie: f64,
    pub train: RewardTrainConfig,
}

fn default_hidden_reward() -> usize {
    16
}

fn default_theta() -> f64 {
    1.5
}

/// What ranks generations when building preference triplets.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DpoScorer {
    /// Negative drift from the dataset's own dynamics.
    #[default]
    Oracle,
    /// A reward model trained first from the `[reward]` section.
    Reward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DpoSection {
    /// Number of prompt draws per stage; each yields one triplet.
    pub prompts: usize,
    #[serde(default)]
    pub scorer: DpoScorer,
    pub config: DpoConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelConfig,
    pub train: TrainConfig,
    #[serde(default)]
    pub sample: SampleConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rollout: Option<RolloutConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<RewardSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dpo: Option<DpoSection>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).context("invalid experiment config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn spec(&self) -> ToyVideoSpec {
        let d = &self.data;
        let dynamics = match self.kind {
            ExperimentKind::GaussianToy => Dynamics::LinearGaussian { sigma1: d.sigma1, rho: d.rho },
            ExperimentKind::Blob => Dynamics::ConstantVelocity { speed: d.speed, start_scale: 1.0 },
            ExperimentKind::Bounce => Dynamics::Bounce { speed: d.speed, half_width: d.half_width },
        };
        ToyVideoSpec {
            dynamics,
            dim: d.dim,
            frames: d.frames,
            process_noise: d.process_noise,
            num_prompts: d.num_prompts,
        }
    }

    /// The window the denoiser is built for: the training clip length.
    pub fn window(&self) -> usize {
        self.data.frames
    }

    pub fn denoiser(&self) -> DenoiserConfig {
        DenoiserConfig {
            hidden: self.model.hidden,
            time_freqs: self.model.time_freqs,
            num_prompts: self.data.num_prompts,
            ..DenoiserConfig::new(self.data.dim, self.window())
        }
    }

    pub fn reward_config(&self) -> Option<RewardConfig> {
        self.reward.as_ref().map(|r| RewardConfig {
            dim: self.data.dim,
            hidden: r.hidden,
            theta_tie: r.theta_tie,
        })
    }

    /// Field-level checks, run before any compute.
    pub fn validate(&self) -> Result<()> {
        let d = &self.data;
        if d.dim == 0 {
            bail!("data.dim must be at least 1");
        }
        if d.frames == 0 {
            bail!("data.frames must be at least 1");
        }
        if d.num_prompts == 0 {
            bail!("data.num_prompts must be at least 1");
        }
        if !(d.process_noise >= 0.0) {
            bail!("data.process_noise must be non-negative");
        }
        if !(d.sigma1 > 0.0) {
            bail!("data.sigma1 must be positive");
        }
        if !(-1.0..=1.0).contains(&d.rho) {
            bail!("data.rho must lie in [-1, 1]");
        }
        if !(d.half_width > 0.0) {
            bail!("data.half_width must be positive");
        }
        self.denoiser().validate().context("model")?;
        self.train.validate().context("train")?;
        if self.sample.count == 0 {
            bail!("sample.count must be at least 1");
        }
        if self.sample.diff > self.train.max_timestep {
            bail!("sample.diff must not exceed train.max_timestep");
        }
        if let Some(r) = &self.rollout {
            r.validate().context("rollout")?;
            if r.max_timestep != self.train.max_timestep {
                bail!("rollout.max_timestep must equal train.max_timestep");
            }
            if r.window() != d.frames {
                bail!("rollout.f_prev + rollout.f_new must equal data.frames");
            }
            if self.sample.rollouts == 0 {
                bail!("sample.rollouts must be at least 1");
            }
        }
        if let Some(r) = &self.reward {
            if r.train_pairs == 0 || r.test_pairs == 0 {
                bail!("reward.train_pairs and reward.test_pairs must be at least 1");
            }
            if d.frames < 2 {
                bail!("reward models need data.frames of at least 2");
            }
            if !(r.theta_tie > 1.0) {
                bail!("reward.theta_tie must exceed 1");
            }
        }
        if let Some(p) = &self.dpo {
            if p.prompts == 0 {
                bail!("dpo.prompts must be at least 1");
            }
            p.config.validate().context("dpo.config")?;
            if p.scorer == DpoScorer::Reward && self.reward.is_none() {
                bail!("dpo.scorer = \"reward\" needs a [reward] section");
            }
        }
        Ok(())
    }
}
