//! Preference optimization: a Bradley-Terry-with-ties reward model,
//! automatic preference pairs from controlled distortions, Flow-DPO with
//! staged reference refresh, and the DMD gradient estimator.

mod btt;
mod distort;
mod dmd;
mod dpo;
mod manual;

pub use btt::{
    btt_loss, btt_prob, ranking_accuracy, train_reward, RewardConfig, RewardModel,
    RewardTrainConfig,
};
pub use distort::{build_auto_pairs, synthesize_distortion, DistortionKind};
pub use dmd::{dmd_gradient, gaussian_score, DmdSample};
pub use dpo::{
    build_triplets, dpo_batch_loss, dpo_loss, dpo_margin, dpo_stage_loop, DpoConfig, DpoDraw,
    SequenceScorer, StageReport,
};
pub use manual::{manual_score, ManualCategory};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::LatentSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PreferenceLabel {
    ABetter,
    BBetter,
    Tie,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PreferencePair {
    pub a: LatentSequence,
    pub b: LatentSequence,
    pub label: PreferenceLabel,
}

impl PreferencePair {
    pub fn new(a: LatentSequence, b: LatentSequence, label: PreferenceLabel) -> Result<Self> {
        a.check_same_shape(&b)?;
        Ok(Self { a, b, label })
    }
}

/// A best/worst pair of generations for one prompt.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplet {
    pub chosen: LatentSequence,
    pub rejected: LatentSequence,
    pub prompt: usize,
    pub chosen_reward: f64,
    pub rejected_reward: f64,
}

impl Triplet {
    pub fn new(chosen: LatentSequence, rejected: LatentSequence, prompt: usize) -> Result<Self> {
        chosen.check_same_shape(&rejected)?;
        if chosen.data() == rejected.data() {
            return Err(Error::domain("chosen and rejected samples are identical"));
        }
        Ok(Self {
            chosen,
            rejected,
            prompt,
            chosen_reward: f64::NAN,
            rejected_reward: f64::NAN,
        })
    }
}
