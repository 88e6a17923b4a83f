//! Experiment pipeline: train, then sample and roll out, then score.
//!
//! Every random stream is split from the root seed by a fixed stream id, so a
//! run is a pure function of the resolved config.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use dforce_core::flow::{
    closed_form_velocity_gaussian, euler_sample, interpolate, Denoiser, LatentSequence, TrainSchedule,
    Trainer, VelocityField,
};
use dforce_core::forcing::{
    df_train_step, drift_metric, make_toy_dataset, rollout, segment_bounds, Dynamics, RolloutConfig,
    ToyVideoSpec,
};
use dforce_core::preference::{
    build_auto_pairs, dpo_stage_loop, ranking_accuracy, train_reward, DpoConfig, PreferencePair,
    RewardModel, RewardTrainConfig, StageReport,
};
use dforce_core::rng::{normal_vec, split, SeededRng};
use dforce_core::schedule::{ad_schedule, FoppSampler};
use rand::RngCore;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::{DpoScorer, ExperimentConfig, ExperimentKind};
use crate::io::{csv_bytes, fmt_f64, write_atomic, write_json};
use crate::{checkpoint, frames};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

mod stream {
    pub const INIT: u64 = 1;
    pub const DATA: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const VELOCITY_EVAL: u64 = 4;
    pub const SAMPLE: u64 = 5;
    pub const ROLLOUT: u64 = 6;
    pub const REWARD_DATA: u64 = 7;
    pub const REWARD_PAIRS: u64 = 8;
    pub const REWARD_INIT: u64 = 9;
    pub const REWARD_TRAIN: u64 = 10;
    pub const DPO: u64 = 11;
}

/// A `u64` seed for a sub-component, offset by any seed set in its own
/// config section.
pub fn derive_seed(root: u64, stream: u64, offset: u64) -> u64 {
    split(root, stream).next_u64().wrapping_add(offset)
}

/// sha256 over the resolved config and the code version.
pub fn config_hash(cfg: &ExperimentConfig) -> Result<String> {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(cfg)?);
    h.update(b"\0dforce ");
    h.update(CODE_VERSION.as_bytes());
    Ok(h.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// One row of `metrics.csv`. `step` is empty for final values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub operation: String,
    pub metric: String,
    pub step: Option<usize>,
    pub value: f64,
}

impl Metric {
    fn new(operation: &str, metric: &str, value: f64) -> Self {
        Self { operation: operation.into(), metric: metric.into(), step: None, value }
    }

    fn at(operation: &str, metric: &str, step: usize, value: f64) -> Self {
        Self { step: Some(step), ..Self::new(operation, metric, value) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub code_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub kind: ExperimentKind,
    pub metrics: Vec<Metric>,
    /// Per-step series keyed `operation.metric`.
    pub series: BTreeMap<String, Vec<f64>>,
    /// Wall-clock seconds per stage. Not written to `report.json`, so that
    /// reruns stay byte-identical.
    #[serde(skip)]
    pub wall_clock: BTreeMap<String, f64>,
}

impl RunReport {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        Ok(Self {
            code_version: CODE_VERSION.into(),
            config_hash: config_hash(cfg)?,
            seed: cfg.seed,
            kind: cfg.kind,
            metrics: Vec::new(),
            series: BTreeMap::new(),
            wall_clock: BTreeMap::new(),
        })
    }

    pub fn metric(&self, operation: &str, metric: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|m| m.operation == operation && m.metric == metric && m.step.is_none())
            .map(|m| m.value)
    }

    fn push(&mut self, m: Metric) {
        self.metrics.push(m);
    }

    fn timed<T>(&mut self, stage: &str, f: impl FnOnce(&mut Self) -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let out = f(self)?;
        self.wall_clock.insert(stage.into(), t0.elapsed().as_secs_f64());
        Ok(out)
    }
}

/// Everything a full run produces besides the report.
#[derive(Debug, Clone, Default)]
pub struct Artifacts {
    pub model: Option<Denoiser>,
    pub reward: Option<RewardModel>,
    pub dpo_model: Option<Denoiser>,
    pub dpo_stages: Vec<StageReport>,
}

fn tail_mean(xs: &[f64]) -> f64 {
    let n = (xs.len() / 100).clamp(1, 100).min(xs.len());
    xs[xs.len() - n..].iter().sum::<f64>() / n as f64
}

/// Trains the denoiser on fresh clips every step.
pub fn train_denoiser(cfg: &ExperimentConfig) -> Result<(Denoiser, Vec<f64>)> {
    let spec = cfg.spec();
    let model = Denoiser::new(cfg.denoiser(), &mut split(cfg.seed, stream::INIT))?;
    let tc = dforce_core::flow::TrainConfig {
        seed: derive_seed(cfg.seed, stream::TRAIN, cfg.train.seed),
        ..cfg.train
    };
    let mut trainer = Trainer::new(model, tc)?;
    let fopp = match tc.schedule {
        TrainSchedule::Fopp => Some(FoppSampler::new(cfg.data.frames, tc.max_timestep)?),
        TrainSchedule::Synchronous => None,
    };
    let mut data = split(cfg.seed, stream::DATA);
    let mut losses = Vec::with_capacity(tc.steps);
    for step in 0..tc.steps {
        let batch: Vec<(LatentSequence, usize)> = make_toy_dataset(&spec, tc.batch_size, &mut data)
            .into_iter()
            .map(|c| (c.frames, c.prompt))
            .collect();
        let loss = match &fopp {
            Some(f) => df_train_step(&mut trainer, f, &batch),
            None => trainer.step(&batch),
        }
        .with_context(|| format!("training step {step}"))?;
        losses.push(loss);
    }
    Ok((trainer.into_model(), losses))
}

/// One clip from noise along an AD plan over all `frames`.
pub fn generate<V: VelocityField + ?Sized>(
    field: &V,
    frames: usize,
    max_timestep: usize,
    diff: usize,
    prompt: usize,
    rng: &mut SeededRng,
) -> dforce_core::Result<LatentSequence> {
    let plan = ad_schedule(frames, max_timestep, diff)?;
    let x0 = LatentSequence::new(frames, field.dim(), normal_vec(rng, frames * field.dim()))?;
    euler_sample(field, &plan, &x0, prompt)
}

/// `count` independent samples; item `i` uses stream `i` of `seed` and
/// prompt `i mod num_prompts`, so the result does not depend on threading.
pub fn sample_many(model: &Denoiser, cfg: &ExperimentConfig, count: usize, diff: usize, seed: u64) -> Result<Vec<LatentSequence>> {
    (0..count)
        .into_par_iter()
        .map(|i| {
            let mut rng = split(seed, i as u64);
            let prompt = i % cfg.data.num_prompts;
            generate(model, cfg.data.frames, cfg.train.max_timestep, diff, prompt, &mut rng)
                .with_context(|| format!("sample {i}"))
        })
        .collect()
}

/// Relative L2 error of the learned velocity against the closed form, over
/// flow times `0.05, 0.10, .., 0.95` with 64 draws each.
pub fn velocity_error(model: &Denoiser, spec: &ToyVideoSpec, sigma1: f64, rng: &mut SeededRng) -> Result<f64> {
    let (f, d) = (spec.frames, spec.dim);
    let (mut num, mut den) = (0.0, 0.0);
    for k in 1..20 {
        let tau = 0.05 * k as f64;
        let taus = vec![tau; f];
        for _ in 0..64 {
            let x1: Vec<f64> = normal_vec(rng, f * d).into_iter().map(|v| sigma1 * v).collect();
            let x1 = LatentSequence::new(f, d, x1)?;
            let x0 = LatentSequence::new(f, d, normal_vec(rng, f * d))?;
            let xt = interpolate(&x1, &x0, &taus)?;
            let u = model.velocity(&xt, &taus, 0)?;
            let exact = closed_form_velocity_gaussian(xt.data(), tau, sigma1);
            for (a, b) in u.data().iter().zip(&exact) {
                num += (a - b) * (a - b);
                den += b * b;
            }
        }
    }
    Ok((num / den).sqrt())
}

/// `|C - C*|_F / |C*|_F` for the sample covariance of flattened clips,
/// against `sigma1^2 rho^|i - j|` between equal coordinates of frames `i, j`.
pub fn covariance_error(samples: &[LatentSequence], sigma1: f64, rho: f64) -> f64 {
    let n = samples.len();
    let (f, d) = (samples[0].frames(), samples[0].dim());
    let m = f * d;
    let mut mean = vec![0.0; m];
    for s in samples {
        for (a, v) in mean.iter_mut().zip(s.data()) {
            *a += v / n as f64;
        }
    }
    let (mut num, mut den) = (0.0, 0.0);
    for a in 0..m {
        for b in 0..m {
            let c = samples
                .iter()
                .map(|s| (s.data()[a] - mean[a]) * (s.data()[b] - mean[b]))
                .sum::<f64>()
                / (n - 1) as f64;
            let target = if a % d == b % d {
                sigma1 * sigma1 * rho.powi((a / d).abs_diff(b / d) as i32)
            } else {
                0.0
            };
            num += (c - target) * (c - target);
            den += target * target;
        }
    }
    (num / den).sqrt()
}

/// Mean per-frame RMS deviation from the oracle, over each segment.
pub fn segment_drift(x: &LatentSequence, spec: &ToyVideoSpec, prompt: usize, rc: &RolloutConfig) -> Vec<f64> {
    let oracle = spec.oracle_trajectory(x, rc.window(), prompt, x.frames());
    let d = x.dim() as f64;
    segment_bounds(rc)
        .into_iter()
        .map(|(a, b)| {
            (a..b)
                .map(|i| {
                    let sq: f64 = x.frame(i).iter().zip(oracle.frame(i)).map(|(p, q)| (p - q) * (p - q)).sum();
                    (sq / d).sqrt()
                })
                .sum::<f64>()
                / (b - a) as f64
        })
        .collect()
}

pub struct RolloutOutcome {
    pub sequences: Vec<LatentSequence>,
    pub drift: Vec<f64>,
    pub segment_drift: Vec<Vec<f64>>,
}

/// `count` rollouts; rollout `i` uses stream `i` of `seed`, so two calls with
/// different history noise are paired seed by seed.
pub fn rollout_many(model: &Denoiser, spec: &ToyVideoSpec, rc: &RolloutConfig, count: usize, seed: u64) -> Result<RolloutOutcome> {
    let runs: Vec<(LatentSequence, f64, Vec<f64>)> = (0..count)
        .into_par_iter()
        .map(|i| {
            let prompt = i % spec.num_prompts;
            let x = rollout(model, rc, prompt, &mut split(seed, i as u64)).with_context(|| format!("rollout {i}"))?;
            let drift = drift_metric(&x, spec, prompt, rc.window());
            let seg = segment_drift(&x, spec, prompt, rc);
            Ok((x, drift, seg))
        })
        .collect::<Result<_>>()?;
    let mut out = RolloutOutcome { sequences: Vec::new(), drift: Vec::new(), segment_drift: Vec::new() };
    for (x, d, s) in runs {
        out.sequences.push(x);
        out.drift.push(d);
        out.segment_drift.push(s);
    }
    Ok(out)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn column_means(rows: &[Vec<f64>]) -> Vec<f64> {
    (0..rows[0].len()).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64).collect()
}

pub struct RewardOutcome {
    pub model: RewardModel,
    pub losses: Vec<f64>,
    pub train_pairs: Vec<PreferencePair>,
    pub test_pairs: Vec<PreferencePair>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

/// Trains the reward model on clean-versus-distorted pairs built from fresh
/// clips, and scores it on a held-out set.
pub fn run_reward(cfg: &ExperimentConfig) -> Result<RewardOutcome> {
    let section = cfg.reward.as_ref().context("config has no [reward] section")?;
    let spec = cfg.spec();
    let mut data = split(cfg.seed, stream::REWARD_DATA);
    let clips: Vec<LatentSequence> = make_toy_dataset(&spec, section.train_pairs + section.test_pairs, &mut data)
        .into_iter()
        .map(|c| c.frames)
        .collect();
    let mut pair_rng = split(cfg.seed, stream::REWARD_PAIRS);
    let train_pairs = build_auto_pairs(&clips[..section.train_pairs], &mut pair_rng)?;
    let test_pairs = build_auto_pairs(&clips[section.train_pairs..], &mut pair_rng)?;
    let rc = cfg.reward_config().expect("reward section present");
    let mut model = RewardModel::new(rc, &mut split(cfg.seed, stream::REWARD_INIT))?;
    let tc = RewardTrainConfig {
        seed: derive_seed(cfg.seed, stream::REWARD_TRAIN, section.train.seed),
        ..section.train
    };
    let losses = train_reward(&mut model, &train_pairs, &tc)?;
    Ok(RewardOutcome {
        train_accuracy: ranking_accuracy(&model, &train_pairs)?,
        test_accuracy: ranking_accuracy(&model, &test_pairs)?,
        model,
        losses,
        train_pairs,
        test_pairs,
    })
}

/// Staged DPO from `base`, scoring generations with the oracle drift or the
/// given reward model.
pub fn run_dpo(cfg: &ExperimentConfig, base: Denoiser, reward: Option<&RewardModel>) -> Result<(Denoiser, Vec<StageReport>)> {
    let section = cfg.dpo.as_ref().context("config has no [dpo] section")?;
    let spec = cfg.spec();
    let dc = DpoConfig { seed: derive_seed(cfg.seed, stream::DPO, section.config.seed), ..section.config };
    let prompts: Vec<usize> = (0..section.prompts).map(|i| i % cfg.data.num_prompts).collect();
    let (frames, t, diff) = (cfg.data.frames, cfg.train.max_timestep, cfg.sample.diff);
    let gen = |m: &Denoiser, p: usize, r: &mut SeededRng| generate(m, frames, t, diff, p, r);
    let out = match section.scorer {
        DpoScorer::Oracle => {
            let score = |x: &LatentSequence, p: usize| -drift_metric(x, &spec, p, 1);
            dpo_stage_loop(base, &dc, &prompts, gen, &score)?
        }
        DpoScorer::Reward => {
            let model = reward.context("the reward scorer needs a trained reward model")?;
            dpo_stage_loop(base, &dc, &prompts, gen, model)?
        }
    };
    Ok(out)
}

fn sample_metrics(report: &mut RunReport, cfg: &ExperimentConfig, model: &Denoiser) -> Result<()> {
    let spec = cfg.spec();
    let seed = derive_seed(cfg.seed, stream::SAMPLE, 0);
    let samples = sample_many(model, cfg, cfg.sample.count, cfg.sample.diff, seed)?;
    match spec.dynamics {
        Dynamics::LinearGaussian { sigma1, rho } => {
            if rho == 0.0 {
                let err = velocity_error(model, &spec, sigma1, &mut split(cfg.seed, stream::VELOCITY_EVAL))?;
                report.push(Metric::new("flow_match", "velocity_rel_l2", err));
            }
            if samples.len() > 1 {
                report.push(Metric::new("euler_sample", "covariance_rel_frobenius", covariance_error(&samples, sigma1, rho)));
            }
        }
        _ => {
            let drift: Vec<f64> = samples
                .iter()
                .enumerate()
                .map(|(i, x)| drift_metric(x, &spec, i % spec.num_prompts, 1))
                .collect();
            report.push(Metric::new("euler_sample", "drift", mean(&drift)));
        }
    }
    Ok(())
}

fn rollout_metrics(report: &mut RunReport, cfg: &ExperimentConfig, model: &Denoiser, rc: &RolloutConfig) -> Result<()> {
    let spec = cfg.spec();
    let seed = derive_seed(cfg.seed, stream::ROLLOUT, 0);
    let n = cfg.sample.rollouts;
    let with = rollout_many(model, &spec, rc, n, seed)?;
    let without = rollout_many(model, &spec, &RolloutConfig { history_noise: 0.0, ..*rc }, n, seed)?;
    report.push(Metric::new("rollout", "drift", mean(&with.drift)));
    report.push(Metric::new("rollout", "drift_without_history_noise", mean(&without.drift)));
    let (a, b) = (column_means(&with.segment_drift), column_means(&without.segment_drift));
    for (k, v) in a.iter().enumerate() {
        report.push(Metric::at("rollout", "segment_drift", k, *v));
    }
    for (k, v) in b.iter().enumerate() {
        report.push(Metric::at("rollout", "segment_drift_without_history_noise", k, *v));
    }
    Ok(())
}

fn reward_metrics(report: &mut RunReport, out: &RewardOutcome) {
    report.push(Metric::new("reward_train", "final_loss", tail_mean(&out.losses)));
    report.push(Metric::new("reward_train", "train_accuracy", out.train_accuracy));
    report.push(Metric::new("reward_train", "test_accuracy", out.test_accuracy));
    report.series.insert("reward_train.loss".into(), out.losses.clone());
}

fn dpo_metrics(report: &mut RunReport, stages: &[StageReport]) {
    for s in stages {
        for (name, v) in [
            ("first_loss", s.first_loss),
            ("margin_before", s.margin_before),
            ("margin_after", s.margin_after),
            ("reward_before", s.reward_before),
            ("reward_after", s.reward_after),
            ("mean_chosen_reward", s.mean_chosen_reward),
            ("mean_rejected_reward", s.mean_rejected_reward),
        ] {
            report.push(Metric::at("dpo", name, s.stage, v));
        }
    }
    if let Some(last) = stages.last() {
        report.push(Metric::new("dpo", "reward_after", last.reward_after));
    }
    report.series.insert("dpo.loss".into(), stages.iter().flat_map(|s| s.losses.iter().copied()).collect());
}

/// Training and sample metrics only.
pub fn run_train(cfg: &ExperimentConfig) -> Result<(RunReport, Artifacts)> {
    let mut report = RunReport::new(cfg)?;
    let (model, losses) = report.timed("train", |_| train_denoiser(cfg))?;
    report.push(Metric::new("train", "final_loss", tail_mean(&losses)));
    report.series.insert("train.loss".into(), losses);
    Ok((report, Artifacts { model: Some(model), ..Artifacts::default() }))
}

/// The whole configured pipeline.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<(RunReport, Artifacts)> {
    let (mut report, mut art) = run_train(cfg)?;
    let model = art.model.clone().expect("trained model");
    report.timed("sample", |r| sample_metrics(r, cfg, &model))?;
    if let Some(rc) = &cfg.rollout {
        report.timed("rollout", |r| rollout_metrics(r, cfg, &model, rc))?;
    }
    if cfg.reward.is_some() {
        let out = report.timed("reward", |_| run_reward(cfg))?;
        reward_metrics(&mut report, &out);
        art.reward = Some(out.model);
    }
    if cfg.dpo.is_some() {
        let (tuned, stages) = report.timed("dpo", |_| run_dpo(cfg, model.clone(), art.reward.as_ref()))?;
        dpo_metrics(&mut report, &stages);
        art.dpo_model = Some(tuned);
        art.dpo_stages = stages;
    }
    Ok((report, art))
}

/// Reward training as its own run.
pub fn run_reward_only(cfg: &ExperimentConfig) -> Result<(RunReport, RewardOutcome)> {
    let mut report = RunReport::new(cfg)?;
    let out = report.timed("reward", |_| run_reward(cfg))?;
    reward_metrics(&mut report, &out);
    Ok((report, out))
}

/// DPO from `base` (trained first when absent).
pub fn run_dpo_only(cfg: &ExperimentConfig, base: Option<Denoiser>) -> Result<(RunReport, Artifacts)> {
    let (mut report, mut art) = match base {
        Some(m) => (RunReport::new(cfg)?, Artifacts { model: Some(m), ..Artifacts::default() }),
        None => run_train(cfg)?,
    };
    if cfg.dpo.as_ref().is_some_and(|d| d.scorer == DpoScorer::Reward) {
        let out = report.timed("reward", |_| run_reward(cfg))?;
        reward_metrics(&mut report, &out);
        art.reward = Some(out.model);
    }
    let base = art.model.clone().expect("base model");
    let (tuned, stages) = report.timed("dpo", |_| run_dpo(cfg, base, art.reward.as_ref()))?;
    dpo_metrics(&mut report, &stages);
    art.dpo_model = Some(tuned);
    art.dpo_stages = stages;
    Ok((report, art))
}

#[derive(Serialize)]
struct LossRow<'a> {
    series: &'a str,
    step: usize,
    value: String,
}

#[derive(Serialize)]
struct MetricRow<'a> {
    operation: &'a str,
    metric: &'a str,
    step: Option<usize>,
    value: String,
}

pub fn loss_csv(report: &RunReport) -> Result<Vec<u8>> {
    let rows: Vec<LossRow> = report
        .series
        .iter()
        .flat_map(|(k, v)| v.iter().enumerate().map(move |(i, x)| LossRow { series: k, step: i, value: fmt_f64(*x) }))
        .collect();
    csv_bytes(&rows)
}

pub fn metrics_csv(report: &RunReport) -> Result<Vec<u8>> {
    let rows: Vec<MetricRow> = report
        .metrics
        .iter()
        .map(|m| MetricRow { operation: &m.operation, metric: &m.metric, step: m.step, value: fmt_f64(m.value) })
        .collect();
    csv_bytes(&rows)
}

/// Serialized reward model: its config and flat parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RewardFile {
    pub config: dforce_core::preference::RewardConfig,
    pub params: Vec<f64>,
}

/// Writes `report.json`, `metrics.csv`, `loss.csv` (when there are series),
/// `timing.json`, the resolved config and any model files.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, report: &RunReport, art: &Artifacts) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_atomic(&dir.join("config.toml"), cfg.to_toml()?.as_bytes())?;
    if let Some(m) = &art.model {
        checkpoint::save(m, &dir.join("model.dfck"))?;
    }
    if let Some(m) = &art.dpo_model {
        checkpoint::save(m, &dir.join("dpo.dfck"))?;
    }
    if let Some(r) = &art.reward {
        write_json(&dir.join("reward.json"), &RewardFile { config: *r.config(), params: r.params().to_vec() })?;
    }
    if !art.dpo_stages.is_empty() {
        write_json(&dir.join("dpo_stages.json"), &art.dpo_stages)?;
    }
    if !report.series.is_empty() {
        write_atomic(&dir.join("loss.csv"), &loss_csv(report)?)?;
    }
    write_atomic(&dir.join("metrics.csv"), &metrics_csv(report)?)?;
    write_json(&dir.join("timing.json"), &report.wall_clock)?;
    write_json(&dir.join("report.json"), report)
}

/// Writes `count` samples under `dir` as `sample_{i}`.
pub fn write_samples(dir: &Path, samples: &[LatentSequence], format: frames::FrameFormat) -> Result<Vec<std::path::PathBuf>> {
    let mut out = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        out.extend(frames::emit_frames(s, format, dir, &format!("sample_{i}"))?);
    }
    Ok(out)
}
