//! Per-frame residual MLP velocity regressor.
//!
//! Frame `i` sees its own noisy latent, the latent of frame `i - 1`, the mean
//! of all frames before it and the flow times of that context. Nothing after
//! frame `i` enters its prediction, so information only flows forward.
//!
//! ```text
//! z   = [x_i, x_{i-1}, mean(x_{<i}), tau_{i-1}, mean(tau_{<i})]
//! a1  = W_in z + b_in + W_time sin_embed(tau_i) + pos[i] + prompt[c]
//! h1  = silu(a1)
//! h2  = h1 + silu(W_hid h1 + b_hid)
//! u   = W_out h2 + b_out
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{closed_form_velocity_gaussian, LatentSequence};
use crate::error::{Error, Result};
use crate::rng::standard_normal;

/// Anything that maps a noisy sequence and per-frame flow times to per-frame
/// velocities.
pub trait VelocityField {
    fn dim(&self) -> usize;

    fn velocity(&self, x: &LatentSequence, taus: &[f64], prompt: usize) -> Result<LatentSequence>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ContextMode {
    /// Running prefix sums, one pass over the sequence.
    Memoized,
    /// Context recomputed from scratch for every frame.
    Recompute,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserConfig {
    /// Latent dimension `D`.
    pub dim: usize,
    /// Hidden width `H`.
    pub hidden: usize,
    /// Number of sinusoidal frequencies; the embedding has `2K` features.
    pub time_freqs: usize,
    /// Longest window the position table covers.
    pub max_positions: usize,
    pub num_prompts: usize,
}

impl DenoiserConfig {
    pub fn new(dim: usize, max_positions: usize) -> Self {
        Self {
            dim,
            hidden: 64,
            time_freqs: 8,
            max_positions,
            num_prompts: 1,
        }
    }

    pub fn input_width(&self) -> usize {
        3 * self.dim + 2
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("dim", self.dim),
            ("hidden", self.hidden),
            ("time_freqs", self.time_freqs),
            ("max_positions", self.max_positions),
            ("num_prompts", self.num_prompts),
        ] {
            if v == 0 {
                return Err(Error::domain(format!("denoiser {name} must be at least 1")));
            }
        }
        Ok(())
    }

    fn layout(&self) -> Layout {
        let (h, z, d) = (self.hidden, self.input_width(), self.dim);
        let sizes = [
            h * z,
            h,
            h * 2 * self.time_freqs,
            self.max_positions * h,
            self.num_prompts * h,
            h * h,
            h,
            d * h,
            d,
        ];
        let mut offsets = [0; 10];
        for (i, s) in sizes.iter().enumerate() {
            offsets[i + 1] = offsets[i] + s;
        }
        Layout { offsets }
    }
}

/// Named slices of the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    InputWeight,
    InputBias,
    TimeWeight,
    Position,
    Prompt,
    HiddenWeight,
    HiddenBias,
    OutputWeight,
    OutputBias,
}

impl ParamGroup {
    pub const ALL: [ParamGroup; 9] = [
        ParamGroup::InputWeight,
        ParamGroup::InputBias,
        ParamGroup::TimeWeight,
        ParamGroup::Position,
        ParamGroup::Prompt,
        ParamGroup::HiddenWeight,
        ParamGroup::HiddenBias,
        ParamGroup::OutputWeight,
        ParamGroup::OutputBias,
    ];

    fn index(self) -> usize {
        ParamGroup::ALL.iter().position(|&g| g == self).unwrap()
    }
}

#[derive(Debug, Clone, Copy)]
struct Layout {
    offsets: [usize; 10],
}

impl Layout {
    fn range(&self, g: ParamGroup) -> std::ops::Range<usize> {
        let i = g.index();
        self.offsets[i]..self.offsets[i + 1]
    }

    fn total(&self) -> usize {
        self.offsets[9]
    }
}

/// The velocity regressor: a config plus one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Denoiser {
    config: DenoiserConfig,
    params: Vec<f64>,
    context: ContextMode,
}

/// Intermediate values of one frame's forward pass.
#[derive(Debug, Clone)]
struct FrameCache {
    z: Vec<f64>,
    embed: Vec<f64>,
    position: usize,
    prompt: usize,
    a1: Vec<f64>,
    h1: Vec<f64>,
    a2: Vec<f64>,
    h2: Vec<f64>,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// `out += W v` with `W` row-major `rows x v.len()`.
fn matvec_add(w: &[f64], v: &[f64], out: &mut [f64]) {
    let cols = v.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *o += row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += W^T g` with `W` row-major `g.len() x out.len()`.
fn matvec_t_add(w: &[f64], g: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (r, &gr) in g.iter().enumerate() {
        if gr == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (o, a) in out.iter_mut().zip(row) {
            *o += gr * a;
        }
    }
}

/// `G += g v^T`.
fn outer_add(g: &[f64], v: &[f64], grad: &mut [f64]) {
    let cols = v.len();
    for (r, &gr) in g.iter().enumerate() {
        if gr == 0.0 {
            continue;
        }
        let row = &mut grad[r * cols..(r + 1) * cols];
        for (o, b) in row.iter_mut().zip(v) {
            *o += gr * b;
        }
    }
}

/// Sinusoidal features `[sin(w_k tau), cos(w_k tau)]`, `w_k = (pi / 2) 2^k`.
pub(crate) fn time_embedding(tau: f64, freqs: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * freqs);
    for k in 0..freqs {
        let w = std::f64::consts::FRAC_PI_2 * (1u64 << k) as f64;
        out.push((w * tau).sin());
        out.push((w * tau).cos());
    }
    out
}

impl Denoiser {
    /// Randomly initialized network (scaled normal weights, zero biases and
    /// small embeddings).
    pub fn new<R: Rng + ?Sized>(config: DenoiserConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        let mut params = vec![0.0; layout.total()];
        let (h, z, k2) = (config.hidden, config.input_width(), 2 * config.time_freqs);
        let mut fill = |g: ParamGroup, scale: f64| {
            for p in &mut params[layout.range(g)] {
                *p = scale * standard_normal(rng);
            }
        };
        fill(ParamGroup::InputWeight, (1.0 / z as f64).sqrt());
        fill(ParamGroup::TimeWeight, (1.0 / k2 as f64).sqrt());
        fill(ParamGroup::Position, 0.02);
        fill(ParamGroup::Prompt, 0.02);
        fill(ParamGroup::HiddenWeight, (1.0 / h as f64).sqrt());
        fill(ParamGroup::OutputWeight, (0.5 / h as f64).sqrt());
        Ok(Self {
            config,
            params,
            context: ContextMode::Memoized,
        })
    }

    pub fn from_params(config: DenoiserConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let expected = config.layout().total();
        if params.len() != expected {
            return Err(Error::shape(format!("{expected} parameters"), format!("{} parameters", params.len())));
        }
        Ok(Self {
            config,
            params,
            context: ContextMode::Memoized,
        })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.config
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn group_range(&self, group: ParamGroup) -> std::ops::Range<usize> {
        self.config.layout().range(group)
    }

    pub fn group_mut(&mut self, group: ParamGroup) -> &mut [f64] {
        let r = self.group_range(group);
        &mut self.params[r]
    }

    pub fn context_mode(&self) -> ContextMode {
        self.context
    }

    pub fn set_context_mode(&mut self, mode: ContextMode) {
        self.context = mode;
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Input vectors `z` for every frame.
    fn frame_inputs(&self, x: &LatentSequence, taus: &[f64]) -> Vec<Vec<f64>> {
        let d = x.dim();
        let f = x.frames();
        let mut inputs = Vec::with_capacity(f);
        match self.context {
            ContextMode::Memoized => {
                let mut sum = vec![0.0; d];
                let mut tau_sum = 0.0;
                for i in 0..f {
                    inputs.push(self.assemble_input(x, taus, i, &sum, tau_sum));
                    for (s, v) in sum.iter_mut().zip(x.frame(i)) {
                        *s += v;
                    }
                    tau_sum += taus[i];
                }
            }
            ContextMode::Recompute => {
                for i in 0..f {
                    let mut sum = vec![0.0; d];
                    let mut tau_sum = 0.0;
                    for k in 0..i {
                        for (s, v) in sum.iter_mut().zip(x.frame(k)) {
                            *s += v;
                        }
                        tau_sum += taus[k];
                    }
                    inputs.push(self.assemble_input(x, taus, i, &sum, tau_sum));
                }
            }
        }
        inputs
    }

    fn assemble_input(&self, x: &LatentSequence, taus: &[f64], i: usize, sum: &[f64], tau_sum: f64) -> Vec<f64> {
        let d = x.dim();
        let mut z = Vec::with_capacity(self.config.input_width());
        z.extend_from_slice(x.frame(i));
        if i == 0 {
            z.extend(std::iter::repeat_n(0.0, 2 * d + 2));
        } else {
            let n = i as f64;
            z.extend_from_slice(x.frame(i - 1));
            z.extend(sum.iter().map(|s| s / n));
            z.push(taus[i - 1]);
            z.push(tau_sum / n);
        }
        z
    }

    fn forward_frame(&self, z: Vec<f64>, tau: f64, position: usize, prompt: usize) -> (Vec<f64>, FrameCache) {
        let cfg = &self.config;
        let layout = cfg.layout();
        let p = &self.params;
        let (h, d) = (cfg.hidden, cfg.dim);

        let embed = time_embedding(tau, cfg.time_freqs);
        let mut a1 = p[layout.range(ParamGroup::InputBias)].to_vec();
        matvec_add(&p[layout.range(ParamGroup::InputWeight)], &z, &mut a1);
        matvec_add(&p[layout.range(ParamGroup::TimeWeight)], &embed, &mut a1);
        let pos = &p[layout.range(ParamGroup::Position)][position * h..(position + 1) * h];
        let cond = &p[layout.range(ParamGroup::Prompt)][prompt * h..(prompt + 1) * h];
        for ((a, x), y) in a1.iter_mut().zip(pos).zip(cond) {
            *a += x + y;
        }
        let h1: Vec<f64> = a1.iter().map(|&a| silu(a)).collect();

        let mut a2 = p[layout.range(ParamGroup::HiddenBias)].to_vec();
        matvec_add(&p[layout.range(ParamGroup::HiddenWeight)], &h1, &mut a2);
        let h2: Vec<f64> = h1.iter().zip(&a2).map(|(&x, &a)| x + silu(a)).collect();

        let mut u = p[layout.range(ParamGroup::OutputBias)].to_vec();
        debug_assert_eq!(u.len(), d);
        matvec_add(&p[layout.range(ParamGroup::OutputWeight)], &h2, &mut u);

        let cache = FrameCache {
            z,
            embed,
            position,
            prompt,
            a1,
            h1,
            a2,
            h2,
        };
        (u, cache)
    }

    fn backward_frame(&self, cache: &FrameCache, grad_u: &[f64], grad: &mut [f64]) {
        let cfg = &self.config;
        let layout = cfg.layout();
        let p = &self.params;
        let h = cfg.hidden;

        for (g, gu) in grad[layout.range(ParamGroup::OutputBias)].iter_mut().zip(grad_u) {
            *g += gu;
        }
        outer_add(grad_u, &cache.h2, &mut grad[layout.range(ParamGroup::OutputWeight)]);
        let mut g_h2 = vec![0.0; h];
        matvec_t_add(&p[layout.range(ParamGroup::OutputWeight)], grad_u, &mut g_h2);

        let g_a2: Vec<f64> = g_h2.iter().zip(&cache.a2).map(|(g, &a)| g * silu_grad(a)).collect();
        for (g, ga) in grad[layout.range(ParamGroup::HiddenBias)].iter_mut().zip(&g_a2) {
            *g += ga;
        }
        outer_add(&g_a2, &cache.h1, &mut grad[layout.range(ParamGroup::HiddenWeight)]);
        let mut g_h1 = g_h2;
        matvec_t_add(&p[layout.range(ParamGroup::HiddenWeight)], &g_a2, &mut g_h1);

        let g_a1: Vec<f64> = g_h1.iter().zip(&cache.a1).map(|(g, &a)| g * silu_grad(a)).collect();
        for (g, ga) in grad[layout.range(ParamGroup::InputBias)].iter_mut().zip(&g_a1) {
            *g += ga;
        }
        outer_add(&g_a1, &cache.z, &mut grad[layout.range(ParamGroup::InputWeight)]);
        outer_add(&g_a1, &cache.embed, &mut grad[layout.range(ParamGroup::TimeWeight)]);
        let pos = layout.range(ParamGroup::Position).start + cache.position * h;
        let cond = layout.range(ParamGroup::Prompt).start + cache.prompt * h;
        for (k, ga) in g_a1.iter().enumerate() {
            grad[pos + k] += ga;
            grad[cond + k] += ga;
        }
    }

    fn check_inputs(&self, x: &LatentSequence, taus: &[f64], prompt: usize) -> Result<()> {
        if x.dim() != self.config.dim {
            return Err(Error::shape(format!("dimension {}", self.config.dim), format!("dimension {}", x.dim())));
        }
        if taus.len() != x.frames() {
            return Err(Error::shape(format!("{} timesteps", x.frames()), format!("{} timesteps", taus.len())));
        }
        if x.frames() > self.config.max_positions {
            return Err(Error::domain(format!(
                "{} frames exceed the model window of {}",
                x.frames(),
                self.config.max_positions
            )));
        }
        if prompt >= self.config.num_prompts {
            return Err(Error::domain(format!(
                "prompt id {prompt} outside [0, {})",
                self.config.num_prompts
            )));
        }
        Ok(())
    }

    /// Predicted velocities plus the per-frame caches for backprop.
    fn forward(&self, x: &LatentSequence, taus: &[f64], prompt: usize) -> Result<(LatentSequence, Vec<FrameCache>)> {
        self.check_inputs(x, taus, prompt)?;
        let mut out = LatentSequence::zeros(x.frames(), x.dim());
        let mut caches = Vec::with_capacity(x.frames());
        for (i, z) in self.frame_inputs(x, taus).into_iter().enumerate() {
            let (u, cache) = self.forward_frame(z, taus[i], i, prompt);
            out.frame_mut(i).copy_from_slice(&u);
            caches.push(cache);
        }
        if !out.is_finite() {
            return Err(Error::non_finite("denoiser forward pass"));
        }
        Ok((out, caches))
    }

    /// Runs the forward pass, asks `grad_of_output` for `dL/du` and
    /// accumulates `dL/dtheta` into `grad`. Returns the prediction.
    pub fn backprop<F>(
        &self,
        x: &LatentSequence,
        taus: &[f64],
        prompt: usize,
        grad: &mut [f64],
        grad_of_output: F,
    ) -> Result<LatentSequence>
    where
        F: FnOnce(&LatentSequence) -> LatentSequence,
    {
        let (u, caches) = self.forward(x, taus, prompt)?;
        let g_u = grad_of_output(&u);
        for (i, cache) in caches.iter().enumerate() {
            self.backward_frame(cache, g_u.frame(i), grad);
        }
        Ok(u)
    }
}

impl VelocityField for Denoiser {
    fn dim(&self) -> usize {
        self.config.dim
    }

    fn velocity(&self, x: &LatentSequence, taus: &[f64], prompt: usize) -> Result<LatentSequence> {
        Ok(self.forward(x, taus, prompt)?.0)
    }
}

/// `u = w` everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstantField {
    pub velocity: Vec<f64>,
}

impl VelocityField for ConstantField {
    fn dim(&self) -> usize {
        self.velocity.len()
    }

    fn velocity(&self, x: &LatentSequence, _taus: &[f64], _prompt: usize) -> Result<LatentSequence> {
        let data = (0..x.frames()).flat_map(|_| self.velocity.iter().copied()).collect();
        LatentSequence::new(x.frames(), self.velocity.len(), data)
    }
}

/// Exact velocity for `x1 ~ N(0, sigma1^2 I)` with independent frames.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianOracleField {
    pub dim: usize,
    pub sigma1: f64,
}

impl VelocityField for GaussianOracleField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn velocity(&self, x: &LatentSequence, taus: &[f64], _prompt: usize) -> Result<LatentSequence> {
        let mut out = LatentSequence::zeros(x.frames(), x.dim());
        for (i, &tau) in taus.iter().enumerate() {
            out.frame_mut(i)
                .copy_from_slice(&closed_form_velocity_gaussian(x.frame(i), tau, self.sigma1));
        }
        Ok(out)
    }
}
