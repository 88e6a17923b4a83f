use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    /// Per-parameter RMS scaling, no momentum.
    RmsProp,
    Adam,
}

/// First-order optimizer with decoupled weight decay.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    weight_decay: f64,
    step: u64,
    first: Vec<f64>,
    second: Vec<f64>,
}

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const RMS_DECAY: f64 = 0.99;
const EPS: f64 = 1e-8;

impl Optimizer {
    pub fn new(kind: OptimizerKind, num_params: usize, lr: f64, weight_decay: f64) -> Self {
        Self {
            kind,
            lr,
            weight_decay,
            step: 0,
            first: vec![0.0; num_params],
            second: vec![0.0; num_params],
        }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn set_lr(&mut self, lr: f64) {
        self.lr = lr;
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        debug_assert_eq!(params.len(), grad.len());
        self.step += 1;
        let decay = 1.0 - self.lr * self.weight_decay;
        match self.kind {
            OptimizerKind::RmsProp => {
                for ((p, &g), v) in params.iter_mut().zip(grad).zip(&mut self.second) {
                    *v = RMS_DECAY * *v + (1.0 - RMS_DECAY) * g * g;
                    // Bias-corrected so early steps are not oversized.
                    let v_hat = *v / (1.0 - RMS_DECAY.powi(self.step as i32));
                    *p = *p * decay - self.lr * g / (v_hat.sqrt() + EPS);
                }
            }
            OptimizerKind::Adam => {
                let c1 = 1.0 - BETA1.powi(self.step as i32);
                let c2 = 1.0 - BETA2.powi(self.step as i32);
                for (((p, &g), m), v) in params
                    .iter_mut()
                    .zip(grad)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    *m = BETA1 * *m + (1.0 - BETA1) * g;
                    *v = BETA2 * *v + (1.0 - BETA2) * g * g;
                    *p = *p * decay - self.lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
                }
            }
        }
    }
}
