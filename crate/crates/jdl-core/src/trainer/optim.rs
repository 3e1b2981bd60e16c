//! First-order optimizers over flat parameter vectors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// SGD with classical momentum and decoupled-from-nothing weight decay:
/// `v = momentum * v + g + weight_decay * p`, then `p -= lr * v`.
#[derive(Clone, Debug)]
pub struct SgdMomentum {
    lr: f64,
    momentum: f64,
    weight_decay: f64,
    velocity: Vec<f64>,
}

impl SgdMomentum {
    pub fn new(lr: f64, momentum: f64, weight_decay: f64, dim: usize) -> Result<Self> {
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate must be >= 0, got {lr}")));
        }
        if !(0.0..1.0).contains(&momentum) {
            return Err(Error::InvalidArgument(format!("momentum must be in [0, 1), got {momentum}")));
        }
        if !(weight_decay.is_finite() && weight_decay >= 0.0) {
            return Err(Error::InvalidArgument(format!("weight decay must be >= 0, got {weight_decay}")));
        }
        Ok(Self { lr, momentum, weight_decay, velocity: vec![0.0; dim] })
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.velocity.len(), "optimizer dimension mismatch");
        assert_eq!(grads.len(), self.velocity.len(), "gradient dimension mismatch");
        for ((p, v), g) in params.iter_mut().zip(&mut self.velocity).zip(grads) {
            *v = self.momentum * *v + g + self.weight_decay * *p;
            *p -= self.lr * *v;
        }
    }
}

/// Adam with bias correction; defaults `beta1 = 0.9`, `beta2 = 0.999`,
/// `epsilon = 1e-8`.
#[derive(Clone, Debug)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
    steps: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(lr: f64, dim: usize) -> Result<Self> {
        if !(lr.is_finite() && lr >= 0.0) {
            return Err(Error::InvalidArgument(format!("learning rate must be >= 0, got {lr}")));
        }
        Ok(Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            steps: 0,
            m: vec![0.0; dim],
            v: vec![0.0; dim],
        })
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "optimizer dimension mismatch");
        assert_eq!(grads.len(), self.m.len(), "gradient dimension mismatch");
        self.steps += 1;
        let c1 = 1.0 - self.beta1.powi(self.steps as i32);
        let c2 = 1.0 - self.beta2.powi(self.steps as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

/// Which optimizer updates the quantization tables.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum TableOptimizerKind {
    Adam { lr: f64 },
    Sgd { lr: f64 },
}

impl TableOptimizerKind {
    pub fn lr(&self) -> f64 {
        match *self {
            TableOptimizerKind::Adam { lr } | TableOptimizerKind::Sgd { lr } => lr,
        }
    }
}

/// Instantiated table optimizer; the SGD arm is plain (no momentum).
#[derive(Clone, Debug)]
pub enum TableOptimizer {
    Adam(Adam),
    Sgd { lr: f64 },
}

impl TableOptimizer {
    pub fn new(kind: TableOptimizerKind, dim: usize) -> Result<Self> {
        Ok(match kind {
            TableOptimizerKind::Adam { lr } => TableOptimizer::Adam(Adam::new(lr, dim)?),
            TableOptimizerKind::Sgd { lr } => {
                if !(lr.is_finite() && lr >= 0.0) {
                    return Err(Error::InvalidArgument(format!(
                        "learning rate must be >= 0, got {lr}"
                    )));
                }
                TableOptimizer::Sgd { lr }
            }
        })
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        match self {
            TableOptimizer::Adam(adam) => adam.step(params, grads),
            TableOptimizer::Sgd { lr } => {
                assert_eq!(params.len(), grads.len(), "gradient dimension mismatch");
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= *lr * g;
                }
            }
        }
    }
}
