//! Small dense classifiers with hand-written forward and backward passes.
//!
//! Parameters live in one flat `Vec<f64>` so optimizers can treat the model
//! as a single parameter vector. Inputs are flattened image tensors scaled
//! by 1/255 inside the model; the pixel gradient returned by the backward
//! pass already accounts for that scaling.

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ImageTensor;

const INPUT_SCALE: f64 = 1.0 / 255.0;

/// Classifier shape: a linear map or one hidden ReLU layer.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Architecture {
    Linear,
    OneHiddenRelu { hidden_dim: usize },
}

/// A classifier with its flat parameter vector.
///
/// Layout for [`Architecture::Linear`]: row-major `W (K x D)` then `b (K)`.
/// For [`Architecture::OneHiddenRelu`]: `W1 (H x D)`, `b1 (H)`, `W2 (K x H)`,
/// `b2 (K)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierParams {
    arch: Architecture,
    input_dim: usize,
    num_classes: usize,
    data: Vec<f64>,
}

/// Loss, logits, and gradients for one labeled sample.
#[derive(Clone, Debug)]
pub struct SampleBackward {
    pub loss: f64,
    pub logits: Vec<f64>,
    /// Gradient of the loss at the input pixels (same shape as the input).
    pub d_pixels: ImageTensor,
    /// Gradient of the loss at the flat parameter vector.
    pub d_params: Vec<f64>,
}

fn param_len(arch: Architecture, input_dim: usize, num_classes: usize) -> usize {
    match arch {
        Architecture::Linear => num_classes * (input_dim + 1),
        Architecture::OneHiddenRelu { hidden_dim } => {
            hidden_dim * (input_dim + 1) + num_classes * (hidden_dim + 1)
        }
    }
}

impl ClassifierParams {
    /// Fresh parameters: weights uniform in `+/- 1/sqrt(fan_in)` per layer
    /// from a ChaCha stream seeded with `seed`, biases zero.
    pub fn init(arch: Architecture, input_dim: usize, num_classes: usize, seed: u64) -> Result<Self> {
        if input_dim == 0 || num_classes == 0 {
            return Err(Error::InvalidArgument(format!(
                "classifier dimensions must be positive, got input_dim={input_dim} num_classes={num_classes}"
            )));
        }
        if let Architecture::OneHiddenRelu { hidden_dim } = arch {
            if hidden_dim == 0 {
                return Err(Error::InvalidArgument("hidden_dim must be positive".to_string()));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut data = vec![0.0; param_len(arch, input_dim, num_classes)];
        let mut fill = |slice: &mut [f64], fan_in: usize| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            let dist = Uniform::new(-bound, bound);
            for w in slice {
                *w = dist.sample(&mut rng);
            }
        };
        match arch {
            Architecture::Linear => {
                fill(&mut data[..num_classes * input_dim], input_dim);
            }
            Architecture::OneHiddenRelu { hidden_dim } => {
                let w1 = hidden_dim * input_dim;
                fill(&mut data[..w1], input_dim);
                let w2_start = w1 + hidden_dim;
                fill(&mut data[w2_start..w2_start + num_classes * hidden_dim], hidden_dim);
            }
        }
        Ok(Self { arch, input_dim, num_classes, data })
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn validate(&self) -> Result<()> {
        let expected = param_len(self.arch, self.input_dim, self.num_classes);
        if self.data.len() != expected {
            return Err(Error::Validation(format!(
                "parameter vector has {} entries, layout requires {expected}",
                self.data.len()
            )));
        }
        Ok(())
    }

    pub fn save_json(&self, path: &std::path::Path) -> Result<()> {
        self.validate()?;
        let mut text = serde_json::to_string(self).map_err(|e| Error::Parse {
            what: path.display().to_string(),
            reason: e.to_string(),
        })?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let model: Self = serde_json::from_str(&text).map_err(|e| Error::Parse {
            what: path.display().to_string(),
            reason: e.to_string(),
        })?;
        model.validate()?;
        Ok(model)
    }

    fn check_input(&self, img: &ImageTensor) -> Result<()> {
        let n = img.data().len();
        if n != self.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "input has {n} values, classifier expects {}",
                self.input_dim
            )));
        }
        Ok(())
    }

    fn scaled_input(&self, img: &ImageTensor) -> Vec<f64> {
        img.data().iter().map(|v| v * INPUT_SCALE).collect()
    }

    /// Class scores before the softmax.
    pub fn logits(&self, img: &ImageTensor) -> Result<Vec<f64>> {
        self.check_input(img)?;
        let xs = self.scaled_input(img);
        Ok(match self.arch {
            Architecture::Linear => {
                let (w, b) = self.data.split_at(self.num_classes * self.input_dim);
                affine(w, b, &xs, self.num_classes)
            }
            Architecture::OneHiddenRelu { hidden_dim } => {
                let (w1, rest) = self.data.split_at(hidden_dim * self.input_dim);
                let (b1, rest) = rest.split_at(hidden_dim);
                let (w2, b2) = rest.split_at(self.num_classes * hidden_dim);
                let mut h = affine(w1, b1, &xs, hidden_dim);
                for v in &mut h {
                    *v = v.max(0.0);
                }
                affine(w2, b2, &h, self.num_classes)
            }
        })
    }

    /// Index of the highest logit; the first one on ties.
    pub fn predict(&self, img: &ImageTensor) -> Result<usize> {
        let logits = self.logits(img)?;
        let mut best = 0;
        for (k, &v) in logits.iter().enumerate() {
            if v > logits[best] {
                best = k;
            }
        }
        Ok(best)
    }

    /// Cross-entropy loss for one sample with gradients at the parameters
    /// and at the input pixels.
    pub fn loss_and_grads(&self, img: &ImageTensor, label: usize) -> Result<SampleBackward> {
        self.check_input(img)?;
        if label >= self.num_classes {
            return Err(Error::InvalidArgument(format!(
                "label {label} out of range for {} classes",
                self.num_classes
            )));
        }
        let xs = self.scaled_input(img);
        let mut d_params = vec![0.0; self.data.len()];
        let (logits, d_xs) = match self.arch {
            Architecture::Linear => {
                let (w, b) = self.data.split_at(self.num_classes * self.input_dim);
                let logits = affine(w, b, &xs, self.num_classes);
                let d_logits = softmax_grad(&logits, label);
                let (dw, db) = d_params.split_at_mut(self.num_classes * self.input_dim);
                let d_xs = affine_backward(w, &xs, &d_logits, dw, db, self.input_dim);
                (logits, d_xs)
            }
            Architecture::OneHiddenRelu { hidden_dim } => {
                let w1_len = hidden_dim * self.input_dim;
                let w2_start = w1_len + hidden_dim;
                let w2_len = self.num_classes * hidden_dim;
                let (w1, rest) = self.data.split_at(w1_len);
                let (b1, rest) = rest.split_at(hidden_dim);
                let (w2, b2) = rest.split_at(w2_len);
                let h_pre = affine(w1, b1, &xs, hidden_dim);
                let h: Vec<f64> = h_pre.iter().map(|v| v.max(0.0)).collect();
                let logits = affine(w2, b2, &h, self.num_classes);
                let d_logits = softmax_grad(&logits, label);
                let (front, back) = d_params.split_at_mut(w2_start);
                let (dw1, db1) = front.split_at_mut(w1_len);
                let (dw2, db2) = back.split_at_mut(w2_len);
                let mut d_h = affine_backward(w2, &h, &d_logits, dw2, db2, hidden_dim);
                for (g, pre) in d_h.iter_mut().zip(&h_pre) {
                    if *pre <= 0.0 {
                        *g = 0.0;
                    }
                }
                let d_xs = affine_backward(w1, &xs, &d_h, dw1, db1, self.input_dim);
                (logits, d_xs)
            }
        };
        let loss = cross_entropy(&logits, label);
        let mut d_pixels = ImageTensor::zeros(img.channels(), img.height(), img.width());
        for (out, g) in d_pixels.data_mut().iter_mut().zip(&d_xs) {
            *out = g * INPUT_SCALE;
        }
        Ok(SampleBackward { loss, logits, d_pixels, d_params })
    }
}

fn affine(w: &[f64], b: &[f64], x: &[f64], rows: usize) -> Vec<f64> {
    let cols = x.len();
    let mut out = Vec::with_capacity(rows);
    for k in 0..rows {
        let row = &w[k * cols..(k + 1) * cols];
        let dot: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
        out.push(dot + b[k]);
    }
    out
}

/// Accumulates `dW += d_out x^T`, `db += d_out` and returns `W^T d_out`.
fn affine_backward(
    w: &[f64],
    x: &[f64],
    d_out: &[f64],
    dw: &mut [f64],
    db: &mut [f64],
    cols: usize,
) -> Vec<f64> {
    let mut d_x = vec![0.0; cols];
    for (k, &g) in d_out.iter().enumerate() {
        let row = &w[k * cols..(k + 1) * cols];
        let drow = &mut dw[k * cols..(k + 1) * cols];
        for d in 0..cols {
            drow[d] += g * x[d];
            d_x[d] += g * row[d];
        }
        db[k] += g;
    }
    d_x
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let peak = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|v| (v - peak).exp()).sum();
    peak + sum.ln()
}

/// Stable softmax cross-entropy.
fn cross_entropy(logits: &[f64], label: usize) -> f64 {
    log_sum_exp(logits) - logits[label]
}

/// Gradient of the cross-entropy at the logits: `softmax - one_hot`.
fn softmax_grad(logits: &[f64], label: usize) -> Vec<f64> {
    let lse = log_sum_exp(logits);
    let mut g: Vec<f64> = logits.iter().map(|v| (v - lse).exp()).collect();
    g[label] -= 1.0;
    g
}
