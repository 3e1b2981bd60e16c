//! FGSM and PGD attacks through the differentiable JPEG layer.
//!
//! Attacks differentiate the soft quantizer over the full alphabet so the
//! pixel gradient is exact; the victim forward pass that scores the
//! perturbed image uses whatever evaluation options the caller picked.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qtable::QuantTables;
use crate::quantizer::{Phase, QuantizerVariant};
use crate::tensor::{ImageTensor, LabeledDataset};
use crate::trainer::layer::{jpeg_layer_backward, jpeg_layer_forward, LayerOptions};
use crate::trainer::ClassifierParams;
use crate::trainer::EvalOptions;

/// Attack algorithm.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AttackMethod {
    /// One signed-gradient step of size epsilon.
    Fgsm,
    /// Iterated signed-gradient steps projected back onto the epsilon ball.
    Pgd,
}

/// Attack configuration; `epsilon` and steps are in pixel units (0..255).
#[derive(Clone, Copy, Debug)]
pub struct AttackConfig {
    pub method: AttackMethod,
    pub epsilon: f64,
    /// Iterations for PGD; ignored by FGSM.
    pub steps: usize,
    /// PGD step size; defaults to `2.5 * epsilon / steps`.
    pub step_size: Option<f64>,
}

impl AttackConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon.is_finite() && self.epsilon >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "epsilon must be >= 0, got {}",
                self.epsilon
            )));
        }
        if self.method == AttackMethod::Pgd && self.steps == 0 {
            return Err(Error::InvalidArgument("PGD needs at least one step".to_string()));
        }
        if let Some(s) = self.step_size {
            if !(s.is_finite() && s > 0.0) {
                return Err(Error::InvalidArgument(format!("step size must be positive, got {s}")));
            }
        }
        Ok(())
    }

    fn schedule(&self) -> (usize, f64) {
        match self.method {
            AttackMethod::Fgsm => (1, self.epsilon),
            AttackMethod::Pgd => (
                self.steps,
                self.step_size.unwrap_or(2.5 * self.epsilon / self.steps as f64),
            ),
        }
    }
}

/// Accuracy at one perturbation budget.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessPoint {
    pub epsilon: f64,
    pub accuracy: f64,
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Perturbs one image against the model within an infinity-ball of radius
/// `epsilon` around it, staying inside `[0, 255]`. No random start.
pub fn attack_sample(
    img: &ImageTensor,
    label: usize,
    tables: &QuantTables,
    model: &ClassifierParams,
    cfg: &AttackConfig,
    eval: &EvalOptions,
) -> Result<ImageTensor> {
    cfg.validate()?;
    let grad_opts = LayerOptions {
        variant: QuantizerVariant::Soft,
        subsampling: eval.subsampling,
        masked: false,
        rounds: eval.rounds,
        phase: Phase::Eval,
        noise_seed: 0,
    };
    let (steps, step) = cfg.schedule();
    let mut x = img.clone();
    for _ in 0..steps {
        let (xhat, ctx) = jpeg_layer_forward(&x, tables, &grad_opts)?;
        let back = model.loss_and_grads(&xhat, label)?;
        let grads = jpeg_layer_backward(&back.d_pixels, &ctx)?;
        for (i, v) in x.data_mut().iter_mut().enumerate() {
            let clean = img.data()[i];
            let moved = *v + step * sign(grads.d_pixels.data()[i]);
            *v = moved
                .clamp(clean - cfg.epsilon, clean + cfg.epsilon)
                .clamp(0.0, 255.0);
        }
    }
    Ok(x)
}

/// Accuracy of `model` behind the JPEG layer on adversarially perturbed
/// inputs, for each budget in `epsilons`.
pub fn adversarial_eval(
    dataset: &LabeledDataset,
    tables: &QuantTables,
    model: &ClassifierParams,
    method: AttackMethod,
    steps: usize,
    epsilons: &[f64],
    eval: &EvalOptions,
) -> Result<Vec<RobustnessPoint>> {
    let victim_opts = LayerOptions {
        variant: eval.variant,
        subsampling: eval.subsampling,
        masked: eval.masked,
        rounds: eval.rounds,
        phase: Phase::Eval,
        noise_seed: 0,
    };
    let mut curve = Vec::with_capacity(epsilons.len());
    for &epsilon in epsilons {
        let cfg = AttackConfig { method, epsilon, steps, step_size: None };
        cfg.validate()?;
        let correct: usize = (0..dataset.len())
            .into_par_iter()
            .map(|i| -> Result<usize> {
                let adv =
                    attack_sample(dataset.image(i), dataset.label(i), tables, model, &cfg, eval)?;
                let (xhat, _) = jpeg_layer_forward(&adv, tables, &victim_opts)?;
                Ok(usize::from(model.predict(&xhat)? == dataset.label(i)))
            })
            .collect::<Result<Vec<_>>>()?
            .into_iter()
            .sum();
        curve.push(RobustnessPoint { epsilon, accuracy: correct as f64 / dataset.len() as f64 });
    }
    Ok(curve)
}
