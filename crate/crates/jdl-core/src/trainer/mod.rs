//! Joint training of a classifier and the quantization tables in front of
//! it, plus evaluation helpers and frequency-sensitivity estimation.
//!
//! Training is deterministic for a fixed configuration: shuffling, model
//! initialization, and additive-noise draws all derive from `seed`, and
//! per-batch reductions run in a fixed order regardless of thread count.

mod attack;
mod classifier;
mod layer;
mod optim;

pub use attack::{adversarial_eval, attack_sample, AttackConfig, AttackMethod, RobustnessPoint};
pub use classifier::{Architecture, ClassifierParams, SampleBackward};
pub use layer::{jpeg_layer_backward, jpeg_layer_forward, LayerContext, LayerGrads, LayerOptions};
pub use optim::{Adam, SgdMomentum, TableOptimizer, TableOptimizerKind};

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{pipeline_forward, reconstruct_backward, reconstruct_forward, SubsamplingMode};
use crate::qtable::{QuantTables, Sensitivity};
use crate::quantizer::{Phase, QuantizerVariant, Q_MIN};
use crate::tensor::LabeledDataset;

/// Hyperparameters for [`train`] and [`train_baseline`].
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Master seed for shuffling and noise streams.
    pub seed: u64,
    /// Classifier SGD learning rate.
    pub model_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Optimizer for the table entries.
    pub table_optimizer: TableOptimizerKind,
    /// Also train the sharpnesses (incompatible with `hbar`).
    pub train_alpha: bool,
    /// Gradient-scaling constant; when set, sharpnesses are re-tied to the
    /// steps after every table update.
    pub hbar: Option<f64>,
    pub variant: QuantizerVariant,
    pub subsampling: SubsamplingMode,
    pub masked: bool,
    pub rounds: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            batch_size: 16,
            seed: 7,
            model_lr: 0.02,
            momentum: 0.9,
            weight_decay: 0.0,
            table_optimizer: TableOptimizerKind::Adam { lr: 0.003 },
            train_alpha: false,
            hbar: None,
            variant: QuantizerVariant::Soft,
            subsampling: SubsamplingMode::S444,
            masked: false,
            rounds: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".to_string()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".to_string()));
        }
        if self.rounds == 0 {
            return Err(Error::InvalidArgument("rounds must be at least 1".to_string()));
        }
        if !(self.model_lr.is_finite() && self.model_lr >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "model learning rate must be >= 0, got {}",
                self.model_lr
            )));
        }
        if let Some(h) = self.hbar {
            if !(h.is_finite() && h > 0.0) {
                return Err(Error::InvalidArgument(format!("hbar must be positive, got {h}")));
            }
            if self.train_alpha {
                return Err(Error::InvalidArgument(
                    "train_alpha and hbar are mutually exclusive: gradient scaling \
                     overwrites the sharpnesses after every step"
                        .to_string(),
                ));
            }
        }
        Ok(())
    }

    fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            variant: self.variant,
            subsampling: self.subsampling,
            masked: self.masked,
            rounds: self.rounds,
        }
    }
}

/// Forward-pass options for evaluation and attacks.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EvalOptions {
    pub variant: QuantizerVariant,
    pub subsampling: SubsamplingMode,
    pub masked: bool,
    pub rounds: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            variant: QuantizerVariant::Soft,
            subsampling: SubsamplingMode::S444,
            masked: false,
            rounds: 1,
        }
    }
}

/// One logged line of training progress.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsRow {
    /// Optimizer steps completed.
    pub step: u64,
    /// 1-based epoch.
    pub epoch: u32,
    /// Mean training loss over the epoch.
    pub loss: f64,
    /// Training accuracy over the epoch (online, before the epoch's last updates settle).
    pub train_acc: f64,
    /// Accuracy on the validation set (the training set when none is given).
    pub val_acc: f64,
}

/// Writes metrics as CSV with six fractional digits.
pub fn write_metrics_csv(rows: &[MetricsRow], path: &Path) -> Result<()> {
    let mut out = String::from("step,epoch,loss,train_acc,val_acc\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{:.6},{:.6},{:.6}\n",
            r.step, r.epoch, r.loss, r.train_acc, r.val_acc
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

/// Result of joint training.
#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub tables: QuantTables,
    pub model: ClassifierParams,
    pub metrics: Vec<MetricsRow>,
}

/// Result of baseline (no JPEG layer) training.
#[derive(Clone, Debug)]
pub struct BaselineOutcome {
    pub model: ClassifierParams,
    pub metrics: Vec<MetricsRow>,
}

/// Accuracy and mean loss of a model on a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: f64,
    pub mean_loss: f64,
}

/// splitmix64-style mixing for derived seeds.
fn mix(a: u64, b: u64) -> u64 {
    let mut x = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    x ^= x >> 30;
    x = x.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^= x >> 31;
    x
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = k;
        }
    }
    best
}

struct SampleOut {
    loss: f64,
    correct: bool,
    d_params: Vec<f64>,
    /// `[d_q_y, d_q_c]` and optionally `[d_alpha_y, d_alpha_c]`, flattened
    /// in table-vector order; `None` for baseline training.
    d_table: Option<Vec<f64>>,
}

/// Copies the trained table entries into a flat vector in optimizer order.
fn table_params(tables: &QuantTables, train_alpha: bool) -> Vec<f64> {
    let mut v = Vec::with_capacity(if train_alpha { 256 } else { 128 });
    v.extend_from_slice(&tables.q_y);
    v.extend_from_slice(&tables.q_c);
    if train_alpha {
        v.extend_from_slice(&tables.alpha_y);
        v.extend_from_slice(&tables.alpha_c);
    }
    v
}

/// Writes a flat optimizer vector back into the tables, flooring every
/// trained entry at [`Q_MIN`].
fn write_table_params(tables: &mut QuantTables, flat: &[f64], train_alpha: bool) {
    for m in 0..64 {
        tables.q_y[m] = flat[m].max(Q_MIN);
        tables.q_c[m] = flat[64 + m].max(Q_MIN);
    }
    if train_alpha {
        for m in 0..64 {
            tables.alpha_y[m] = flat[128 + m].max(Q_MIN);
            tables.alpha_c[m] = flat[192 + m].max(Q_MIN);
        }
    }
}

fn flat_table_grads(g: &LayerGrads, train_alpha: bool) -> Vec<f64> {
    let mut v = Vec::with_capacity(if train_alpha { 256 } else { 128 });
    v.extend_from_slice(&g.d_q_y);
    v.extend_from_slice(&g.d_q_c);
    if train_alpha {
        v.extend_from_slice(&g.d_alpha_y);
        v.extend_from_slice(&g.d_alpha_c);
    }
    v
}

fn check_dataset(dataset: &LabeledDataset, model: &ClassifierParams, mode: SubsamplingMode) -> Result<()> {
    let img = dataset.image(0);
    let expected = img.channels() * img.height() * img.width();
    if model.input_dim() != expected {
        return Err(Error::ShapeMismatch(format!(
            "classifier expects input_dim {}, dataset images flatten to {expected}",
            model.input_dim()
        )));
    }
    if model.num_classes() != dataset.num_classes() {
        return Err(Error::ShapeMismatch(format!(
            "classifier has {} classes, dataset has {}",
            model.num_classes(),
            dataset.num_classes()
        )));
    }
    let align = mode.required_alignment();
    if img.height() % align != 0 || img.width() % align != 0 {
        return Err(Error::ShapeMismatch(format!(
            "images must be {align}-aligned for this subsampling mode, got {}x{}",
            img.height(),
            img.width()
        )));
    }
    Ok(())
}

fn train_impl(
    dataset: &LabeledDataset,
    val: Option<&LabeledDataset>,
    mut jpeg: Option<QuantTables>,
    model0: &ClassifierParams,
    cfg: &TrainConfig,
) -> Result<(Option<QuantTables>, ClassifierParams, Vec<MetricsRow>)> {
    cfg.validate()?;
    model0.validate()?;
    if dataset.is_empty() {
        return Err(Error::InvalidArgument("training dataset is empty".to_string()));
    }
    if jpeg.is_some() {
        check_dataset(dataset, model0, cfg.subsampling)?;
    }
    let mut model = model0.clone();
    let mut theta_opt =
        SgdMomentum::new(cfg.model_lr, cfg.momentum, cfg.weight_decay, model.data().len())?;
    let mut table_opt = match &jpeg {
        Some(_) => Some(TableOptimizer::new(
            cfg.table_optimizer,
            if cfg.train_alpha { 256 } else { 128 },
        )?),
        None => None,
    };
    if let (Some(tables), Some(h)) = (jpeg.as_mut(), cfg.hbar) {
        tables.apply_gradient_scaling(h)?;
    }
    if let Some(tables) = &jpeg {
        tables.validate()?;
    }

    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut indices: Vec<usize> = (0..dataset.len()).collect();
    let mut metrics = Vec::with_capacity(cfg.epochs);
    let mut step: u64 = 0;

    for epoch in 1..=cfg.epochs as u32 {
        indices.shuffle(&mut shuffle_rng);
        let mut epoch_loss = 0.0;
        let mut epoch_correct = 0usize;

        for batch in indices.chunks(cfg.batch_size) {
            let outs: Vec<SampleOut> = batch
                .par_iter()
                .map(|&idx| -> Result<SampleOut> {
                    let img = dataset.image(idx);
                    let label = dataset.label(idx);
                    match &jpeg {
                        Some(tables) => {
                            let opts = LayerOptions {
                                variant: cfg.variant,
                                subsampling: cfg.subsampling,
                                masked: cfg.masked,
                                rounds: cfg.rounds,
                                phase: Phase::Train,
                                noise_seed: mix(mix(cfg.seed, step), idx as u64),
                            };
                            let (xhat, ctx) = jpeg_layer_forward(img, tables, &opts)?;
                            let back = model.loss_and_grads(&xhat, label)?;
                            let lg = jpeg_layer_backward(&back.d_pixels, &ctx)?;
                            Ok(SampleOut {
                                loss: back.loss,
                                correct: argmax(&back.logits) == label,
                                d_params: back.d_params,
                                d_table: Some(flat_table_grads(&lg, cfg.train_alpha)),
                            })
                        }
                        None => {
                            let back = model.loss_and_grads(img, label)?;
                            Ok(SampleOut {
                                loss: back.loss,
                                correct: argmax(&back.logits) == label,
                                d_params: back.d_params,
                                d_table: None,
                            })
                        }
                    }
                })
                .collect::<Result<Vec<_>>>()?;

            // Sequential, ordered reduction keeps results independent of the
            // rayon thread count.
            let inv = 1.0 / batch.len() as f64;
            let mut d_params = vec![0.0; model.data().len()];
            let mut d_table = jpeg
                .as_ref()
                .map(|_| vec![0.0; if cfg.train_alpha { 256 } else { 128 }]);
            for out in &outs {
                epoch_loss += out.loss;
                epoch_correct += usize::from(out.correct);
                for (acc, g) in d_params.iter_mut().zip(&out.d_params) {
                    *acc += g * inv;
                }
                if let (Some(acc), Some(g)) = (d_table.as_mut(), out.d_table.as_ref()) {
                    for (a, g) in acc.iter_mut().zip(g) {
                        *a += g * inv;
                    }
                }
            }

            theta_opt.step(model.data_mut(), &d_params);
            if let (Some(tables), Some(opt), Some(grads)) =
                (jpeg.as_mut(), table_opt.as_mut(), d_table.as_ref())
            {
                let mut flat = table_params(tables, cfg.train_alpha);
                opt.step(&mut flat, grads);
                write_table_params(tables, &flat, cfg.train_alpha);
                if let Some(h) = cfg.hbar {
                    tables.apply_gradient_scaling(h)?;
                }
            }
            step += 1;
        }

        let val_report = match (&jpeg, val) {
            (Some(tables), Some(v)) => evaluate(v, tables, &model, &cfg.eval_options())?,
            (Some(tables), None) => evaluate(dataset, tables, &model, &cfg.eval_options())?,
            (None, Some(v)) => evaluate_baseline(v, &model)?,
            (None, None) => evaluate_baseline(dataset, &model)?,
        };
        metrics.push(MetricsRow {
            step,
            epoch,
            loss: epoch_loss / dataset.len() as f64,
            train_acc: epoch_correct as f64 / dataset.len() as f64,
            val_acc: val_report.accuracy,
        });
    }
    Ok((jpeg, model, metrics))
}

/// Jointly trains the classifier and the quantization tables.
pub fn train(
    dataset: &LabeledDataset,
    val: Option<&LabeledDataset>,
    tables: &QuantTables,
    model: &ClassifierParams,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    tables.validate()?;
    let (tables, model, metrics) = train_impl(dataset, val, Some(tables.clone()), model, cfg)?;
    Ok(TrainOutcome { tables: tables.expect("joint training keeps its tables"), model, metrics })
}

/// Trains the classifier alone, without the JPEG layer. Shares the training
/// loop with [`train`], so a frozen layer folded into the dataset gives
/// bit-identical results.
pub fn train_baseline(
    dataset: &LabeledDataset,
    val: Option<&LabeledDataset>,
    model: &ClassifierParams,
    cfg: &TrainConfig,
) -> Result<BaselineOutcome> {
    let (_, model, metrics) = train_impl(dataset, val, None, model, cfg)?;
    Ok(BaselineOutcome { model, metrics })
}

/// Accuracy and mean loss of `model` behind the JPEG layer.
pub fn evaluate(
    dataset: &LabeledDataset,
    tables: &QuantTables,
    model: &ClassifierParams,
    opts: &EvalOptions,
) -> Result<EvalReport> {
    tables.validate()?;
    check_dataset(dataset, model, opts.subsampling)?;
    let layer_opts = LayerOptions {
        variant: opts.variant,
        subsampling: opts.subsampling,
        masked: opts.masked,
        rounds: opts.rounds,
        phase: Phase::Eval,
        noise_seed: 0,
    };
    let rows: Vec<(f64, bool)> = (0..dataset.len())
        .into_par_iter()
        .map(|i| -> Result<(f64, bool)> {
            let (xhat, _) = jpeg_layer_forward(dataset.image(i), tables, &layer_opts)?;
            let back = model.loss_and_grads(&xhat, dataset.label(i))?;
            Ok((back.loss, argmax(&back.logits) == dataset.label(i)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(&rows))
}

/// Accuracy and mean loss of `model` on the raw images.
pub fn evaluate_baseline(dataset: &LabeledDataset, model: &ClassifierParams) -> Result<EvalReport> {
    let rows: Vec<(f64, bool)> = (0..dataset.len())
        .into_par_iter()
        .map(|i| -> Result<(f64, bool)> {
            let back = model.loss_and_grads(dataset.image(i), dataset.label(i))?;
            Ok((back.loss, argmax(&back.logits) == dataset.label(i)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(&rows))
}

fn summarize(rows: &[(f64, bool)]) -> EvalReport {
    let n = rows.len() as f64;
    EvalReport {
        accuracy: rows.iter().filter(|(_, c)| *c).count() as f64 / n,
        mean_loss: rows.iter().map(|(l, _)| l).sum::<f64>() / n,
    }
}

/// Mean absolute loss gradient at the DCT coefficients per frequency, with
/// the pipeline run unsubsampled and unquantized. The per-sample structure
/// makes the estimate independent of dataset order.
pub fn estimate_sensitivity(
    model: &ClassifierParams,
    dataset: &LabeledDataset,
) -> Result<Sensitivity> {
    check_dataset(dataset, model, SubsamplingMode::S444)?;
    let per_sample: Vec<([f64; 64], [f64; 64], usize, usize)> = (0..dataset.len())
        .into_par_iter()
        .map(|i| -> Result<([f64; 64], [f64; 64], usize, usize)> {
            let img = dataset.image(i);
            let (coeffs, ctx) = pipeline_forward(img, SubsamplingMode::S444)?;
            let xhat = reconstruct_forward(&coeffs, &ctx)?;
            let back = model.loss_and_grads(&xhat, dataset.label(i))?;
            let g = reconstruct_backward(&back.d_pixels, &ctx)?;
            let mut sum_y = [0.0; 64];
            let mut sum_c = [0.0; 64];
            let mut blocks_y = 0;
            let mut blocks_c = 0;
            for (l, channel) in g.channels.iter().enumerate() {
                let sums = if l == 0 { &mut sum_y } else { &mut sum_c };
                for (j, v) in channel.data().iter().enumerate() {
                    sums[j % 64] += v.abs();
                }
                if l == 0 {
                    blocks_y += channel.num_blocks();
                } else {
                    blocks_c += channel.num_blocks();
                }
            }
            Ok((sum_y, sum_c, blocks_y, blocks_c))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut s_y = vec![0.0; 64];
    let mut s_c = vec![0.0; 64];
    let mut blocks_y = 0usize;
    let mut blocks_c = 0usize;
    for (sum_y, sum_c, by, bc) in &per_sample {
        for m in 0..64 {
            s_y[m] += sum_y[m];
            s_c[m] += sum_c[m];
        }
        blocks_y += by;
        blocks_c += bc;
    }
    for v in &mut s_y {
        *v /= blocks_y as f64;
    }
    for v in &mut s_c {
        *v /= blocks_c as f64;
    }
    Ok(Sensitivity { s_y, s_c })
}
