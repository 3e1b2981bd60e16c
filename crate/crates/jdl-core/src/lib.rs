//! Differentiable JPEG compression with exact analytic gradients.
//!
//! The crate provides a JPEG analysis/synthesis pipeline (color transform,
//! chroma subsampling, blockwise orthonormal DCT, zigzag ordering), a soft
//! quantizer whose expectation under a Gaussian-shaped categorical
//! distribution is differentiable in the input, the step, and the sharpness,
//! and a small training harness that learns quantization tables jointly
//! with a classifier. Every backward pass is an exact transpose or a
//! closed-form derivative; `gradcheck` verifies them against finite
//! differences.

pub mod error;
pub mod gradcheck;
pub mod pipeline;
pub mod qtable;
pub mod quantizer;
pub mod tensor;
pub mod trainer;

pub use error::{Error, Result};
pub use pipeline::{
    pipeline_backward, pipeline_forward, reconstruct_backward, reconstruct_forward,
    DctCoefficients, PipelineContext, SubsamplingMode,
};
pub use qtable::{
    default_half_width, init_magnitude, init_ones, init_sensitivity, tables_from_sensitivity,
    MagnitudeInitOptions, QuantTables, Sensitivity, DEFAULT_ALPHA,
};
pub use quantizer::{
    quantize_grad, quantize_soft, quantize_stochastic, quantize_uniform, quantize_variant, Phase,
    QuantGrad, QuantizerParams, QuantizerVariant, SoftStats, Q_MIN,
};
pub use tensor::{ImageTensor, LabeledDataset};
pub use trainer::{
    adversarial_eval, estimate_sensitivity, evaluate, evaluate_baseline, train, train_baseline,
    Architecture, AttackConfig, AttackMethod, ClassifierParams, EvalOptions, EvalReport,
    LayerOptions, MetricsRow, TableOptimizerKind, TrainConfig, TrainOutcome,
};
