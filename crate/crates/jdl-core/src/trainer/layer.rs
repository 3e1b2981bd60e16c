//! The differentiable JPEG layer: pipeline, per-coefficient quantization,
//! reconstruction, and the exact backward pass.
//!
//! The forward pass caches one [`QuantGrad`] per coefficient; the backward
//! pass turns an upstream pixel gradient into gradients at the input pixels
//! and at the 4 x 64 table entries (chroma channels share their slots).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::pipeline::{
    pipeline_backward, pipeline_forward, reconstruct_backward, reconstruct_forward,
    PipelineContext, SubsamplingMode,
};
use crate::qtable::QuantTables;
use crate::quantizer::{quantize_variant, Phase, QuantGrad, QuantizerVariant};
use crate::tensor::ImageTensor;

/// Forward-pass configuration for the layer.
#[derive(Clone, Copy, Debug)]
pub struct LayerOptions {
    pub variant: QuantizerVariant,
    pub subsampling: SubsamplingMode,
    /// Use the windowed soft quantizer instead of the full alphabet.
    pub masked: bool,
    /// How many times the quantizer is composed with itself (>= 1).
    pub rounds: usize,
    pub phase: Phase,
    /// Base seed for the additive-noise variant; each coefficient draws from
    /// its own stream derived from this and its position.
    pub noise_seed: u64,
}

impl Default for LayerOptions {
    fn default() -> Self {
        Self {
            variant: QuantizerVariant::Soft,
            subsampling: SubsamplingMode::S444,
            masked: false,
            rounds: 1,
            phase: Phase::Eval,
            noise_seed: 0,
        }
    }
}

/// Everything the backward pass needs from a forward pass.
#[derive(Clone, Debug)]
pub struct LayerContext {
    pctx: PipelineContext,
    height: usize,
    width: usize,
    grads: [Vec<QuantGrad>; 3],
}

/// Gradients produced by [`jpeg_layer_backward`].
#[derive(Clone, Debug)]
pub struct LayerGrads {
    pub d_pixels: ImageTensor,
    pub d_q_y: Vec<f64>,
    pub d_q_c: Vec<f64>,
    pub d_alpha_y: Vec<f64>,
    pub d_alpha_c: Vec<f64>,
}

/// Differentiable JPEG round trip. Returns the reconstructed image (not
/// clamped to `[0, 255]`) and the context for the backward pass.
pub fn jpeg_layer_forward(
    rgb: &ImageTensor,
    tables: &QuantTables,
    opts: &LayerOptions,
) -> Result<(ImageTensor, LayerContext)> {
    tables.validate()?;
    if opts.rounds == 0 {
        return Err(Error::InvalidArgument("rounds must be at least 1".to_string()));
    }
    let (mut coeffs, pctx) = pipeline_forward(rgb, opts.subsampling)?;
    let mut grads: [Vec<QuantGrad>; 3] = Default::default();
    let mut linear_index: u64 = 0;
    for (l, (channel, cache)) in coeffs.channels.iter_mut().zip(&mut grads).enumerate() {
        let group = usize::from(l != 0);
        cache.reserve(channel.num_blocks() * 64);
        let data = channel.data_mut();
        for (i, value) in data.iter_mut().enumerate() {
            let params = tables.params_for(group, i % 64);
            let mut rng = ChaCha8Rng::seed_from_u64(opts.noise_seed ^ linear_index);
            // Compose `rounds` applications; the chain rule folds each
            // round's partials into the running totals.
            let mut z = *value;
            let mut total = QuantGrad { d_z: 1.0, d_q: 0.0, d_alpha: 0.0 };
            for _ in 0..opts.rounds {
                let (v, g) =
                    quantize_variant(z, &params, opts.variant, opts.masked, opts.phase, &mut rng);
                total = QuantGrad {
                    d_z: g.d_z * total.d_z,
                    d_q: g.d_z * total.d_q + g.d_q,
                    d_alpha: g.d_z * total.d_alpha + g.d_alpha,
                };
                z = v;
            }
            *value = z;
            cache.push(total);
            linear_index += 1;
        }
    }
    let xhat = reconstruct_forward(&coeffs, &pctx)?;
    let ctx = LayerContext { pctx, height: rgb.height(), width: rgb.width(), grads };
    Ok((xhat, ctx))
}

/// Backward pass: maps a gradient at the reconstructed pixels to gradients
/// at the input pixels and at the shared table entries.
pub fn jpeg_layer_backward(upstream: &ImageTensor, ctx: &LayerContext) -> Result<LayerGrads> {
    if upstream.channels() != 3 || upstream.height() != ctx.height || upstream.width() != ctx.width
    {
        return Err(Error::ShapeMismatch(format!(
            "upstream gradient is {}x{}x{}, layer ran on 3x{}x{}",
            upstream.channels(),
            upstream.height(),
            upstream.width(),
            ctx.height,
            ctx.width
        )));
    }
    let mut g_coeffs = reconstruct_backward(upstream, &ctx.pctx)?;
    let mut d_q_y = vec![0.0; 64];
    let mut d_q_c = vec![0.0; 64];
    let mut d_alpha_y = vec![0.0; 64];
    let mut d_alpha_c = vec![0.0; 64];
    for (l, channel) in g_coeffs.channels.iter_mut().enumerate() {
        let cache = &ctx.grads[l];
        if cache.len() != channel.num_blocks() * 64 {
            return Err(Error::ShapeMismatch(
                "layer context does not match the upstream gradient".to_string(),
            ));
        }
        let (d_q, d_alpha) = if l == 0 {
            (&mut d_q_y, &mut d_alpha_y)
        } else {
            (&mut d_q_c, &mut d_alpha_c)
        };
        for (i, value) in channel.data_mut().iter_mut().enumerate() {
            let up = *value;
            let g = &cache[i];
            *value = up * g.d_z;
            d_q[i % 64] += up * g.d_q;
            d_alpha[i % 64] += up * g.d_alpha;
        }
    }
    let d_pixels = pipeline_backward(&g_coeffs, &ctx.pctx)?;
    Ok(LayerGrads { d_pixels, d_q_y, d_q_c, d_alpha_y, d_alpha_c })
}
