//! The JPEG transform pipeline and its exact transposes.
//!
//! The analysis half maps RGB pixels to zigzag DCT coefficients
//! (`rgb_to_ycbcr -> subsample -> forward_dct`); the synthesis half maps
//! (quantized) coefficients back (`inverse_dct -> upsample -> ycbcr_to_rgb`).
//! Every stage is linear up to constant offsets, so the backward passes are
//! plain transposes chained in reverse, exact to rounding.

mod color;
mod dct;
mod sample;
mod zigzag;

pub use color::{rgb_to_ycbcr, rgb_to_ycbcr_backward, ycbcr_to_rgb, ycbcr_to_rgb_backward};
pub use dct::{
    forward_dct, forward_dct_backward, inverse_dct, inverse_dct_backward, ChannelCoefficients,
    DctCoefficients, LEVEL_SHIFT,
};
pub use sample::{
    merge_planes, split_planes, subsample, subsample_backward, upsample, upsample_backward,
    Plane, SubsamplingMode, YcbcrPlanes,
};
pub use zigzag::{zigzag_index, RASTER_TO_ZIGZAG, ZIGZAG_TO_RASTER};

use crate::error::Result;
use crate::tensor::ImageTensor;

/// Everything the backward passes need to know about a forward run.
#[derive(Clone, Copy, Debug)]
pub struct PipelineContext {
    pub mode: SubsamplingMode,
}

/// Analysis half: RGB pixels to zigzag DCT coefficients.
pub fn pipeline_forward(
    rgb: &ImageTensor,
    mode: SubsamplingMode,
) -> Result<(DctCoefficients, PipelineContext)> {
    let ycbcr = rgb_to_ycbcr(rgb)?;
    let planes = subsample(&ycbcr, mode)?;
    Ok((forward_dct(&planes)?, PipelineContext { mode }))
}

/// Transpose of [`pipeline_forward`]: a gradient at the coefficients becomes
/// a gradient at the input pixels.
pub fn pipeline_backward(grad: &DctCoefficients, ctx: &PipelineContext) -> Result<ImageTensor> {
    let planes = forward_dct_backward(grad);
    let ycbcr = subsample_backward(&planes, ctx.mode)?;
    rgb_to_ycbcr_backward(&ycbcr)
}

/// Synthesis half: coefficients back to RGB pixels (not clamped).
pub fn reconstruct_forward(
    coeffs: &DctCoefficients,
    ctx: &PipelineContext,
) -> Result<ImageTensor> {
    let planes = inverse_dct(coeffs);
    let ycbcr = upsample(&planes, ctx.mode)?;
    ycbcr_to_rgb(&ycbcr)
}

/// Transpose of [`reconstruct_forward`]: a gradient at the reconstructed
/// pixels becomes a gradient at the coefficients.
pub fn reconstruct_backward(grad: &ImageTensor, ctx: &PipelineContext) -> Result<DctCoefficients> {
    let ycbcr = ycbcr_to_rgb_backward(grad)?;
    let planes = upsample_backward(&ycbcr, ctx.mode)?;
    inverse_dct_backward(&planes)
}
