//! Blockwise orthonormal 8x8 DCT-II with zigzag coefficient layout.
//!
//! Pixels are level-shifted by -128 before the forward transform; the
//! inverse adds the shift back. The transform pair is orthonormal, so the
//! inverse is the exact transpose of the forward and Parseval's identity
//! holds up to rounding.

use std::sync::LazyLock;

use crate::error::{Error, Result};
use crate::pipeline::sample::{Plane, YcbcrPlanes};
use crate::pipeline::zigzag::ZIGZAG_TO_RASTER;

/// Pixel level shift applied before the forward DCT.
pub const LEVEL_SHIFT: f64 = 128.0;

/// `BASIS[k][n] = s_k cos(pi (2n+1) k / 16)` with `s_0 = sqrt(1/8)`,
/// `s_k = 1/2` otherwise: the orthonormal 1-D DCT-II matrix.
static BASIS: LazyLock<[[f64; 8]; 8]> = LazyLock::new(|| {
    let mut basis = [[0.0; 8]; 8];
    for (k, row) in basis.iter_mut().enumerate() {
        let scale = if k == 0 { (1.0f64 / 8.0).sqrt() } else { 0.5 };
        for (n, value) in row.iter_mut().enumerate() {
            *value = scale * ((2 * n + 1) as f64 * k as f64 * std::f64::consts::PI / 16.0).cos();
        }
    }
    basis
});

/// Zigzag-ordered coefficients of one channel, block-major: entry
/// `n * 64 + m` is frequency `m` of block `n`, blocks in raster order.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelCoefficients {
    blocks_high: usize,
    blocks_wide: usize,
    data: Vec<f64>,
}

impl ChannelCoefficients {
    pub fn zeros(blocks_high: usize, blocks_wide: usize) -> Self {
        Self { blocks_high, blocks_wide, data: vec![0.0; blocks_high * blocks_wide * 64] }
    }

    pub fn blocks_high(&self) -> usize {
        self.blocks_high
    }

    pub fn blocks_wide(&self) -> usize {
        self.blocks_wide
    }

    pub fn num_blocks(&self) -> usize {
        self.blocks_high * self.blocks_wide
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Coefficient at frequency `m` (zigzag index) of block `n`.
    #[inline]
    pub fn coeff(&self, n: usize, m: usize) -> f64 {
        self.data[n * 64 + m]
    }
}

/// Zigzag DCT coefficients for the three channels (Y, Cb, Cr).
#[derive(Clone, Debug, PartialEq)]
pub struct DctCoefficients {
    pub channels: [ChannelCoefficients; 3],
}

impl DctCoefficients {
    /// Total number of coefficients across all channels.
    pub fn len(&self) -> usize {
        self.channels.iter().map(|c| c.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Zeroed coefficients with the same block layout.
    pub fn zeros_like(&self) -> Self {
        Self {
            channels: [
                ChannelCoefficients::zeros(self.channels[0].blocks_high, self.channels[0].blocks_wide),
                ChannelCoefficients::zeros(self.channels[1].blocks_high, self.channels[1].blocks_wide),
                ChannelCoefficients::zeros(self.channels[2].blocks_high, self.channels[2].blocks_wide),
            ],
        }
    }
}

/// 2-D orthonormal DCT of one 8x8 block, `src` in raster order.
fn dct_block(src: &[f64; 64]) -> [f64; 64] {
    let basis = &*BASIS;
    // Rows first: tmp[r][v] = sum_c basis[v][c] * src[r][c].
    let mut tmp = [0.0f64; 64];
    for r in 0..8 {
        for v in 0..8 {
            let mut acc = 0.0;
            for c in 0..8 {
                acc += basis[v][c] * src[r * 8 + c];
            }
            tmp[r * 8 + v] = acc;
        }
    }
    // Then columns: out[u][v] = sum_r basis[u][r] * tmp[r][v].
    let mut out = [0.0f64; 64];
    for u in 0..8 {
        for v in 0..8 {
            let mut acc = 0.0;
            for r in 0..8 {
                acc += basis[u][r] * tmp[r * 8 + v];
            }
            out[u * 8 + v] = acc;
        }
    }
    out
}

/// Inverse of [`dct_block`]; exact transpose of the forward transform.
fn idct_block(src: &[f64; 64]) -> [f64; 64] {
    let basis = &*BASIS;
    let mut tmp = [0.0f64; 64];
    for u in 0..8 {
        for c in 0..8 {
            let mut acc = 0.0;
            for v in 0..8 {
                acc += basis[v][c] * src[u * 8 + v];
            }
            tmp[u * 8 + c] = acc;
        }
    }
    let mut out = [0.0f64; 64];
    for r in 0..8 {
        for c in 0..8 {
            let mut acc = 0.0;
            for u in 0..8 {
                acc += basis[u][r] * tmp[u * 8 + c];
            }
            out[r * 8 + c] = acc;
        }
    }
    out
}

fn require_aligned(plane: &Plane, what: &str) -> Result<(usize, usize)> {
    if plane.height() % 8 != 0 || plane.width() % 8 != 0 {
        return Err(Error::ShapeMismatch(format!(
            "{what} plane is {}x{}, which is not a multiple of 8",
            plane.height(),
            plane.width()
        )));
    }
    Ok((plane.height() / 8, plane.width() / 8))
}

/// `shift` is subtracted from every sample before the transform; the linear
/// backward passes reuse this with `shift = 0`.
fn plane_dct(plane: &Plane, shift: f64, what: &str) -> Result<ChannelCoefficients> {
    let (bh, bw) = require_aligned(plane, what)?;
    let mut out = ChannelCoefficients::zeros(bh, bw);
    let mut block = [0.0f64; 64];
    for by in 0..bh {
        for bx in 0..bw {
            for r in 0..8 {
                for c in 0..8 {
                    block[r * 8 + c] = plane.get(by * 8 + r, bx * 8 + c) - shift;
                }
            }
            let coeffs = dct_block(&block);
            let n = by * bw + bx;
            let dst = &mut out.data_mut()[n * 64..(n + 1) * 64];
            for (m, &raster) in ZIGZAG_TO_RASTER.iter().enumerate() {
                dst[m] = coeffs[raster];
            }
        }
    }
    Ok(out)
}

/// `shift` is added to every sample after the transform.
fn plane_idct(coeffs: &ChannelCoefficients, shift: f64) -> Plane {
    let (bh, bw) = (coeffs.blocks_high, coeffs.blocks_wide);
    let mut out = Plane::zeros(bh * 8, bw * 8);
    let mut block = [0.0f64; 64];
    for by in 0..bh {
        for bx in 0..bw {
            let n = by * bw + bx;
            let src = &coeffs.data()[n * 64..(n + 1) * 64];
            for (m, &raster) in ZIGZAG_TO_RASTER.iter().enumerate() {
                block[raster] = src[m];
            }
            let pixels = idct_block(&block);
            for r in 0..8 {
                for c in 0..8 {
                    out.set(by * 8 + r, bx * 8 + c, pixels[r * 8 + c] + shift);
                }
            }
        }
    }
    out
}

/// Level-shifts each plane by -128 and takes the blockwise DCT, packing
/// coefficients in zigzag order. Every plane must be 8-aligned.
pub fn forward_dct(planes: &YcbcrPlanes) -> Result<DctCoefficients> {
    Ok(DctCoefficients {
        channels: [
            plane_dct(&planes.y, LEVEL_SHIFT, "luma")?,
            plane_dct(&planes.cb, LEVEL_SHIFT, "cb")?,
            plane_dct(&planes.cr, LEVEL_SHIFT, "cr")?,
        ],
    })
}

/// Inverse blockwise DCT; adds the +128 level shift back.
pub fn inverse_dct(coeffs: &DctCoefficients) -> YcbcrPlanes {
    YcbcrPlanes {
        y: plane_idct(&coeffs.channels[0], LEVEL_SHIFT),
        cb: plane_idct(&coeffs.channels[1], LEVEL_SHIFT),
        cr: plane_idct(&coeffs.channels[2], LEVEL_SHIFT),
    }
}

/// Transpose of [`forward_dct`]: a gradient at the coefficients maps back
/// through the (orthonormal) inverse transform; the level shift drops out.
pub fn forward_dct_backward(grad: &DctCoefficients) -> YcbcrPlanes {
    YcbcrPlanes {
        y: plane_idct(&grad.channels[0], 0.0),
        cb: plane_idct(&grad.channels[1], 0.0),
        cr: plane_idct(&grad.channels[2], 0.0),
    }
}

/// Transpose of [`inverse_dct`]: a gradient at the reconstructed planes maps
/// forward through the transform without any level shift.
pub fn inverse_dct_backward(grad: &YcbcrPlanes) -> Result<DctCoefficients> {
    Ok(DctCoefficients {
        channels: [
            plane_dct(&grad.y, 0.0, "luma gradient")?,
            plane_dct(&grad.cb, 0.0, "cb gradient")?,
            plane_dct(&grad.cr, 0.0, "cr gradient")?,
        ],
    })
}
