//! Full-range BT.601 color conversion between RGB and YCbCr.
//!
//! No clamping is applied in either direction: the layer must stay
//! differentiable, and intermediate values may leave [0, 255].

use crate::error::{Error, Result};
use crate::tensor::ImageTensor;

/// Row-major RGB -> YCbCr matrix; the chroma rows get a +128 offset.
const FORWARD: [[f64; 3]; 3] = [
    [0.299, 0.587, 0.114],
    [-0.168736, -0.331264, 0.5],
    [0.5, -0.418688, -0.081312],
];

/// Cofactor inversion of a 3x3 matrix, evaluated at compile time.
const fn invert3(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let mut out = [[0.0; 3]; 3];
    let mut r = 0;
    while r < 3 {
        let mut c = 0;
        while c < 3 {
            // Adjugate entry: transposed cofactor with checkerboard sign.
            let (a, b) = ((r + 1) % 3, (r + 2) % 3);
            let (p, q) = ((c + 1) % 3, (c + 2) % 3);
            out[r][c] = (m[p][a] * m[q][b] - m[p][b] * m[q][a]) / det;
            c += 1;
        }
        r += 1;
    }
    out
}

/// Row-major YCbCr -> RGB matrix applied to (Y, Cb-128, Cr-128): the exact
/// inverse of [`FORWARD`], close to the familiar rounded coefficients
/// (R = Y + 1.402 Cr', G = Y - 0.344136 Cb' - 0.714136 Cr',
/// B = Y + 1.772 Cb'). Inverting exactly keeps the unquantized pipeline an
/// identity to machine precision rather than to coefficient-rounding error.
const INVERSE: [[f64; 3]; 3] = invert3(&FORWARD);

const OFFSET: [f64; 3] = [0.0, 128.0, 128.0];

fn require_three_channels(t: &ImageTensor, what: &str) -> Result<()> {
    if t.channels() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "{what} needs a 3-channel tensor, got {} channels",
            t.channels()
        )));
    }
    Ok(())
}

fn matrix_map(t: &ImageTensor, m: &[[f64; 3]; 3], pre: &[f64; 3], post: &[f64; 3]) -> ImageTensor {
    let plane = t.height() * t.width();
    let mut out = ImageTensor::zeros(3, t.height(), t.width());
    let (src, dst) = (t.data(), out.data_mut());
    for i in 0..plane {
        let v = [src[i] + pre[0], src[plane + i] + pre[1], src[2 * plane + i] + pre[2]];
        for (row, coeffs) in m.iter().enumerate() {
            dst[row * plane + i] =
                coeffs[0] * v[0] + coeffs[1] * v[1] + coeffs[2] * v[2] + post[row];
        }
    }
    out
}

/// Converts RGB on the [0, 255] scale to full-range YCbCr (chroma centered
/// at 128).
pub fn rgb_to_ycbcr(rgb: &ImageTensor) -> Result<ImageTensor> {
    require_three_channels(rgb, "rgb_to_ycbcr")?;
    Ok(matrix_map(rgb, &FORWARD, &[0.0; 3], &OFFSET))
}

/// Inverse of [`rgb_to_ycbcr`]; output is not clamped.
pub fn ycbcr_to_rgb(ycbcr: &ImageTensor) -> Result<ImageTensor> {
    require_three_channels(ycbcr, "ycbcr_to_rgb")?;
    Ok(matrix_map(ycbcr, &INVERSE, &[0.0, -128.0, -128.0], &[0.0; 3]))
}

const fn transpose(m: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    let mut r = 0;
    while r < 3 {
        let mut c = 0;
        while c < 3 {
            out[r][c] = m[c][r];
            c += 1;
        }
        r += 1;
    }
    out
}

const FORWARD_T: [[f64; 3]; 3] = transpose(&FORWARD);
const INVERSE_T: [[f64; 3]; 3] = transpose(&INVERSE);

/// Pulls a gradient at the YCbCr output back to the RGB input (the transpose
/// of the forward matrix; offsets do not enter gradients).
pub fn rgb_to_ycbcr_backward(grad_ycbcr: &ImageTensor) -> Result<ImageTensor> {
    require_three_channels(grad_ycbcr, "rgb_to_ycbcr_backward")?;
    Ok(matrix_map(grad_ycbcr, &FORWARD_T, &[0.0; 3], &[0.0; 3]))
}

/// Pulls a gradient at the RGB output back to the YCbCr input.
pub fn ycbcr_to_rgb_backward(grad_rgb: &ImageTensor) -> Result<ImageTensor> {
    require_three_channels(grad_rgb, "ycbcr_to_rgb_backward")?;
    Ok(matrix_map(grad_rgb, &INVERSE_T, &[0.0; 3], &[0.0; 3]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pixel(r: f64, g: f64, b: f64) -> ImageTensor {
        ImageTensor::new(3, 1, 1, vec![r, g, b]).unwrap()
    }

    #[test]
    fn black_and_white_map_to_neutral_chroma() {
        let y = rgb_to_ycbcr(&pixel(0.0, 0.0, 0.0)).unwrap();
        assert_eq!(y.data(), &[0.0, 128.0, 128.0]);
        let y = rgb_to_ycbcr(&pixel(255.0, 255.0, 255.0)).unwrap();
        assert!((y.get(0, 0, 0) - 255.0).abs() < 1e-10);
        assert!((y.get(1, 0, 0) - 128.0).abs() < 1e-10);
        assert!((y.get(2, 0, 0) - 128.0).abs() < 1e-10);
    }

    #[test]
    fn pure_red_reference_values() {
        let y = rgb_to_ycbcr(&pixel(255.0, 0.0, 0.0)).unwrap();
        assert!((y.get(0, 0, 0) - 76.245).abs() < 1e-3, "Y = {}", y.get(0, 0, 0));
        assert!((y.get(1, 0, 0) - 84.972).abs() < 1e-3, "Cb = {}", y.get(1, 0, 0));
        assert!((y.get(2, 0, 0) - 255.5).abs() < 1e-3, "Cr = {}", y.get(2, 0, 0));
    }

    #[test]
    fn round_trip_is_an_identity_to_machine_precision() {
        let rgb = pixel(12.0, 200.0, 99.0);
        let back = ycbcr_to_rgb(&rgb_to_ycbcr(&rgb).unwrap()).unwrap();
        for (a, b) in rgb.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn inverse_matches_the_published_coefficients() {
        let rounded = [
            [1.0, 0.0, 1.402],
            [1.0, -0.344136, -0.714136],
            [1.0, 1.772, 0.0],
        ];
        for r in 0..3 {
            for c in 0..3 {
                assert!(
                    (INVERSE[r][c] - rounded[r][c]).abs() < 1e-5,
                    "entry ({r},{c}): {} vs {}",
                    INVERSE[r][c],
                    rounded[r][c]
                );
            }
        }
    }

    #[test]
    fn backward_is_the_matrix_transpose() {
        // <A x, g> == <x, A^T g> for a few vectors.
        let x = pixel(3.0, -5.0, 7.0);
        let g = pixel(0.25, 1.5, -2.0);
        let ax = matrix_map(&x, &FORWARD, &[0.0; 3], &[0.0; 3]);
        let atg = rgb_to_ycbcr_backward(&g).unwrap();
        let lhs: f64 = ax.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(atg.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_rgb_tensors() {
        let t = ImageTensor::zeros(1, 2, 2);
        assert!(rgb_to_ycbcr(&t).is_err());
        assert!(ycbcr_to_rgb(&t).is_err());
    }
}
