//! Chroma subsampling and the matching nearest-neighbor upsampling.
//!
//! Subsampling mean-pools the chroma planes (4:2:2 halves the width, 4:2:0
//! halves both dimensions); luma is never touched. Because pooled planes have
//! their own dimensions, the YCbCr signal is carried as three independent
//! [`Plane`]s rather than one tensor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::ImageTensor;

/// Chroma subsampling layout.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SubsamplingMode {
    /// No subsampling.
    S444,
    /// Chroma width halved.
    S422,
    /// Chroma width and height halved.
    S420,
}

impl SubsamplingMode {
    /// (vertical, horizontal) pooling factors applied to chroma.
    pub fn chroma_factors(self) -> (usize, usize) {
        match self {
            SubsamplingMode::S444 => (1, 1),
            SubsamplingMode::S422 => (1, 2),
            SubsamplingMode::S420 => (2, 2),
        }
    }

    /// Image dimensions must be a multiple of this for the chroma planes to
    /// stay 8-aligned after pooling.
    pub fn required_alignment(self) -> usize {
        let (fy, fx) = self.chroma_factors();
        8 * fy.max(fx)
    }
}

/// A single-channel raster of `f64` samples.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane {
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl Plane {
    pub fn new(height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::ShapeMismatch(format!(
                "plane {height}x{width} needs {} samples, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self { height, width, data })
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![0.0; height * width] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }
}

/// YCbCr signal as three planes, possibly of different resolutions.
#[derive(Clone, Debug, PartialEq)]
pub struct YcbcrPlanes {
    pub y: Plane,
    pub cb: Plane,
    pub cr: Plane,
}

impl YcbcrPlanes {
    pub fn plane(&self, channel: usize) -> &Plane {
        match channel {
            0 => &self.y,
            1 => &self.cb,
            2 => &self.cr,
            _ => panic!("channel {channel} out of range"),
        }
    }

    pub fn plane_mut(&mut self, channel: usize) -> &mut Plane {
        match channel {
            0 => &mut self.y,
            1 => &mut self.cb,
            2 => &mut self.cr,
            _ => panic!("channel {channel} out of range"),
        }
    }
}

/// Splits a 3-channel tensor into equal-resolution planes.
pub fn split_planes(t: &ImageTensor) -> Result<YcbcrPlanes> {
    if t.channels() != 3 {
        return Err(Error::ShapeMismatch(format!(
            "expected a 3-channel tensor, got {} channels",
            t.channels()
        )));
    }
    let plane = |c: usize| Plane::new(t.height(), t.width(), t.channel(c).to_vec());
    Ok(YcbcrPlanes { y: plane(0)?, cb: plane(1)?, cr: plane(2)? })
}

/// Merges equal-resolution planes back into a 3-channel tensor.
pub fn merge_planes(p: &YcbcrPlanes) -> Result<ImageTensor> {
    for (name, plane) in [("cb", &p.cb), ("cr", &p.cr)] {
        if plane.height != p.y.height || plane.width != p.y.width {
            return Err(Error::ShapeMismatch(format!(
                "{name} plane is {}x{}, expected {}x{}",
                plane.height, plane.width, p.y.height, p.y.width
            )));
        }
    }
    let mut data = Vec::with_capacity(3 * p.y.data.len());
    data.extend_from_slice(&p.y.data);
    data.extend_from_slice(&p.cb.data);
    data.extend_from_slice(&p.cr.data);
    ImageTensor::new(3, p.y.height, p.y.width, data)
}

fn pool(plane: &Plane, fy: usize, fx: usize) -> Result<Plane> {
    if plane.height % fy != 0 || plane.width % fx != 0 {
        return Err(Error::ShapeMismatch(format!(
            "plane {}x{} is not divisible by the {fy}x{fx} pooling factor",
            plane.height, plane.width
        )));
    }
    let (oh, ow) = (plane.height / fy, plane.width / fx);
    let inv = 1.0 / (fy * fx) as f64;
    let mut out = Plane::zeros(oh, ow);
    for y in 0..oh {
        for x in 0..ow {
            let mut sum = 0.0;
            for dy in 0..fy {
                for dx in 0..fx {
                    sum += plane.get(y * fy + dy, x * fx + dx);
                }
            }
            out.set(y, x, sum * inv);
        }
    }
    Ok(out)
}

/// Distributes a pooled-plane gradient back to the source plane: mean pooling
/// gives every contributing sample `grad / (fy * fx)`.
fn pool_backward(grad: &Plane, fy: usize, fx: usize) -> Plane {
    let mut out = Plane::zeros(grad.height * fy, grad.width * fx);
    let inv = 1.0 / (fy * fx) as f64;
    for y in 0..grad.height {
        for x in 0..grad.width {
            let g = grad.get(y, x) * inv;
            for dy in 0..fy {
                for dx in 0..fx {
                    out.set(y * fy + dy, x * fx + dx, g);
                }
            }
        }
    }
    out
}

fn replicate(plane: &Plane, fy: usize, fx: usize) -> Plane {
    let mut out = Plane::zeros(plane.height * fy, plane.width * fx);
    for y in 0..out.height {
        for x in 0..out.width {
            out.set(y, x, plane.get(y / fy, x / fx));
        }
    }
    out
}

/// Sums a full-resolution gradient over each replication cell: the transpose
/// of nearest-neighbor upsampling.
fn replicate_backward(grad: &Plane, fy: usize, fx: usize) -> Result<Plane> {
    if grad.height % fy != 0 || grad.width % fx != 0 {
        return Err(Error::ShapeMismatch(format!(
            "gradient plane {}x{} is not divisible by the {fy}x{fx} factor",
            grad.height, grad.width
        )));
    }
    let mut out = Plane::zeros(grad.height / fy, grad.width / fx);
    for y in 0..grad.height {
        for x in 0..grad.width {
            let v = out.get(y / fy, x / fx) + grad.get(y, x);
            out.set(y / fy, x / fx, v);
        }
    }
    Ok(out)
}

/// Splits a YCbCr tensor into planes and mean-pools the chroma according to
/// `mode`. Fails if the chroma dimensions are not divisible by the factors.
pub fn subsample(ycbcr: &ImageTensor, mode: SubsamplingMode) -> Result<YcbcrPlanes> {
    let planes = split_planes(ycbcr)?;
    let (fy, fx) = mode.chroma_factors();
    Ok(YcbcrPlanes {
        y: planes.y,
        cb: pool(&planes.cb, fy, fx)?,
        cr: pool(&planes.cr, fy, fx)?,
    })
}

/// Nearest-neighbor upsamples the chroma planes back to the luma resolution
/// and merges everything into one YCbCr tensor.
pub fn upsample(planes: &YcbcrPlanes, mode: SubsamplingMode) -> Result<ImageTensor> {
    let (fy, fx) = mode.chroma_factors();
    let merged = YcbcrPlanes {
        y: planes.y.clone(),
        cb: replicate(&planes.cb, fy, fx),
        cr: replicate(&planes.cr, fy, fx),
    };
    merge_planes(&merged)
}

/// Transpose of [`subsample`]: maps a gradient at the subsampled planes to a
/// gradient at the full-resolution YCbCr tensor.
pub fn subsample_backward(grad: &YcbcrPlanes, mode: SubsamplingMode) -> Result<ImageTensor> {
    let (fy, fx) = mode.chroma_factors();
    merge_planes(&YcbcrPlanes {
        y: grad.y.clone(),
        cb: pool_backward(&grad.cb, fy, fx),
        cr: pool_backward(&grad.cr, fy, fx),
    })
}

/// Transpose of [`upsample`]: maps a gradient at the full-resolution YCbCr
/// tensor to a gradient at the subsampled planes.
pub fn upsample_backward(grad: &ImageTensor, mode: SubsamplingMode) -> Result<YcbcrPlanes> {
    let planes = split_planes(grad)?;
    let (fy, fx) = mode.chroma_factors();
    Ok(YcbcrPlanes {
        y: planes.y,
        cb: replicate_backward(&planes.cb, fy, fx)?,
        cr: replicate_backward(&planes.cr, fy, fx)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn s444_is_identity() {
        let t = ImageTensor::new(3, 2, 2, (0..12).map(|i| i as f64).collect()).unwrap();
        let planes = subsample(&t, SubsamplingMode::S444).unwrap();
        let back = upsample(&planes, SubsamplingMode::S444).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn s420_pools_constant_planes_exactly() {
        let t = ImageTensor::constant(3, 4, 4, 31.0);
        let planes = subsample(&t, SubsamplingMode::S420).unwrap();
        assert_eq!((planes.cb.height(), planes.cb.width()), (2, 2));
        assert!(planes.cb.data().iter().all(|&v| v == 31.0));
        let back = upsample(&planes, SubsamplingMode::S420).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn s422_halves_width_with_means() {
        let mut t = ImageTensor::zeros(3, 1, 4);
        for (x, v) in [10.0, 20.0, 30.0, 50.0].iter().enumerate() {
            t.set(1, 0, x, *v);
        }
        let planes = subsample(&t, SubsamplingMode::S422).unwrap();
        assert_eq!(planes.cb.data(), &[15.0, 40.0]);
        assert_eq!(planes.y.width(), 4, "luma must be untouched");
    }

    #[test]
    fn indivisible_dimensions_are_rejected() {
        let t = ImageTensor::zeros(3, 3, 3);
        assert!(subsample(&t, SubsamplingMode::S420).is_err());
        assert!(subsample(&t, SubsamplingMode::S444).is_ok());
    }

    #[test]
    fn pooling_backward_is_the_transpose() {
        // <pool(x), g> == <x, pool_backward(g)> on random-ish data.
        let x = Plane::new(4, 4, (0..16).map(|i| (i as f64).sin()).collect()).unwrap();
        let g = Plane::new(2, 2, vec![1.0, -2.0, 0.5, 3.0]).unwrap();
        let px = pool(&x, 2, 2).unwrap();
        let bg = pool_backward(&g, 2, 2);
        let lhs: f64 = px.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(bg.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }

    #[test]
    fn replication_backward_is_the_transpose() {
        let x = Plane::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let g = Plane::new(4, 4, (0..16).map(|i| (i as f64) * 0.25 - 1.0).collect()).unwrap();
        let rx = replicate(&x, 2, 2);
        let bg = replicate_backward(&g, 2, 2).unwrap();
        let lhs: f64 = rx.data().iter().zip(g.data()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.data().iter().zip(bg.data()).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
