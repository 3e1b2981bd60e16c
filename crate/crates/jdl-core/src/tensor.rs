//! Image tensors, on-disk formats, and dataset handling.
//!
//! Images are dense `f64` tensors in channel-major layout (`[channel][row][col]`)
//! with RGB samples on the [0, 255] scale. Two on-disk formats are supported:
//! binary PPM (`P6`, maxval 255) and the raw `JDLT` tensor format documented
//! at [`save_raw`]. Datasets are directories indexed by a `dataset.csv` file;
//! see [`load_dataset_dir`].

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Dense channel-major image tensor with `f64` samples.
///
/// The data length is always `channels * height * width`; constructors reject
/// anything else, and dimensions are non-zero.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageTensor {
    channels: usize,
    height: usize,
    width: usize,
    data: Vec<f64>,
}

impl ImageTensor {
    pub fn new(channels: usize, height: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 || height == 0 || width == 0 {
            return Err(Error::InvalidArgument(format!(
                "tensor dimensions must be non-zero, got {channels}x{height}x{width}"
            )));
        }
        let expected = channels
            .checked_mul(height)
            .and_then(|n| n.checked_mul(width))
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "tensor dimensions {channels}x{height}x{width} overflow"
                ))
            })?;
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "tensor {channels}x{height}x{width} needs {expected} samples, got {}",
                data.len()
            )));
        }
        Ok(Self { channels, height, width, data })
    }

    pub fn zeros(channels: usize, height: usize, width: usize) -> Self {
        Self::constant(channels, height, width, 0.0)
    }

    pub fn constant(channels: usize, height: usize, width: usize, value: f64) -> Self {
        assert!(channels > 0 && height > 0 && width > 0, "dimensions must be non-zero");
        Self { channels, height, width, data: vec![value; channels * height * width] }
    }

    pub fn channels(&self) -> usize {
        self.channels
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
    fn index(&self, c: usize, y: usize, x: usize) -> usize {
        debug_assert!(c < self.channels && y < self.height && x < self.width);
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, y: usize, x: usize) -> f64 {
        self.data[self.index(c, y, x)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, y: usize, x: usize, value: f64) {
        let i = self.index(c, y, x);
        self.data[i] = value;
    }

    /// Contiguous samples of one channel.
    pub fn channel(&self, c: usize) -> &[f64] {
        let plane = self.height * self.width;
        &self.data[c * plane..(c + 1) * plane]
    }

    /// True when both tensors have identical dimensions.
    pub fn same_shape(&self, other: &ImageTensor) -> bool {
        self.channels == other.channels
            && self.height == other.height
            && self.width == other.width
    }
}

/// Reads a binary PPM (`P6`) image with maxval 255 into an RGB tensor.
///
/// Header comments (`#` to end of line) are accepted. Malformed input yields
/// [`Error::Format`] carrying the absolute byte offset of the problem.
pub fn load_ppm(path: &Path) -> Result<ImageTensor> {
    parse_ppm(&fs::read(path)?)
}

pub(crate) fn parse_ppm(bytes: &[u8]) -> Result<ImageTensor> {
    if bytes.len() < 2 || &bytes[..2] != b"P6" {
        return Err(Error::Format {
            offset: 0,
            reason: "expected PPM magic \"P6\"".to_string(),
        });
    }
    let mut pos = 2;
    let (width, w_off) = read_ppm_int(bytes, &mut pos, "width")?;
    let (height, h_off) = read_ppm_int(bytes, &mut pos, "height")?;
    let (maxval, m_off) = read_ppm_int(bytes, &mut pos, "maxval")?;
    if width == 0 || height == 0 {
        return Err(Error::Format {
            offset: if width == 0 { w_off } else { h_off },
            reason: "image dimensions must be positive".to_string(),
        });
    }
    if maxval != 255 {
        return Err(Error::Format {
            offset: m_off,
            reason: format!("unsupported maxval {maxval}, only 255 is supported"),
        });
    }
    // Exactly one whitespace byte separates the header from the pixel payload.
    match bytes.get(pos) {
        Some(b) if b.is_ascii_whitespace() => pos += 1,
        Some(b) => {
            return Err(Error::Format {
                offset: pos,
                reason: format!("expected single whitespace before pixel data, found 0x{b:02x}"),
            })
        }
        None => {
            return Err(Error::Format {
                offset: pos,
                reason: "unexpected end of file before pixel data".to_string(),
            })
        }
    }
    let needed = 3 * width * height;
    let available = bytes.len() - pos;
    if available < needed {
        return Err(Error::Format {
            offset: bytes.len(),
            reason: format!(
                "pixel payload truncated: expected {needed} bytes at offset {pos}, found {available}"
            ),
        });
    }
    let mut data = vec![0.0; needed];
    let plane = width * height;
    for y in 0..height {
        for x in 0..width {
            let src = pos + 3 * (y * width + x);
            for c in 0..3 {
                data[c * plane + y * width + x] = bytes[src + c] as f64;
            }
        }
    }
    ImageTensor::new(3, height, width, data)
}

/// Reads one ASCII integer from a PPM header, skipping whitespace and
/// comments. Returns the value and the byte offset of its first digit.
fn read_ppm_int(bytes: &[u8], pos: &mut usize, what: &str) -> Result<(usize, usize)> {
    loop {
        match bytes.get(*pos) {
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(b'#') => {
                while let Some(b) = bytes.get(*pos) {
                    *pos += 1;
                    if *b == b'\n' {
                        break;
                    }
                }
            }
            Some(_) => break,
            None => {
                return Err(Error::Format {
                    offset: *pos,
                    reason: format!("unexpected end of header while reading {what}"),
                })
            }
        }
    }
    let start = *pos;
    let mut value = 0usize;
    let mut digits = 0usize;
    while let Some(b) = bytes.get(*pos) {
        if !b.is_ascii_digit() {
            break;
        }
        value = value
            .checked_mul(10)
            .and_then(|v| v.checked_add((b - b'0') as usize))
            .filter(|&v| v <= 1 << 30)
            .ok_or_else(|| Error::Format {
                offset: start,
                reason: format!("{what} is too large"),
            })?;
        digits += 1;
        *pos += 1;
    }
    if digits == 0 {
        return Err(Error::Format {
            offset: start,
            reason: format!("expected digit in {what}, found byte 0x{:02x}", bytes[start]),
        });
    }
    Ok((value, start))
}

const RAW_MAGIC: &[u8; 4] = b"JDLT";
const RAW_VERSION: u32 = 1;

/// Writes a tensor in the raw `JDLT` format.
///
/// Layout, all integers little-endian: magic `JDLT`, `u32` version (1),
/// `u32` channels, `u32` height, `u32` width, then `channels*height*width`
/// `f32` samples in channel-major order. Samples are narrowed from `f64` to
/// `f32` on write, so a save/load round trip is bit-exact only for values
/// already representable in `f32` (integer pixel data in particular).
pub fn save_raw(tensor: &ImageTensor, path: &Path) -> Result<()> {
    for (name, dim) in [
        ("channels", tensor.channels),
        ("height", tensor.height),
        ("width", tensor.width),
    ] {
        if dim > u32::MAX as usize {
            return Err(Error::InvalidArgument(format!("{name} {dim} exceeds u32 range")));
        }
    }
    let mut bytes = Vec::with_capacity(20 + 4 * tensor.data.len());
    bytes.extend_from_slice(RAW_MAGIC);
    bytes.extend_from_slice(&RAW_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(tensor.channels as u32).to_le_bytes());
    bytes.extend_from_slice(&(tensor.height as u32).to_le_bytes());
    bytes.extend_from_slice(&(tensor.width as u32).to_le_bytes());
    for &v in &tensor.data {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads a tensor written by [`save_raw`].
pub fn load_raw(path: &Path) -> Result<ImageTensor> {
    parse_raw(&fs::read(path)?)
}

pub(crate) fn parse_raw(bytes: &[u8]) -> Result<ImageTensor> {
    if bytes.len() < 4 || &bytes[..4] != RAW_MAGIC {
        return Err(Error::Format {
            offset: 0,
            reason: "expected JDLT magic".to_string(),
        });
    }
    if bytes.len() < 20 {
        return Err(Error::Format {
            offset: bytes.len(),
            reason: "header truncated, need 20 bytes".to_string(),
        });
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap());
    let version = word(4);
    if version != RAW_VERSION {
        return Err(Error::Format {
            offset: 4,
            reason: format!("unsupported version {version}, expected {RAW_VERSION}"),
        });
    }
    let (channels, height, width) = (word(8) as usize, word(12) as usize, word(16) as usize);
    if channels == 0 || height == 0 || width == 0 {
        return Err(Error::Format {
            offset: 8,
            reason: format!("dimensions must be non-zero, got {channels}x{height}x{width}"),
        });
    }
    let count = channels
        .checked_mul(height)
        .and_then(|n| n.checked_mul(width))
        .and_then(|n| n.checked_mul(4))
        .ok_or_else(|| Error::Format {
            offset: 8,
            reason: format!("dimensions {channels}x{height}x{width} overflow"),
        })?;
    let payload = &bytes[20..];
    if payload.len() != count {
        return Err(Error::Format {
            offset: 20,
            reason: format!(
                "payload length mismatch: expected {count} bytes, found {}",
                payload.len()
            ),
        });
    }
    let data: Vec<f64> = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    ImageTensor::new(channels, height, width, data)
}

/// Pads height and width up to the next multiple of `multiple` by replicating
/// the last row/column. Already-aligned tensors are returned unchanged.
pub fn pad_to_multiple(tensor: &ImageTensor, multiple: usize) -> ImageTensor {
    assert!(multiple > 0, "multiple must be positive");
    let new_h = tensor.height.div_ceil(multiple) * multiple;
    let new_w = tensor.width.div_ceil(multiple) * multiple;
    if new_h == tensor.height && new_w == tensor.width {
        return tensor.clone();
    }
    let mut out = ImageTensor::zeros(tensor.channels, new_h, new_w);
    for c in 0..tensor.channels {
        for y in 0..new_h {
            let sy = y.min(tensor.height - 1);
            for x in 0..new_w {
                let sx = x.min(tensor.width - 1);
                out.set(c, y, x, tensor.get(c, sy, sx));
            }
        }
    }
    out
}

/// Pads height and width up to the next multiple of 8 (the DCT block size)
/// by edge replication.
pub fn pad_to_block_multiple(tensor: &ImageTensor) -> ImageTensor {
    pad_to_multiple(tensor, 8)
}

/// A set of uniformly shaped images with integer class labels.
#[derive(Clone, Debug)]
pub struct LabeledDataset {
    images: Vec<ImageTensor>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(images: Vec<ImageTensor>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if images.is_empty() {
            return Err(Error::InvalidArgument("dataset must not be empty".to_string()));
        }
        if images.len() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} images but {} labels",
                images.len(),
                labels.len()
            )));
        }
        if num_classes == 0 {
            return Err(Error::InvalidArgument("num_classes must be positive".to_string()));
        }
        let first = &images[0];
        for (i, img) in images.iter().enumerate() {
            if !img.same_shape(first) {
                return Err(Error::ShapeMismatch(format!(
                    "image {i} is {}x{}x{}, expected {}x{}x{}",
                    img.channels(),
                    img.height(),
                    img.width(),
                    first.channels(),
                    first.height(),
                    first.width()
                )));
            }
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::InvalidArgument(format!(
                "label {l} of sample {i} exceeds num_classes {num_classes}"
            )));
        }
        Ok(Self { images, labels, num_classes })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn image(&self, i: usize) -> &ImageTensor {
        &self.images[i]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn images(&self) -> &[ImageTensor] {
        &self.images
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Applies `f` to every image, keeping labels; used for padding or
    /// pre-compressing a dataset.
    pub fn map_images(&self, mut f: impl FnMut(&ImageTensor) -> ImageTensor) -> Self {
        Self {
            images: self.images.iter().map(&mut f).collect(),
            labels: self.labels.clone(),
            num_classes: self.num_classes,
        }
    }
}

/// Orthonormal 8x8 cosine basis value used by the synthetic dataset.
fn cosine_basis(u: usize, v: usize, r: usize, c: usize) -> f64 {
    let scale = |k: usize| if k == 0 { (1.0f64 / 8.0).sqrt() } else { 0.5 };
    scale(u)
        * scale(v)
        * ((2 * r + 1) as f64 * u as f64 * std::f64::consts::PI / 16.0).cos()
        * ((2 * c + 1) as f64 * v as f64 * std::f64::consts::PI / 16.0).cos()
}

/// Builds the two-class frequency-pattern dataset used by the smoke tests.
///
/// Class 0 images carry a horizontal cosine pattern (basis (0,1)), class 1 a
/// vertical one (basis (1,0)), both around a mid-gray of 128 with identical
/// RGB channels. Every 8x8 block also receives high-frequency (7,7) noise of
/// fixed amplitude. Per image the pattern amplitude is jittered in
/// [0.8, 1.2] * 40; per block the noise weight is uniform in [-4, 4). Draws
/// come from a ChaCha stream seeded with `seed` in image order, so the result
/// is a pure function of the arguments. Labels alternate 0, 1, 0, 1, ...
pub fn make_synthetic_frequency_dataset(
    per_class: usize,
    size: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    if per_class == 0 {
        return Err(Error::InvalidArgument("per_class must be positive".to_string()));
    }
    if size == 0 || size % 8 != 0 {
        return Err(Error::InvalidArgument(format!(
            "size must be a positive multiple of 8, got {size}"
        )));
    }
    const PATTERN_AMPLITUDE: f64 = 40.0;
    const NOISE_AMPLITUDE: f64 = 4.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(2 * per_class);
    let mut labels = Vec::with_capacity(2 * per_class);
    for k in 0..2 * per_class {
        let label = k % 2;
        let (u, v) = if label == 0 { (0, 1) } else { (1, 0) };
        let amplitude = PATTERN_AMPLITUDE * rng.gen_range(0.8..1.2);
        let mut img = ImageTensor::constant(3, size, size, 128.0);
        for by in (0..size).step_by(8) {
            for bx in (0..size).step_by(8) {
                let noise = NOISE_AMPLITUDE * rng.gen_range(-1.0..1.0);
                for r in 0..8 {
                    for c in 0..8 {
                        let value = 128.0
                            + amplitude * cosine_basis(u, v, r, c)
                            + noise * cosine_basis(7, 7, r, c);
                        for ch in 0..3 {
                            img.set(ch, by + r, bx + c, value);
                        }
                    }
                }
            }
        }
        images.push(img);
        labels.push(label);
    }
    LabeledDataset::new(images, labels, 2)
}

const DATASET_INDEX: &str = "dataset.csv";

/// Writes a dataset as a directory: `dataset.csv` (header `path,label`) plus
/// one `JDLT` file per image.
pub fn save_dataset_dir(dataset: &LabeledDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut index = String::from("path,label\n");
    for i in 0..dataset.len() {
        let name = format!("img_{i:05}.jdlt");
        save_raw(dataset.image(i), &dir.join(&name))?;
        index.push_str(&format!("{name},{}\n", dataset.label(i)));
    }
    fs::write(dir.join(DATASET_INDEX), index)?;
    Ok(())
}

/// Loads a dataset directory written by [`save_dataset_dir`], or any
/// directory holding a `dataset.csv` whose rows point at `.jdlt` or `.ppm`
/// files (paths relative to the directory). `num_classes` is one more than
/// the largest label.
pub fn load_dataset_dir(dir: &Path) -> Result<LabeledDataset> {
    let index_path = dir.join(DATASET_INDEX);
    let text = fs::read_to_string(&index_path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == "path,label" => {}
        _ => {
            return Err(Error::Parse {
                what: DATASET_INDEX.to_string(),
                reason: "first line must be the header \"path,label\"".to_string(),
            })
        }
    }
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (lineno, line) in lines {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let (path, label) = match (fields.next(), fields.next(), fields.next()) {
            (Some(p), Some(l), None) => (p, l),
            _ => {
                return Err(Error::Parse {
                    what: format!("{DATASET_INDEX} line {}", lineno + 1),
                    reason: "expected exactly two comma-separated fields".to_string(),
                })
            }
        };
        let label: usize = label.trim().parse().map_err(|_| Error::Parse {
            what: format!("{DATASET_INDEX} line {}", lineno + 1),
            reason: format!("label {label:?} is not a non-negative integer"),
        })?;
        let full = dir.join(path);
        let image = match full.extension().and_then(|e| e.to_str()) {
            Some("jdlt") => load_raw(&full)?,
            Some("ppm") => load_ppm(&full)?,
            _ => {
                return Err(Error::Parse {
                    what: format!("{DATASET_INDEX} line {}", lineno + 1),
                    reason: format!("unsupported image extension in {path:?}"),
                })
            }
        };
        images.push(image);
        labels.push(label);
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    LabeledDataset::new(images, labels, num_classes)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_rejects_wrong_length() {
        let err = ImageTensor::new(3, 2, 2, vec![0.0; 11]).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)), "got {err:?}");
    }

    #[test]
    fn ppm_single_red_pixel() {
        let img = parse_ppm(b"P6\n1 1\n255\n\xff\x00\x00").unwrap();
        assert_eq!((img.channels(), img.height(), img.width()), (3, 1, 1));
        assert_eq!(img.data(), &[255.0, 0.0, 0.0]);
    }

    #[test]
    fn ppm_two_by_two_black() {
        let mut bytes = b"P6 2 2 255\n".to_vec();
        bytes.extend_from_slice(&[0u8; 12]);
        let img = parse_ppm(&bytes).unwrap();
        assert_eq!((img.height(), img.width()), (2, 2));
        assert!(img.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn ppm_header_comment_is_skipped() {
        let img = parse_ppm(b"P6\n# a comment\n1 1\n255\n\x01\x02\x03").unwrap();
        assert_eq!(img.data(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn ppm_truncated_payload_reports_offset() {
        let err = parse_ppm(b"P6\n2 2 255\n\x00\x00").unwrap_err();
        match err {
            Error::Format { offset, reason } => {
                assert_eq!(offset, 13, "offset should be the end of the short file");
                assert!(reason.contains("expected 12 bytes"), "reason: {reason}");
                assert!(reason.contains("found 2"), "reason: {reason}");
            }
            other => panic!("expected Format error, got {other:?}"),
        }
    }

    #[test]
    fn ppm_bad_magic_and_maxval() {
        assert!(matches!(
            parse_ppm(b"P5\n1 1 255\n\x00"),
            Err(Error::Format { offset: 0, .. })
        ));
        let err = parse_ppm(b"P6\n1 1 65535\n\x00\x00\x00").unwrap_err();
        match err {
            Error::Format { offset, reason } => {
                assert_eq!(offset, 7);
                assert!(reason.contains("65535"), "reason: {reason}");
            }
            other => panic!("expected Format error, got {other:?}"),
        }
    }

    #[test]
    fn raw_round_trip_is_bit_exact_for_f32_values() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.jdlt");
        let data: Vec<f64> = (0..3 * 8 * 8).map(|i| (i % 256) as f64 - 128.0).collect();
        let tensor = ImageTensor::new(3, 8, 8, data).unwrap();
        save_raw(&tensor, &path).unwrap();
        let back = load_raw(&path).unwrap();
        assert_eq!(back, tensor);
    }

    #[test]
    fn raw_rejects_bad_magic_and_lengths() {
        assert!(matches!(parse_raw(b""), Err(Error::Format { offset: 0, .. })));
        assert!(matches!(parse_raw(b"JDLX\x01\x00\x00\x00"), Err(Error::Format { offset: 0, .. })));
        // Valid header for 1x1x1 but missing the 4 payload bytes.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"JDLT");
        for word in [1u32, 1, 1, 1] {
            bytes.extend_from_slice(&word.to_le_bytes());
        }
        match parse_raw(&bytes).unwrap_err() {
            Error::Format { offset, reason } => {
                assert_eq!(offset, 20);
                assert!(reason.contains("expected 4 bytes"), "reason: {reason}");
            }
            other => panic!("expected Format error, got {other:?}"),
        }
    }

    #[test]
    fn pad_replicates_edges() {
        let data: Vec<f64> = (0..9 * 8).map(|i| i as f64).collect();
        let tensor = ImageTensor::new(1, 9, 8, data).unwrap();
        let padded = pad_to_block_multiple(&tensor);
        assert_eq!((padded.height(), padded.width()), (16, 8));
        for y in 9..16 {
            for x in 0..8 {
                assert_eq!(padded.get(0, y, x), tensor.get(0, 8, x), "row {y} col {x}");
            }
        }
        // Aligned input is returned unchanged, and padding is idempotent.
        let again = pad_to_block_multiple(&padded);
        assert_eq!(again, padded);
    }

    #[test]
    fn pad_one_by_one_becomes_constant_block() {
        let tensor = ImageTensor::new(1, 1, 1, vec![7.0]).unwrap();
        let padded = pad_to_block_multiple(&tensor);
        assert_eq!((padded.height(), padded.width()), (8, 8));
        assert!(padded.data().iter().all(|&v| v == 7.0));
    }

    #[test]
    fn synthetic_dataset_is_deterministic_and_balanced() {
        let a = make_synthetic_frequency_dataset(4, 16, 9).unwrap();
        let b = make_synthetic_frequency_dataset(4, 16, 9).unwrap();
        assert_eq!(a.len(), 8);
        assert_eq!(a.labels(), b.labels());
        for i in 0..a.len() {
            assert_eq!(a.image(i), b.image(i), "image {i} differs between identical seeds");
        }
        let c = make_synthetic_frequency_dataset(4, 16, 10).unwrap();
        assert_ne!(a.image(0), c.image(0), "different seeds should differ");
        assert_eq!(a.labels().iter().filter(|&&l| l == 0).count(), 4);
    }

    #[test]
    fn synthetic_dataset_validates_arguments() {
        assert!(make_synthetic_frequency_dataset(0, 16, 1).is_err());
        assert!(make_synthetic_frequency_dataset(2, 12, 1).is_err());
    }

    #[test]
    fn dataset_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = make_synthetic_frequency_dataset(2, 8, 3).unwrap();
        save_dataset_dir(&ds, dir.path()).unwrap();
        let back = load_dataset_dir(dir.path()).unwrap();
        assert_eq!(back.len(), ds.len());
        assert_eq!(back.labels(), ds.labels());
        assert_eq!(back.num_classes(), 2);
        // Values went through f32, so compare at f32 precision.
        for i in 0..ds.len() {
            for (a, b) in ds.image(i).data().iter().zip(back.image(i).data()) {
                assert!((a - b).abs() <= (*a as f32).abs() as f64 * 1e-7 + 1e-6);
            }
        }
    }

    #[test]
    fn dataset_dir_rejects_bad_header_and_rows() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("dataset.csv"), "file,class\n").unwrap();
        assert!(matches!(load_dataset_dir(dir.path()), Err(Error::Parse { .. })));
        std::fs::write(dir.path().join("dataset.csv"), "path,label\na.jdlt,not_a_number\n")
            .unwrap();
        match load_dataset_dir(dir.path()).unwrap_err() {
            Error::Parse { what, .. } => assert!(what.contains("line 2"), "what: {what}"),
            other => panic!("expected Parse error, got {other:?}"),
        }
    }

    #[test]
    fn labeled_dataset_validates_labels_and_shapes() {
        let img = ImageTensor::zeros(3, 8, 8);
        let err = LabeledDataset::new(vec![img.clone()], vec![2], 2).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)), "got {err:?}");
        let other = ImageTensor::zeros(3, 8, 16);
        let err = LabeledDataset::new(vec![img, other], vec![0, 1], 2).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch(_)), "got {err:?}");
    }
}
