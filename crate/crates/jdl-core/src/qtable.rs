//! Trainable quantization tables and their initialization schemes.
//!
//! A [`QuantTables`] holds one step and one sharpness per zigzag frequency
//! for luma (`q_y`, `alpha_y`) and for the two chroma channels jointly
//! (`q_c`, `alpha_c`), plus the bit-depth `b`, the alphabet half-width `L`,
//! and the optional gradient-scaling constant `hbar`. Tables serialize to a
//! versioned JSON document.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{pipeline_forward, SubsamplingMode};
use crate::quantizer::{QuantizerParams, Q_MIN};
use crate::tensor::{pad_to_block_multiple, LabeledDataset};

/// Sharpness used by initializers that do not derive one.
pub const DEFAULT_ALPHA: f64 = 5.0;

const TABLES_VERSION: u32 = 1;

/// Per-frequency quantization steps and sharpnesses for one JPEG layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantTables {
    pub version: u32,
    /// Bit-depth the alphabet was sized for.
    pub b: u32,
    /// Alphabet half-width; defaults to `2^(b-1)` but may be overridden.
    #[serde(rename = "L")]
    pub half_width: i64,
    /// Gradient-scaling constant; when set, `alpha = hbar / q^2` holds.
    pub hbar: Option<f64>,
    /// Luma steps, zigzag order, 64 entries.
    pub q_y: Vec<f64>,
    /// Shared chroma steps, 64 entries.
    pub q_c: Vec<f64>,
    /// Luma sharpnesses, 64 entries.
    pub alpha_y: Vec<f64>,
    /// Shared chroma sharpnesses, 64 entries.
    pub alpha_c: Vec<f64>,
}

/// Default alphabet half-width for a bit-depth: `2^(b-1)`.
pub fn default_half_width(b: u32) -> Result<i64> {
    if b == 0 || b > 32 {
        return Err(Error::InvalidArgument(format!(
            "bit-depth must be in 1..=32, got {b}"
        )));
    }
    Ok(1i64 << (b - 1))
}

impl QuantTables {
    /// Uniform tables: every step `q`, every sharpness `alpha`.
    pub fn filled(b: u32, q: f64, alpha: f64) -> Result<Self> {
        let tables = Self {
            version: TABLES_VERSION,
            b,
            half_width: default_half_width(b)?,
            hbar: None,
            q_y: vec![q; 64],
            q_c: vec![q; 64],
            alpha_y: vec![alpha; 64],
            alpha_c: vec![alpha; 64],
        };
        tables.validate()?;
        Ok(tables)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != TABLES_VERSION {
            return Err(Error::Validation(format!(
                "unsupported tables version {}, expected {TABLES_VERSION}",
                self.version
            )));
        }
        if self.b == 0 || self.b > 32 {
            return Err(Error::Validation(format!("bit-depth {} out of range", self.b)));
        }
        if self.half_width < 1 {
            return Err(Error::Validation(format!(
                "alphabet half-width must be at least 1, got {}",
                self.half_width
            )));
        }
        if let Some(h) = self.hbar {
            if !h.is_finite() || h <= 0.0 {
                return Err(Error::Validation(format!("hbar must be positive, got {h}")));
            }
        }
        for (name, table) in [
            ("q_y", &self.q_y),
            ("q_c", &self.q_c),
            ("alpha_y", &self.alpha_y),
            ("alpha_c", &self.alpha_c),
        ] {
            if table.len() != 64 {
                return Err(Error::Validation(format!(
                    "{name} must have 64 entries, got {}",
                    table.len()
                )));
            }
            if let Some((m, &v)) = table.iter().enumerate().find(|(_, v)| !v.is_finite() || **v <= 0.0)
            {
                return Err(Error::Validation(format!(
                    "{name}[{m}] must be positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Quantizer parameters for zigzag frequency `m` of channel `channel`
    /// (0 = Y; 1, 2 share the chroma tables).
    pub fn params_for(&self, channel: usize, m: usize) -> QuantizerParams {
        let (q, alpha) = if channel == 0 {
            (self.q_y[m], self.alpha_y[m])
        } else {
            (self.q_c[m], self.alpha_c[m])
        };
        QuantizerParams { step: q, alpha, half_width: self.half_width }
    }

    /// Ties every sharpness to its step via `alpha = hbar / q^2` and records
    /// `hbar`. Idempotent.
    pub fn apply_gradient_scaling(&mut self, hbar: f64) -> Result<()> {
        if !hbar.is_finite() || hbar <= 0.0 {
            return Err(Error::InvalidArgument(format!("hbar must be positive, got {hbar}")));
        }
        for m in 0..64 {
            self.alpha_y[m] = hbar / (self.q_y[m] * self.q_y[m]);
            self.alpha_c[m] = hbar / (self.q_c[m] * self.q_c[m]);
        }
        self.hbar = Some(hbar);
        Ok(())
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut text = serde_json::to_string_pretty(self).map_err(|e| Error::Parse {
            what: path.display().to_string(),
            reason: e.to_string(),
        })?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let tables: Self = serde_json::from_str(&text).map_err(|e| Error::Parse {
            what: path.display().to_string(),
            reason: e.to_string(),
        })?;
        tables.validate()?;
        Ok(tables)
    }
}

/// Options for [`init_magnitude`] (and the anchor inside
/// [`init_sensitivity`]).
#[derive(Clone, Copy, Debug)]
pub struct MagnitudeInitOptions {
    /// Bit-depth; sets the alphabet half-width to `2^(b-1)`.
    pub b: u32,
    /// Sharpness written into the alpha tables.
    pub alpha: f64,
    /// Use `sqrt(2^b - 1)` instead of `sqrt(2^(b-1))` as the denominator.
    pub alt_denominator: bool,
}

impl Default for MagnitudeInitOptions {
    fn default() -> Self {
        Self { b: 8, alpha: DEFAULT_ALPHA, alt_denominator: false }
    }
}

/// Magnitude-based initialization: each step is twice the mean absolute DCT
/// coefficient of its frequency over the dataset (luma and joint-chroma
/// groups separately), divided by `sqrt(2^(b-1))`, floored at [`Q_MIN`].
///
/// Images are padded to 8-alignment and analyzed without subsampling.
pub fn init_magnitude(dataset: &LabeledDataset, opts: &MagnitudeInitOptions) -> Result<QuantTables> {
    if !opts.alpha.is_finite() || opts.alpha <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "alpha must be positive, got {}",
            opts.alpha
        )));
    }
    let half_width = default_half_width(opts.b)?;
    let mut sum_y = [0.0f64; 64];
    let mut sum_c = [0.0f64; 64];
    let mut blocks_y = 0usize;
    let mut blocks_c = 0usize;
    for img in dataset.images() {
        let padded = pad_to_block_multiple(img);
        let (coeffs, _) = pipeline_forward(&padded, SubsamplingMode::S444)?;
        for (l, channel) in coeffs.channels.iter().enumerate() {
            let sums = if l == 0 { &mut sum_y } else { &mut sum_c };
            for n in 0..channel.num_blocks() {
                for (m, sum) in sums.iter_mut().enumerate() {
                    *sum += channel.coeff(n, m).abs();
                }
            }
            if l == 0 {
                blocks_y += channel.num_blocks();
            } else {
                blocks_c += channel.num_blocks();
            }
        }
    }
    let denominator = if opts.alt_denominator {
        ((1u64 << opts.b) as f64 - 1.0).sqrt()
    } else {
        ((1u64 << (opts.b - 1)) as f64).sqrt()
    };
    let step = |sum: f64, blocks: usize| (2.0 * sum / (blocks as f64 * denominator)).max(Q_MIN);
    Ok(QuantTables {
        version: TABLES_VERSION,
        b: opts.b,
        half_width,
        hbar: None,
        q_y: sum_y.iter().map(|&s| step(s, blocks_y)).collect(),
        q_c: sum_c.iter().map(|&s| step(s, blocks_c)).collect(),
        alpha_y: vec![opts.alpha; 64],
        alpha_c: vec![opts.alpha; 64],
    })
}

/// All-ones steps with the default sharpness; the neutral starting point.
pub fn init_ones(b: u32) -> Result<QuantTables> {
    QuantTables::filled(b, 1.0, DEFAULT_ALPHA)
}

/// Mean absolute loss gradient at the DCT coefficients, per frequency, for
/// the luma and joint-chroma groups. Produced by
/// [`crate::trainer::estimate_sensitivity`].
#[derive(Clone, Debug, PartialEq)]
pub struct Sensitivity {
    pub s_y: Vec<f64>,
    pub s_c: Vec<f64>,
}

/// Sensitivity-based initialization: steps inversely proportional to the
/// mean absolute loss gradient at each frequency, anchored so the median
/// step per group matches a magnitude initialization of the same dataset.
pub fn init_sensitivity(
    model: &crate::trainer::ClassifierParams,
    dataset: &LabeledDataset,
    opts: &MagnitudeInitOptions,
) -> Result<QuantTables> {
    let anchor = init_magnitude(dataset, opts)?;
    let sensitivity = crate::trainer::estimate_sensitivity(model, dataset)?;
    tables_from_sensitivity(&sensitivity, &anchor)
}

/// Median with the usual mean-of-middle-two convention for even lengths.
fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("median input must not contain NaN"));
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// Turns sensitivities into steps: `q_m` proportional to `1 / s_m`, scaled
/// per group so the median step matches the anchor's median over the same
/// entries. Zero-sensitivity frequencies fall back to the anchor value. The
/// anchor also supplies `b`, `L`, the alpha tables, and `hbar`.
pub fn tables_from_sensitivity(sensitivity: &Sensitivity, anchor: &QuantTables) -> Result<QuantTables> {
    anchor.validate()?;
    for (name, s) in [("s_y", &sensitivity.s_y), ("s_c", &sensitivity.s_c)] {
        if s.len() != 64 {
            return Err(Error::ShapeMismatch(format!(
                "{name} must have 64 entries, got {}",
                s.len()
            )));
        }
        if s.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(format!(
                "{name} entries must be finite and non-negative"
            )));
        }
    }
    let group = |s: &[f64], anchor_q: &[f64]| -> Vec<f64> {
        let valid: Vec<usize> = (0..64).filter(|&m| s[m] > 0.0).collect();
        if valid.is_empty() {
            return anchor_q.to_vec();
        }
        let raw: Vec<f64> = valid.iter().map(|&m| 1.0 / s[m]).collect();
        let anchored: Vec<f64> = valid.iter().map(|&m| anchor_q[m]).collect();
        let scale = median(&anchored) / median(&raw);
        (0..64)
            .map(|m| {
                if s[m] > 0.0 {
                    (scale / s[m]).max(Q_MIN)
                } else {
                    anchor_q[m]
                }
            })
            .collect()
    };
    let mut tables = anchor.clone();
    tables.q_y = group(&sensitivity.s_y, &anchor.q_y);
    tables.q_c = group(&sensitivity.s_c, &anchor.q_c);
    Ok(tables)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::{inverse_dct, ChannelCoefficients, DctCoefficients};
    use crate::tensor::{ImageTensor, LabeledDataset};

    fn dataset_of(images: Vec<ImageTensor>) -> LabeledDataset {
        let labels = vec![0; images.len()];
        LabeledDataset::new(images, labels, 1).unwrap()
    }

    #[test]
    fn ones_init_is_uniform() {
        let t = init_ones(8).unwrap();
        assert_eq!(t.half_width, 128);
        assert!(t.q_y.iter().all(|&q| q == 1.0));
        assert!(t.alpha_c.iter().all(|&a| a == DEFAULT_ALPHA));
        assert_eq!(t.hbar, None);
    }

    #[test]
    fn magnitude_init_on_flat_images_floors_at_q_min() {
        let ds = dataset_of(vec![ImageTensor::constant(3, 8, 8, 128.0)]);
        let t = init_magnitude(&ds, &MagnitudeInitOptions::default()).unwrap();
        assert!(t.q_y.iter().all(|&q| q == Q_MIN), "flat image has zero coefficients");
        assert!(t.q_c.iter().all(|&q| q == Q_MIN));
    }

    #[test]
    fn magnitude_init_single_block_reference() {
        // Build a grayscale image whose luma DCT coefficients all have
        // magnitude 32; at b = 11 every luma step must be 2 * 32 / 32 = 2.
        let mut coeffs = DctCoefficients {
            channels: [
                ChannelCoefficients::zeros(1, 1),
                ChannelCoefficients::zeros(1, 1),
                ChannelCoefficients::zeros(1, 1),
            ],
        };
        coeffs.channels[0].data_mut().fill(32.0);
        let planes = inverse_dct(&coeffs);
        let mut img = ImageTensor::zeros(3, 8, 8);
        for y in 0..8 {
            for x in 0..8 {
                for c in 0..3 {
                    img.set(c, y, x, planes.y.get(y, x));
                }
            }
        }
        let opts = MagnitudeInitOptions { b: 11, ..Default::default() };
        let t = init_magnitude(&dataset_of(vec![img]), &opts).unwrap();
        for (m, &q) in t.q_y.iter().enumerate() {
            assert!((q - 2.0).abs() < 1e-9, "q_y[{m}] = {q}");
        }
        assert_eq!(t.half_width, 1 << 10);
    }

    #[test]
    fn magnitude_init_is_homogeneous() {
        let ds = crate::tensor::make_synthetic_frequency_dataset(2, 16, 5).unwrap();
        let doubled = ds.map_images(|img| {
            let mut out = img.clone();
            for v in out.data_mut() {
                *v = 128.0 + 2.0 * (*v - 128.0);
            }
            out
        });
        let a = init_magnitude(&ds, &MagnitudeInitOptions::default()).unwrap();
        let b = init_magnitude(&doubled, &MagnitudeInitOptions::default()).unwrap();
        for m in 0..64 {
            if a.q_y[m] > Q_MIN {
                assert!((b.q_y[m] / a.q_y[m] - 2.0).abs() < 1e-9, "m={m}");
            }
        }
    }

    #[test]
    fn alt_denominator_rescales_by_the_expected_ratio() {
        let ds = crate::tensor::make_synthetic_frequency_dataset(2, 16, 5).unwrap();
        let std = init_magnitude(&ds, &MagnitudeInitOptions::default()).unwrap();
        let alt = init_magnitude(
            &ds,
            &MagnitudeInitOptions { alt_denominator: true, ..Default::default() },
        )
        .unwrap();
        let expected = (128.0f64 / 255.0).sqrt();
        for m in 0..64 {
            if std.q_y[m] > Q_MIN {
                assert!((alt.q_y[m] / std.q_y[m] - expected).abs() < 1e-9, "m={m}");
            }
        }
    }

    #[test]
    fn gradient_scaling_ties_alpha_to_steps_and_is_idempotent() {
        let mut t = init_ones(8).unwrap();
        t.q_y[5] = 2.0;
        t.apply_gradient_scaling(8.0).unwrap();
        assert_eq!(t.alpha_y[5], 2.0);
        assert_eq!(t.alpha_y[0], 8.0);
        assert_eq!(t.hbar, Some(8.0));
        let before = t.clone();
        t.apply_gradient_scaling(8.0).unwrap();
        assert_eq!(t, before);
        for m in 0..64 {
            let product = t.alpha_y[m] * t.q_y[m] * t.q_y[m];
            assert!((product - 8.0).abs() < 1e-12, "m={m}: {product}");
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tables.json");
        let mut t = init_ones(8).unwrap();
        t.q_y[3] = 0.12345678901234567;
        t.apply_gradient_scaling(2.0).unwrap();
        t.save_json(&path).unwrap();
        let back = QuantTables::load_json(&path).unwrap();
        assert_eq!(back, t, "JSON serialization must round-trip f64 exactly");
    }

    #[test]
    fn load_reports_missing_fields_by_name() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("tables.json");
        std::fs::write(
            &path,
            r#"{"version":1,"b":8,"L":128,"hbar":null,"q_y":[],"alpha_y":[],"alpha_c":[]}"#,
        )
        .unwrap();
        match QuantTables::load_json(&path).unwrap_err() {
            Error::Parse { reason, .. } => {
                assert!(reason.contains("q_c"), "reason should name q_c: {reason}")
            }
            other => panic!("expected Parse error, got {other:?}"),
        }
    }

    #[test]
    fn validation_names_the_offending_entry() {
        let mut t = init_ones(8).unwrap();
        t.q_c[13] = -1.0;
        match t.validate().unwrap_err() {
            Error::Validation(msg) => assert!(msg.contains("q_c[13]"), "msg: {msg}"),
            other => panic!("expected Validation error, got {other:?}"),
        }
    }

    #[test]
    fn median_conventions() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    #[test]
    fn sensitivity_tables_are_scale_invariant_and_ordered() {
        let anchor = init_ones(8).unwrap();
        let mut s = Sensitivity { s_y: vec![1.0; 64], s_c: vec![1.0; 64] };
        s.s_y[1] = 4.0; // most sensitive
        s.s_y[2] = 2.0;
        let a = tables_from_sensitivity(&s, &anchor).unwrap();
        assert!(
            a.q_y[1] < a.q_y[2] && a.q_y[2] < a.q_y[3],
            "higher sensitivity must give smaller steps: {:?}",
            &a.q_y[..4]
        );
        let scaled = Sensitivity {
            s_y: s.s_y.iter().map(|v| v * 10.0).collect(),
            s_c: s.s_c.iter().map(|v| v * 10.0).collect(),
        };
        let b = tables_from_sensitivity(&scaled, &anchor).unwrap();
        for m in 0..64 {
            assert!((a.q_y[m] - b.q_y[m]).abs() < 1e-12, "scaling the loss must not move q");
        }
    }

    #[test]
    fn zero_sensitivity_falls_back_to_the_anchor() {
        let anchor = init_ones(8).unwrap();
        let s = Sensitivity { s_y: vec![0.0; 64], s_c: vec![0.0; 64] };
        let t = tables_from_sensitivity(&s, &anchor).unwrap();
        assert_eq!(t.q_y, anchor.q_y);
        assert_eq!(t.q_c, anchor.q_c);
    }

    #[test]
    fn sensitivity_median_is_anchored() {
        let anchor = init_ones(8).unwrap();
        let s = Sensitivity {
            s_y: (0..64).map(|m| 1.0 + m as f64).collect(),
            s_c: vec![1.0; 64],
        };
        let t = tables_from_sensitivity(&s, &anchor).unwrap();
        let mut q = t.q_y.clone();
        q.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = 0.5 * (q[31] + q[32]);
        assert!((med - 1.0).abs() < 1e-12, "median {med} should match the anchor median");
    }
}
