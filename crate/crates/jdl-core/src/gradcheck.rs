//! Finite-difference verification of the analytic gradients, shipped as
//! library code so the CLI and tests share one implementation.
//!
//! Central differences compare against the closed-form partials over
//! randomized configurations. The masked quantizer is only piecewise smooth
//! (its window jumps when `round(z/q)` changes), so the masked suite keeps
//! probes away from window boundaries and uses a smaller step for `q`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::qtable::QuantTables;
use crate::quantizer::{quantize_grad, quantize_soft, QuantizerParams};
use crate::tensor::ImageTensor;
use crate::trainer::{
    jpeg_layer_backward, jpeg_layer_forward, Architecture, ClassifierParams, LayerOptions,
};

/// Worst relative mismatch seen for one partial derivative.
#[derive(Clone, Debug, Default)]
pub struct CheckStat {
    pub max_mismatch: f64,
    /// Human-readable description of the worst configuration.
    pub worst: String,
}

impl CheckStat {
    fn update(&mut self, mismatch: f64, describe: impl FnOnce() -> String) {
        if mismatch > self.max_mismatch {
            self.max_mismatch = mismatch;
            self.worst = describe();
        }
    }
}

/// Relative mismatch with an absolute guard: differences below `floor`
/// count as exact so plateaus of near-zero gradients do not divide noise by
/// noise.
fn mismatch(analytic: f64, fd: f64, floor: f64) -> f64 {
    let diff = (analytic - fd).abs();
    if diff <= floor {
        0.0
    } else {
        diff / analytic.abs().max(fd.abs())
    }
}

/// Configuration for [`run_quantizer_suite`].
#[derive(Clone, Debug)]
pub struct QuantizerSuiteConfig {
    pub samples: usize,
    pub seed: u64,
    /// Alphabet half-widths to draw from.
    pub level_choices: Vec<i64>,
    /// Check the windowed quantizer instead of the full alphabet.
    pub masked: bool,
    pub tolerance: f64,
    /// Absolute agreement below which a comparison counts as exact.
    pub abs_floor: f64,
}

impl Default for QuantizerSuiteConfig {
    fn default() -> Self {
        Self {
            samples: 1000,
            seed: 7,
            level_choices: vec![3, 8, 128],
            masked: false,
            tolerance: 1e-4,
            abs_floor: 1e-7,
        }
    }
}

/// Outcome of the quantizer finite-difference suite.
#[derive(Clone, Debug)]
pub struct QuantizerSuiteReport {
    pub samples: usize,
    pub masked: bool,
    pub tolerance: f64,
    pub d_z: CheckStat,
    pub d_q: CheckStat,
    pub d_alpha: CheckStat,
}

impl QuantizerSuiteReport {
    pub fn passed(&self) -> bool {
        self.d_z.max_mismatch < self.tolerance
            && self.d_q.max_mismatch < self.tolerance
            && self.d_alpha.max_mismatch < self.tolerance
    }
}

/// Compares the three analytic partials of the soft quantizer against
/// central differences at `samples` random configurations.
pub fn run_quantizer_suite(cfg: &QuantizerSuiteConfig) -> Result<QuantizerSuiteReport> {
    if cfg.samples == 0 {
        return Err(Error::InvalidArgument("samples must be positive".to_string()));
    }
    if cfg.level_choices.is_empty() || cfg.level_choices.iter().any(|&l| l < 1) {
        return Err(Error::InvalidArgument(
            "level choices must be a non-empty list of positive half-widths".to_string(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = QuantizerSuiteReport {
        samples: cfg.samples,
        masked: cfg.masked,
        tolerance: cfg.tolerance,
        d_z: CheckStat::default(),
        d_q: CheckStat::default(),
        d_alpha: CheckStat::default(),
    };
    for _ in 0..cfg.samples {
        let half_width = cfg.level_choices[rng.gen_range(0..cfg.level_choices.len())];
        // The masked window jumps with round(z/q); restrict the masked suite
        // to regimes where a tiny finite-difference step cannot cross a
        // boundary, and nudge probes off near-half-integer ratios.
        let (q, alpha) = if cfg.masked {
            (rng.gen_range(1.0..10.0), rng.gen_range(3.0..20.0))
        } else {
            (rng.gen_range(0.1..10.0), rng.gen_range(0.5..20.0))
        };
        let limit = half_width as f64 * q;
        let mut z = rng.gen_range(-limit..limit);
        if cfg.masked {
            let frac = (z / q) - (z / q).floor();
            if (frac - 0.5).abs() < 0.015 {
                z += 0.05 * q;
            }
        }
        let params = QuantizerParams { step: q, alpha, half_width };
        let analytic = quantize_grad(z, &params, cfg.masked);
        let describe = |what: &str| {
            format!("{what} at z={z:.9e} q={q:.9e} alpha={alpha:.9e} L={half_width}")
        };

        // Near a rounding transition the soft quantizer varies on a logistic
        // scale of q / (2 alpha q^2) in z and q / (2 alpha q^2 |z/q|) in q;
        // the finite-difference step must resolve that scale or the central
        // difference straddles the whole transition.
        let hbar = alpha * q * q;
        let r_abs = (z / q).abs();
        let h_z = (0.01 * q / hbar).min(1e-4);
        let fd_z = (quantize_soft(z + h_z, &params, cfg.masked)
            - quantize_soft(z - h_z, &params, cfg.masked))
            / (2.0 * h_z);
        report
            .d_z
            .update(mismatch(analytic.d_z, fd_z, cfg.abs_floor), || describe("d_z"));

        let h_q = if cfg.masked {
            // The masked window jumps with round(z/q); probes stay away from
            // half-integer ratios, so a small fixed relative step is safe.
            1e-6 * q
        } else {
            q * (0.002 / (hbar * (r_abs + 1.0))).min(1e-4)
        };
        let plus = QuantizerParams { step: q + h_q, ..params };
        let minus = QuantizerParams { step: q - h_q, ..params };
        let fd_q = (quantize_soft(z, &plus, cfg.masked) - quantize_soft(z, &minus, cfg.masked))
            / (2.0 * h_q);
        report
            .d_q
            .update(mismatch(analytic.d_q, fd_q, cfg.abs_floor), || describe("d_q"));

        let h_a = 1e-4 * alpha;
        let plus = QuantizerParams { alpha: alpha + h_a, ..params };
        let minus = QuantizerParams { alpha: alpha - h_a, ..params };
        let fd_a = (quantize_soft(z, &plus, cfg.masked) - quantize_soft(z, &minus, cfg.masked))
            / (2.0 * h_a);
        report
            .d_alpha
            .update(mismatch(analytic.d_alpha, fd_a, cfg.abs_floor), || describe("d_alpha"));
    }
    Ok(report)
}

/// Configuration for [`run_layer_suite`].
#[derive(Clone, Debug)]
pub struct LayerSuiteConfig {
    /// Random layer configurations to test; every fifth one uses a 16x16
    /// image with 4:2:0 subsampling, the rest 8x8 with 4:4:4.
    pub trials: usize,
    pub seed: u64,
    pub tolerance: f64,
    pub abs_floor: f64,
    /// Pixel positions probed per trial for the input gradient.
    pub pixel_probes: usize,
}

impl Default for LayerSuiteConfig {
    fn default() -> Self {
        // The loss is O(1), so finite differences with the tiny steps sharp
        // transitions demand resolve gradients to about 1e-7 absolute; the
        // floor treats agreement below 1e-6 as exact.
        Self { trials: 20, seed: 11, tolerance: 1e-3, abs_floor: 1e-6, pixel_probes: 8 }
    }
}

/// Outcome of the end-to-end layer suite.
#[derive(Clone, Debug)]
pub struct LayerSuiteReport {
    pub trials: usize,
    pub tolerance: f64,
    pub d_q: CheckStat,
    pub d_alpha: CheckStat,
    pub d_pixels: CheckStat,
}

impl LayerSuiteReport {
    pub fn passed(&self) -> bool {
        self.d_q.max_mismatch < self.tolerance
            && self.d_alpha.max_mismatch < self.tolerance
            && self.d_pixels.max_mismatch < self.tolerance
    }
}

/// Checks the full chain loss -> classifier -> reconstruction -> quantizer
/// -> analysis against finite differences, for the table entries and for
/// input pixels.
pub fn run_layer_suite(cfg: &LayerSuiteConfig) -> Result<LayerSuiteReport> {
    use crate::pipeline::SubsamplingMode;

    if cfg.trials == 0 {
        return Err(Error::InvalidArgument("trials must be positive".to_string()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut report = LayerSuiteReport {
        trials: cfg.trials,
        tolerance: cfg.tolerance,
        d_q: CheckStat::default(),
        d_alpha: CheckStat::default(),
        d_pixels: CheckStat::default(),
    };
    for trial in 0..cfg.trials {
        let s420 = trial % 5 == 4;
        let (size, mode) =
            if s420 { (16usize, SubsamplingMode::S420) } else { (8usize, SubsamplingMode::S444) };
        let mut img = ImageTensor::zeros(3, size, size);
        for v in img.data_mut() {
            *v = rng.gen_range(0.0..255.0);
        }
        let label = rng.gen_range(0..2usize);
        let mut tables = QuantTables::filled(8, 1.0, 5.0)?;
        for m in 0..64 {
            tables.q_y[m] = rng.gen_range(0.5..6.0);
            tables.q_c[m] = rng.gen_range(0.5..6.0);
            tables.alpha_y[m] = rng.gen_range(2.0..8.0);
            tables.alpha_c[m] = rng.gen_range(2.0..8.0);
        }
        let model =
            ClassifierParams::init(Architecture::Linear, 3 * size * size, 2, cfg.seed ^ trial as u64)?;
        let opts = LayerOptions { subsampling: mode, ..Default::default() };

        let loss_at = |img: &ImageTensor, tables: &QuantTables| -> Result<f64> {
            let (xhat, _) = jpeg_layer_forward(img, tables, &opts)?;
            Ok(model.loss_and_grads(&xhat, label)?.loss)
        };

        let (xhat, ctx) = jpeg_layer_forward(&img, &tables, &opts)?;
        let back = model.loss_and_grads(&xhat, label)?;
        let grads = jpeg_layer_backward(&back.d_pixels, &ctx)?;

        // Each table entry quantizes many coefficients; the step used to
        // probe it must resolve the sharpest rounding transition among them
        // (relative scale 1 / (2 alpha q^2 (|z/q| + 1)) per coefficient).
        let (raw, _) = crate::pipeline::pipeline_forward(&img, mode)?;
        let mut h_rel = [[1e-4f64; 64]; 2];
        for (l, channel) in raw.channels.iter().enumerate() {
            let group = usize::from(l != 0);
            for (i, &z) in channel.data().iter().enumerate() {
                let p = tables.params_for(group, i % 64);
                let hbar = p.alpha * p.step * p.step;
                let bound = 0.002 / (hbar * ((z / p.step).abs() + 1.0));
                let slot = &mut h_rel[group][i % 64];
                if bound < *slot {
                    *slot = bound;
                }
            }
        }

        for m in 0..64 {
            for (group, analytic) in [("q_y", &grads.d_q_y), ("q_c", &grads.d_q_c)] {
                let idx = usize::from(group == "q_c");
                let base = if group == "q_y" { tables.q_y[m] } else { tables.q_c[m] };
                let h = h_rel[idx][m] * base;
                let mut plus = tables.clone();
                let mut minus = tables.clone();
                if group == "q_y" {
                    plus.q_y[m] = base + h;
                    minus.q_y[m] = base - h;
                } else {
                    plus.q_c[m] = base + h;
                    minus.q_c[m] = base - h;
                }
                let fd = (loss_at(&img, &plus)? - loss_at(&img, &minus)?) / (2.0 * h);
                report.d_q.update(mismatch(analytic[m], fd, cfg.abs_floor), || {
                    format!("{group}[{m}] trial {trial} ({size}x{size})")
                });
            }
        }
        for m in [0usize, 9, 27, 45, 63] {
            for (group, analytic) in [("alpha_y", &grads.d_alpha_y), ("alpha_c", &grads.d_alpha_c)] {
                let base = if group == "alpha_y" { tables.alpha_y[m] } else { tables.alpha_c[m] };
                let h = 1e-4 * base;
                let mut plus = tables.clone();
                let mut minus = tables.clone();
                if group == "alpha_y" {
                    plus.alpha_y[m] = base + h;
                    minus.alpha_y[m] = base - h;
                } else {
                    plus.alpha_c[m] = base + h;
                    minus.alpha_c[m] = base - h;
                }
                let fd = (loss_at(&img, &plus)? - loss_at(&img, &minus)?) / (2.0 * h);
                report.d_alpha.update(mismatch(analytic[m], fd, cfg.abs_floor), || {
                    format!("{group}[{m}] trial {trial} ({size}x{size})")
                });
            }
        }
        for _ in 0..cfg.pixel_probes {
            let i = rng.gen_range(0..img.data().len());
            let h = 1e-4;
            let mut plus = img.clone();
            plus.data_mut()[i] += h;
            let mut minus = img.clone();
            minus.data_mut()[i] -= h;
            let fd = (loss_at(&plus, &tables)? - loss_at(&minus, &tables)?) / (2.0 * h);
            report.d_pixels.update(mismatch(grads.d_pixels.data()[i], fd, cfg.abs_floor), || {
                format!("pixel {i} trial {trial} ({size}x{size})")
            });
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mismatch_guards_near_zero_values() {
        assert_eq!(mismatch(1e-12, -1e-12, 1e-8), 0.0);
        assert!(mismatch(1.0, 1.1, 1e-8) > 0.09);
        assert_eq!(mismatch(0.5, 0.5, 1e-8), 0.0);
    }

    #[test]
    fn quantizer_suite_passes_on_a_small_run() {
        let cfg = QuantizerSuiteConfig { samples: 50, ..Default::default() };
        let report = run_quantizer_suite(&cfg).unwrap();
        assert!(
            report.passed(),
            "full-alphabet suite failed: d_z {} ({}), d_q {} ({}), d_alpha {} ({})",
            report.d_z.max_mismatch,
            report.d_z.worst,
            report.d_q.max_mismatch,
            report.d_q.worst,
            report.d_alpha.max_mismatch,
            report.d_alpha.worst
        );
    }

    #[test]
    fn masked_quantizer_suite_passes_on_a_small_run() {
        let cfg = QuantizerSuiteConfig { samples: 50, masked: true, ..Default::default() };
        let report = run_quantizer_suite(&cfg).unwrap();
        assert!(
            report.passed(),
            "masked suite failed: d_z {} ({}), d_q {} ({}), d_alpha {} ({})",
            report.d_z.max_mismatch,
            report.d_z.worst,
            report.d_q.max_mismatch,
            report.d_q.worst,
            report.d_alpha.max_mismatch,
            report.d_alpha.worst
        );
    }

    #[test]
    fn layer_suite_passes_on_a_small_run() {
        let cfg = LayerSuiteConfig { trials: 2, ..Default::default() };
        let report = run_layer_suite(&cfg).unwrap();
        assert!(
            report.passed(),
            "layer suite failed: d_q {} ({}), d_alpha {} ({}), d_pixels {} ({})",
            report.d_q.max_mismatch,
            report.d_q.worst,
            report.d_alpha.max_mismatch,
            report.d_alpha.worst,
            report.d_pixels.max_mismatch,
            report.d_pixels.worst
        );
    }

    #[test]
    fn degenerate_configs_are_rejected() {
        let cfg = QuantizerSuiteConfig { samples: 0, ..Default::default() };
        assert!(run_quantizer_suite(&cfg).is_err());
        let cfg = QuantizerSuiteConfig { level_choices: vec![], ..Default::default() };
        assert!(run_quantizer_suite(&cfg).is_err());
    }
}
