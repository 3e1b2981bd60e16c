//! The soft quantizer: a differentiable surrogate for uniform rounding.
//!
//! Given a step `q`, a sharpness `alpha`, and an alphabet `q * {-L, ..., L}`,
//! the conditional PMF over reconstruction levels is a softmax of negated
//! squared distances, `P(i | z) ~ exp(-alpha (z - i q)^2)`. The soft
//! quantizer is its conditional expectation; its derivatives with respect to
//! `z`, `q`, and `alpha` are exact moment expressions of the same PMF, so no
//! straight-through approximation is needed. A five-point masked support
//! centered on `round(z/q)` provides a cheap, nearly exact approximation for
//! `alpha * q^2 >= 3`.
//!
//! All moments are accumulated in the centered index space `u = i - c` with
//! `c = clamp(round(z/q), -L, L)`, which keeps the arithmetic well
//! conditioned for large `|z|` and makes the scaling identity
//! `Q(z; q) = q * Q(z/q; 1)` hold to rounding. The computation folds `z` to
//! `|z|` and mirrors signs on output, so odd symmetry is bit-exact. Terms
//! whose softmax weight underflows to zero in `f64` are skipped; this is an
//! exact optimization, not an approximation.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Lower bound kept on quantization steps everywhere in the crate.
pub const Q_MIN: f64 = 1e-4;

/// Step, sharpness, and alphabet half-width of one quantizer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuantizerParams {
    /// Quantization step `q`; positive, at least [`Q_MIN`] in practice.
    pub step: f64,
    /// Softmax sharpness `alpha`; positive. Larger values approach uniform
    /// rounding.
    pub alpha: f64,
    /// Alphabet half-width `L`: reconstruction levels are `q * {-L, ..., L}`.
    pub half_width: i64,
}

impl QuantizerParams {
    pub fn new(step: f64, alpha: f64, half_width: i64) -> Result<Self> {
        let p = Self { step, alpha, half_width };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.step.is_finite() || self.step <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "quantization step must be positive and finite, got {}",
                self.step
            )));
        }
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "alpha must be positive and finite, got {}",
                self.alpha
            )));
        }
        if self.half_width < 1 {
            return Err(Error::InvalidArgument(format!(
                "alphabet half-width must be at least 1, got {}",
                self.half_width
            )));
        }
        Ok(())
    }

    /// Largest representable magnitude, `L * q`.
    pub fn clamp_limit(&self) -> f64 {
        self.half_width as f64 * self.step
    }
}

/// Partial derivatives of the soft quantizer output at one input.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct QuantGrad {
    pub d_z: f64,
    pub d_q: f64,
    pub d_alpha: f64,
}

/// Moments of the reconstruction distribution at one input; everything the
/// forward value and all three derivatives are built from.
#[derive(Clone, Copy, Debug)]
pub struct SoftStats {
    /// The soft quantizer output `E[V | z]` (`V` is the reconstruction).
    pub value: f64,
    /// `Var[V | z]`.
    pub variance: f64,
    /// `E[(z - V)^2 | z]`, the expected squared distortion.
    pub expected_distortion: f64,
    /// `E[V^3] - E[V] E[V^2]`, the uncentered third moment combination that
    /// appears in the step derivative.
    pub uncentered_skew: f64,
    /// `Cov(V, (z - V)^2)`; its negation is the alpha derivative.
    pub distortion_covariance: f64,
}

/// Exponents below this have already underflowed to zero in `f64`.
const EXP_UNDERFLOW: f64 = 746.0;

/// Centered accumulation for non-negative inputs. Returns
/// `(c, mu1, var_u, third_u, dist_u, cov_u)` in units of the step.
fn centered_moments(
    z_abs: f64,
    params: &QuantizerParams,
    masked: bool,
) -> (f64, f64, f64, f64, f64, f64) {
    let q = params.step;
    let levels = params.half_width;
    let levels_f = levels as f64;
    let r = z_abs / q;
    let center_f = r.round().min(levels_f);
    let center = center_f as i64;
    let t = r - center_f;
    let hbar = params.alpha * q * q;

    let (lo, hi) = if masked {
        ((-levels).max(center - 2) - center, levels.min(center + 2) - center)
    } else {
        (-levels - center, levels - center)
    };
    // Support truncation: weights with relative exponent below -EXP_UNDERFLOW
    // are exactly 0.0, so skipping them changes nothing.
    let radius = (EXP_UNDERFLOW / hbar + 0.25).sqrt() + 1.0;
    let u_lo = ((t - radius).floor() as i64).clamp(lo, hi);
    let u_hi = ((t + radius).ceil() as i64).clamp(lo, hi);
    // Peak weight, used for the stable softmax shift.
    let u_star = (t.round() as i64).clamp(u_lo, u_hi) as f64;
    let peak = hbar * (t - u_star) * (t - u_star);

    let (mut s0, mut s1, mut s2, mut s3) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let (mut sd, mut sud) = (0.0f64, 0.0f64);
    for u in u_lo..=u_hi {
        let uf = u as f64;
        let d = t - uf;
        let w = (peak - hbar * d * d).exp();
        s0 += w;
        s1 += w * uf;
        s2 += w * uf * uf;
        s3 += w * uf * uf * uf;
        sd += w * d * d;
        sud += w * uf * d * d;
    }
    let mu1 = s1 / s0;
    let mu2 = s2 / s0;
    let mu3 = s3 / s0;
    let dist_u = sd / s0;
    let cov_u = sud / s0 - mu1 * dist_u;
    let var_u = mu2 - mu1 * mu1;
    let third_u = mu3 - mu1 * mu2;
    (center_f, mu1, var_u, third_u, dist_u, cov_u)
}

/// Full moment set of the reconstruction distribution at `z`.
pub fn soft_stats(z: f64, params: &QuantizerParams, masked: bool) -> SoftStats {
    let sign = if z < 0.0 { -1.0 } else { 1.0 };
    let q = params.step;
    let (c, mu1, var_u, third_u, dist_u, cov_u) = centered_moments(z.abs(), params, masked);
    SoftStats {
        value: sign * q * (c + mu1),
        variance: q * q * var_u,
        expected_distortion: q * q * dist_u,
        uncentered_skew: sign * q * q * q * (2.0 * c * var_u + third_u),
        distortion_covariance: sign * q * q * q * cov_u,
    }
}

/// The soft quantizer `Q_d(z) = E[V | z]`.
pub fn quantize_soft(z: f64, params: &QuantizerParams, masked: bool) -> f64 {
    soft_stats(z, params, masked).value
}

/// Analytic partials of [`quantize_soft`] with respect to `z`, `q`, `alpha`:
///
/// * `d_z = 2 alpha Var[V]`
/// * `d_q = (E[V] + 2 alpha z Var[V] - 2 alpha (E[V^3] - E[V] E[V^2])) / q`
/// * `d_alpha = -Cov(V, (z - V)^2)`
pub fn quantize_grad(z: f64, params: &QuantizerParams, masked: bool) -> QuantGrad {
    grad_from_stats(z, params, &soft_stats(z, params, masked))
}

fn grad_from_stats(z: f64, params: &QuantizerParams, stats: &SoftStats) -> QuantGrad {
    let two_alpha = 2.0 * params.alpha;
    QuantGrad {
        d_z: two_alpha * stats.variance,
        d_q: (stats.value + two_alpha * z * stats.variance
            - two_alpha * stats.uncentered_skew)
            / params.step,
        d_alpha: -stats.distortion_covariance,
    }
}

/// Hard uniform quantization: `clamp(round(z/q), -L, L) * q`, ties away
/// from zero.
pub fn quantize_uniform(z: f64, params: &QuantizerParams) -> f64 {
    let limit = params.half_width as f64;
    (z / params.step).round().clamp(-limit, limit) * params.step
}

/// The conditional PMF over reconstruction indices at one input.
///
/// `probs[k]` is the probability of index `first_index + k`. The full
/// support covers `-L..=L` (entries whose weight underflows are exactly
/// zero); the masked support is the window of up to five indices centered on
/// `center`, clipped to the alphabet.
#[derive(Clone, Debug)]
pub struct Cpmf {
    pub center: i64,
    pub first_index: i64,
    pub probs: Vec<f64>,
}

impl Cpmf {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Probability of reconstruction index `i` (zero outside the support).
    pub fn prob(&self, i: i64) -> f64 {
        let k = i - self.first_index;
        if k < 0 || k as usize >= self.probs.len() {
            0.0
        } else {
            self.probs[k as usize]
        }
    }

    /// Draws one reconstruction index.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> i64 {
        let x: f64 = rng.gen();
        let mut acc = 0.0;
        for (k, &p) in self.probs.iter().enumerate() {
            acc += p;
            if x < acc {
                return self.first_index + k as i64;
            }
        }
        self.first_index + self.probs.len() as i64 - 1
    }
}

/// Normalized weights over a contiguous index window, plus the window.
fn window_probs(z: f64, params: &QuantizerParams, masked: bool) -> (i64, i64, i64, Vec<f64>) {
    let q = params.step;
    let levels = params.half_width;
    let r = z / q;
    let center = r.round().clamp(-(levels as f64), levels as f64) as i64;
    let hbar = params.alpha * q * q;
    let (lo, hi) = if masked {
        ((-levels).max(center - 2), levels.min(center + 2))
    } else {
        (-levels, levels)
    };
    let radius = (EXP_UNDERFLOW / hbar + 0.25).sqrt() + 1.0;
    let t = r - center as f64;
    let w_lo = (((t - radius).floor() as i64).saturating_add(center)).clamp(lo, hi);
    let w_hi = (((t + radius).ceil() as i64).saturating_add(center)).clamp(lo, hi);
    let u_star = (r.round() as i64).clamp(w_lo, w_hi);
    let d_star = r - u_star as f64;
    let peak = hbar * d_star * d_star;
    let mut weights = Vec::with_capacity((w_hi - w_lo + 1) as usize);
    let mut total = 0.0;
    for i in w_lo..=w_hi {
        let d = r - i as f64;
        let w = (peak - hbar * d * d).exp();
        weights.push(w);
        total += w;
    }
    for w in &mut weights {
        *w /= total;
    }
    (center, lo, w_lo, weights)
}

/// Materializes the conditional PMF at `z`. The full support allocates
/// `2L + 1` entries; prefer [`quantize_soft`]/[`quantize_grad`] (which never
/// materialize it) for large alphabets.
pub fn cpmf(z: f64, params: &QuantizerParams, masked: bool) -> Cpmf {
    let (center, lo, w_lo, weights) = window_probs(z, params, masked);
    let hi = if masked {
        params.half_width.min(center + 2)
    } else {
        params.half_width
    };
    let mut probs = vec![0.0; (hi - lo + 1) as usize];
    let offset = (w_lo - lo) as usize;
    probs[offset..offset + weights.len()].copy_from_slice(&weights);
    Cpmf { center, first_index: lo, probs }
}

/// Draws a reconstruction value `i q` from the conditional PMF.
pub fn quantize_stochastic<R: Rng + ?Sized>(
    z: f64,
    params: &QuantizerParams,
    masked: bool,
    rng: &mut R,
) -> f64 {
    let (_, _, w_lo, weights) = window_probs(z, params, masked);
    let x: f64 = rng.gen();
    let mut acc = 0.0;
    for (k, &p) in weights.iter().enumerate() {
        acc += p;
        if x < acc {
            return (w_lo + k as i64) as f64 * params.step;
        }
    }
    (w_lo + weights.len() as i64 - 1) as f64 * params.step
}

/// Which quantizer the JPEG layer applies to each coefficient.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum QuantizerVariant {
    /// The soft quantizer with its exact derivatives.
    Soft,
    /// Hard rounding; all derivatives zero (gradients stop here).
    Uniform,
    /// Hard rounding forward, straight-through backward: `d_z = 1` inside
    /// the clamp range and 0 outside; `d_q = round(z/q) - z/q` inside and
    /// `+/-L` at the clamped edges.
    StraightThrough,
    /// `z + q * u`, `u ~ U(-0.5, 0.5)`, during training; hard rounding at
    /// evaluation time. `d_z = 1`, `d_q = u`.
    AdditiveNoise,
    /// Cubic soft rounding `q (round(r) + (r - round(r))^3)` with `r = z/q`.
    PolynomialRounding,
}

/// Whether a forward pass is part of training or evaluation; only
/// [`QuantizerVariant::AdditiveNoise`] behaves differently.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Train,
    Eval,
}

/// Forward value and local partials for the selected variant. `rng` is only
/// consumed by [`QuantizerVariant::AdditiveNoise`] in the training phase;
/// callers that need reproducibility seed one stream per coefficient.
pub fn quantize_variant<R: Rng + ?Sized>(
    z: f64,
    params: &QuantizerParams,
    variant: QuantizerVariant,
    masked: bool,
    phase: Phase,
    rng: &mut R,
) -> (f64, QuantGrad) {
    match variant {
        QuantizerVariant::Soft => {
            let stats = soft_stats(z, params, masked);
            (stats.value, grad_from_stats(z, params, &stats))
        }
        QuantizerVariant::Uniform => (quantize_uniform(z, params), QuantGrad::default()),
        QuantizerVariant::StraightThrough => {
            let r = z / params.step;
            let limit = params.half_width as f64;
            if r.abs() > limit {
                let edge = limit.copysign(r);
                (edge * params.step, QuantGrad { d_z: 0.0, d_q: edge, d_alpha: 0.0 })
            } else {
                (
                    r.round() * params.step,
                    QuantGrad { d_z: 1.0, d_q: r.round() - r, d_alpha: 0.0 },
                )
            }
        }
        QuantizerVariant::AdditiveNoise => match phase {
            Phase::Train => {
                let u = rng.gen::<f64>() - 0.5;
                (z + params.step * u, QuantGrad { d_z: 1.0, d_q: u, d_alpha: 0.0 })
            }
            Phase::Eval => (quantize_uniform(z, params), QuantGrad::default()),
        },
        QuantizerVariant::PolynomialRounding => {
            let r = z / params.step;
            let n = r.round();
            let f = r - n;
            (
                params.step * (n + f * f * f),
                QuantGrad {
                    d_z: 3.0 * f * f,
                    d_q: n + f * f * f - 3.0 * r * f * f,
                    d_alpha: 0.0,
                },
            )
        }
    }
}
