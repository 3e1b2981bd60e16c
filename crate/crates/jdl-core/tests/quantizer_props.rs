//! Property tests for the soft quantizer against a naive reference
//! implementation, plus the algebraic identities the statistics must satisfy.

use jdl_core::quantizer::{
    cpmf, quantize_grad, quantize_soft, quantize_uniform, soft_stats, QuantizerParams,
};
use proptest::prelude::*;

/// Reference statistics summed directly over the whole alphabet with a
/// max-subtracted softmax and no truncation or centering tricks.
struct NaiveStats {
    value: f64,
    variance: f64,
    uncentered_skew: f64,
    expected_distortion: f64,
    distortion_covariance: f64,
}

fn naive_stats(z: f64, q: f64, alpha: f64, half_width: i64, masked: bool) -> NaiveStats {
    let (lo, hi) = if masked {
        let center = (z / q).round().clamp(-(half_width as f64), half_width as f64) as i64;
        ((center - 2).max(-half_width), (center + 2).min(half_width))
    } else {
        (-half_width, half_width)
    };
    let exponents: Vec<f64> = (lo..=hi)
        .map(|i| {
            let d = z - i as f64 * q;
            -alpha * d * d
        })
        .collect();
    let peak = exponents.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = exponents.iter().map(|e| (e - peak).exp()).collect();
    let total: f64 = weights.iter().sum();
    let (mut e1, mut e2, mut e3, mut dist, mut vdist) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for (k, i) in (lo..=hi).enumerate() {
        let p = weights[k] / total;
        let v = i as f64 * q;
        let d = (z - v) * (z - v);
        e1 += p * v;
        e2 += p * v * v;
        e3 += p * v * v * v;
        dist += p * d;
        vdist += p * v * d;
    }
    NaiveStats {
        value: e1,
        variance: e2 - e1 * e1,
        uncentered_skew: e3 - e1 * e2,
        expected_distortion: dist,
        distortion_covariance: vdist - e1 * dist,
    }
}

/// Absolute-or-relative agreement check with a scale-aware floor for the
/// cancellation noise the naive reference carries.
fn close(label: &str, got: f64, want: f64, scale: f64) -> Result<(), TestCaseError> {
    let tol = 1e-11 * scale.max(1.0) + 1e-9 * want.abs();
    prop_assert!(
        (got - want).abs() <= tol,
        "{label}: got {got}, reference {want}, tol {tol}"
    );
    Ok(())
}

fn arb_config() -> impl Strategy<Value = (f64, f64, f64, i64)> {
    (0.1..2.0f64, 0.1..20.0f64, 1i64..=8, -1.2..1.2f64)
        .prop_map(|(q, alpha, l, frac)| (frac * l as f64 * q, q, alpha, l))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    /// Forward value and every statistic match the naive full-support sum.
    #[test]
    fn stats_match_the_naive_reference((z, q, alpha, l) in arb_config()) {
        let params = QuantizerParams::new(q, alpha, l).unwrap();
        let stats = soft_stats(z, &params, false);
        let reference = naive_stats(z, q, alpha, l, false);
        let scale = (l as f64 * q).powi(2).max(1.0) * (l as f64 * q).max(1.0);
        close("value", stats.value, reference.value, scale)?;
        close("variance", stats.variance, reference.variance, scale)?;
        close("skew", stats.uncentered_skew, reference.uncentered_skew, scale)?;
        close("distortion", stats.expected_distortion, reference.expected_distortion, scale)?;
        close(
            "covariance",
            stats.distortion_covariance,
            reference.distortion_covariance,
            scale,
        )?;
    }

    /// Masked statistics match a naive sum over the same five-point window.
    #[test]
    fn masked_stats_match_the_naive_reference((z, q, alpha, l) in arb_config()) {
        let params = QuantizerParams::new(q, alpha, l).unwrap();
        let stats = soft_stats(z, &params, true);
        let reference = naive_stats(z, q, alpha, l, true);
        let scale = (l as f64 * q).powi(2).max(1.0) * (l as f64 * q).max(1.0);
        close("value", stats.value, reference.value, scale)?;
        close("variance", stats.variance, reference.variance, scale)?;
        close("skew", stats.uncentered_skew, reference.uncentered_skew, scale)?;
        close("distortion", stats.expected_distortion, reference.expected_distortion, scale)?;
        close(
            "covariance",
            stats.distortion_covariance,
            reference.distortion_covariance,
            scale,
        )?;
    }

    /// Probabilities are a distribution on the alphabet in both modes.
    #[test]
    fn cpmf_is_normalized((z, q, alpha, l) in arb_config(), masked in any::<bool>()) {
        let params = QuantizerParams::new(q, alpha, l).unwrap();
        let pmf = cpmf(z, &params, masked);
        let mut total = 0.0;
        for k in 0..pmf.len() as i64 {
            let p = pmf.prob(pmf.first_index + k);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&p));
            total += p;
        }
        prop_assert!((total - 1.0).abs() < 1e-12, "total probability {total}");
        prop_assert_eq!(pmf.prob(params.half_width + 1), 0.0, "outside the support");
    }

    /// The soft quantizer and all three partials have exact odd/even symmetry.
    #[test]
    fn negating_the_input_flips_the_sign_bit_exactly((z, q, alpha, l) in arb_config()) {
        let params = QuantizerParams::new(q, alpha, l).unwrap();
        let plus = quantize_soft(z, &params, false);
        let minus = quantize_soft(-z, &params, false);
        prop_assert_eq!(minus.to_bits(), (-plus).to_bits(), "value must be exactly odd");
        let gp = quantize_grad(z, &params, false);
        let gm = quantize_grad(-z, &params, false);
        prop_assert_eq!(gm.d_z.to_bits(), gp.d_z.to_bits(), "d_z must be exactly even");
        prop_assert_eq!(gm.d_q.to_bits(), (-gp.d_q).to_bits(), "d_q must be exactly odd");
        prop_assert_eq!(
            gm.d_alpha.to_bits(),
            (-gp.d_alpha).to_bits(),
            "d_alpha must be exactly odd"
        );
    }

    /// Scaling (z, q) by c and alpha by 1/c^2 rescales the output by c.
    #[test]
    fn scale_invariance_identity(
        (z, q, alpha, l) in arb_config(),
        c in 0.1..10.0f64,
    ) {
        let base = QuantizerParams::new(q, alpha, l).unwrap();
        let scaled = QuantizerParams::new(c * q, alpha / (c * c), l).unwrap();
        let lhs = quantize_soft(c * z, &scaled, false);
        let rhs = c * quantize_soft(z, &base, false);
        let scale = rhs.abs().max(1.0);
        prop_assert!((lhs - rhs).abs() / scale <= 1e-10, "{lhs} vs {rhs}");
    }

    /// E[(z - V)^2] decomposes exactly into squared bias plus variance.
    #[test]
    fn distortion_decomposition_identity((z, q, alpha, l) in arb_config()) {
        let params = QuantizerParams::new(q, alpha, l).unwrap();
        let stats = soft_stats(z, &params, false);
        let bias = z - stats.value;
        let recomposed = bias * bias + stats.variance;
        prop_assert!(
            (stats.expected_distortion - recomposed).abs() <= 1e-10,
            "distortion {} vs bias^2 + variance {}",
            stats.expected_distortion,
            recomposed
        );
    }

    /// At very large alpha the soft quantizer collapses onto hard rounding
    /// away from the half-integer decision boundaries.
    #[test]
    fn hard_rounding_limit(l in 2i64..=16, frac in -1.2..1.2f64) {
        let params = QuantizerParams::new(1.0, 1000.0, l).unwrap();
        let z = frac * l as f64;
        let distance_to_boundary = ((z / params.step).fract().abs() - 0.5).abs();
        prop_assume!(distance_to_boundary > 0.01);
        let soft = quantize_soft(z, &params, false);
        let hard = quantize_uniform(z, &params);
        prop_assert!((soft - hard).abs() < 1e-6, "soft {soft} vs hard {hard} at z {z}");
    }

    /// Masked evaluation differs from the full sum by at most the tail mass
    /// once the profile is reasonably sharp.
    #[test]
    fn masked_tracks_full_for_sharp_profiles(
        q in 1.0..4.0f64,
        alpha in 3.0..20.0f64,
        frac in -1.2..1.2f64,
    ) {
        let l = 8;
        let params = QuantizerParams::new(q, alpha, l).unwrap();
        let z = frac * l as f64 * q;
        let full = quantize_soft(z, &params, false);
        let masked = quantize_soft(z, &params, true);
        prop_assert!((full - masked).abs() <= 1e-7, "full {full} vs masked {masked}");
    }

    /// Sampled symbols always live on the support used by the forward pass.
    #[test]
    fn stochastic_samples_stay_on_the_alphabet(
        (z, q, alpha, l) in arb_config(),
        seed in any::<u64>(),
    ) {
        use rand::SeedableRng;
        let params = QuantizerParams::new(q, alpha, l).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let v = jdl_core::quantizer::quantize_stochastic(z, &params, false, &mut rng);
        let index = v / q;
        prop_assert!((index.round() - index).abs() < 1e-9, "off-grid sample {v}");
        prop_assert!(index.abs() <= l as f64 + 1e-9, "out-of-range sample {v}");
    }
}

/// The sup of |d(Q_d)/d(alpha)| over a dense grid decays as alpha grows.
#[test]
fn alpha_gradient_sup_decays_monotonically() {
    let params_for = |alpha: f64| QuantizerParams::new(1.0, alpha, 4).unwrap();
    let sup_for = |alpha: f64| {
        let params = params_for(alpha);
        let mut sup = 0.0f64;
        let mut z = -4.5;
        while z <= 4.5 {
            let g = quantize_grad(z, &params, false);
            sup = sup.max(g.d_alpha.abs());
            z += 0.01;
        }
        sup
    };
    let sups: Vec<f64> = [1.0, 2.0, 4.0, 8.0, 16.0].iter().map(|&a| sup_for(a)).collect();
    for pair in sups.windows(2) {
        assert!(
            pair[1] < pair[0],
            "sup |d_alpha| must strictly decay: {sups:?}"
        );
    }
}
