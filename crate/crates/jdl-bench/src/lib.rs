//! Shared fixtures for the benchmark targets: deterministic random images,
//! coefficient probes, and mid-range quantizer settings.

use jdl_core::qtable::QuantTables;
use jdl_core::quantizer::QuantizerParams;
use jdl_core::tensor::ImageTensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Deterministic random RGB image with values spanning the pixel range.
pub fn random_image(height: usize, width: usize, seed: u64) -> ImageTensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut img = ImageTensor::zeros(3, height, width);
    for v in img.data_mut() {
        *v = rng.gen_range(0.0..255.0);
    }
    img
}

/// Deterministic coefficient probes spread over the alphabet of `params`.
pub fn random_inputs(params: &QuantizerParams, count: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let span = params.half_width as f64 * params.step;
    (0..count).map(|_| rng.gen_range(-span..span)).collect()
}

/// Mid-range quantizer settings: unit step, moderate sharpness.
pub fn default_params(half_width: i64) -> QuantizerParams {
    QuantizerParams::new(1.0, 5.0, half_width).expect("valid settings")
}

/// Eight-bit tables with a mid-range step everywhere.
pub fn default_tables() -> QuantTables {
    QuantTables::filled(8, 2.0, 5.0).expect("valid tables")
}
