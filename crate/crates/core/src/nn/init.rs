use rand::Rng;

use crate::tensor::Scalar;

/// He-style uniform fill: `U(-sqrt(6/fan_in), sqrt(6/fan_in))`.
pub fn he_uniform<T: Scalar>(values: &mut [T], fan_in: usize, rng: &mut impl Rng) {
    let limit = (6.0 / fan_in.max(1) as f64).sqrt();
    for v in values {
        *v = T::from_f64_lossy(rng.gen_range(-limit..limit));
    }
}
