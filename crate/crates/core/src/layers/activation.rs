use core::f64::consts::{FRAC_1_SQRT_2, PI};

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + crate::math::exp(-x))
    } else {
        let e = crate::math::exp(x);
        e / (1.0 + e)
    }
}

#[inline]
pub fn tanh(x: f64) -> f64 {
    crate::math::tanh(x)
}

/// Exact (erf-based) GELU.
#[inline]
pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + crate::math::erf(x * FRAC_1_SQRT_2))
}

#[inline]
pub fn gelu_grad(x: f64) -> f64 {
    let cdf = 0.5 * (1.0 + crate::math::erf(x * FRAC_1_SQRT_2));
    let pdf = crate::math::exp(-0.5 * x * x) / libm::sqrt(2.0 * PI);
    cdf + x * pdf
}
