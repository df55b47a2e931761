use crate::stats::normal_cdf;
use crate::{Error, Result};

// Acklam's rational approximation (relative error about 1.15e-9).
#[allow(clippy::excessive_precision)]
const A: [f64; 6] = [
    -3.969683028665376e+01,
    2.209460984245205e+02,
    -2.759285104469687e+02,
    1.383577518672690e+02,
    -3.066479806614716e+01,
    2.506628277459239e+00,
];
const B: [f64; 5] = [
    -5.447609879822406e+01,
    1.615858368580409e+02,
    -1.556989798598866e+02,
    6.680131188771972e+01,
    -1.328068155288572e+01,
];
const C: [f64; 6] = [
    -7.784894002430293e-03,
    -3.223964580411365e-01,
    -2.400758277161838e+00,
    -2.549732539343734e+00,
    4.374664141464968e+00,
    2.938163982698783e+00,
];
const D: [f64; 4] = [
    7.784695709041462e-03,
    3.224671290700398e-01,
    2.445134137142996e+00,
    3.754408661907416e+00,
];
const P_LOW: f64 = 0.02425;
const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Standard normal quantile `Φ⁻¹(u)` for `u ∈ (0, 1)`.
pub fn inverse_normal_cdf(u: f64) -> Result<f64> {
    if u > 0.0 && u < 1.0 {
        Ok(inverse_normal_cdf_unchecked(u))
    } else {
        Err(Error::Config(format!("inverse normal CDF argument {u} outside (0, 1)")))
    }
}

/// As [`inverse_normal_cdf`] without the domain check; returns ±∞ at the
/// endpoints and NaN outside.
pub fn inverse_normal_cdf_unchecked(u: f64) -> f64 {
    if u.is_nan() || !(0.0..=1.0).contains(&u) {
        return f64::NAN;
    }
    if u == 0.0 {
        return f64::NEG_INFINITY;
    }
    if u == 1.0 {
        return f64::INFINITY;
    }
    if u == 0.5 {
        return 0.0;
    }
    if u > 0.5 {
        return -lower_half(1.0 - u);
    }
    lower_half(u)
}

/// Quantile for `u ∈ (0, 0.5)`, refined by one Halley step on the lower
/// tail where the CDF is computed without cancellation.
fn lower_half(u: f64) -> f64 {
    let x = if u < P_LOW {
        let q = (-2.0 * u.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = u - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    let e = normal_cdf(x) - u;
    let step = e * SQRT_2PI * (0.5 * x * x).exp();
    x - step / (1.0 + 0.5 * x * step)
}
