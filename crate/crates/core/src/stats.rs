//! Small numeric kernels shared across modules.

use std::f64::consts::SQRT_2;

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    if x.is_nan() {
        return f64::NAN;
    }
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Type-7 (linear interpolation between order statistics) quantile of an
/// ascending slice. `q` is clamped to `[0, 1]`; an empty slice yields 0.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    match sorted.len() {
        0 => 0.0,
        1 => sorted[0],
        n => {
            let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let hi = (lo + 1).min(n - 1);
            let frac = h - lo as f64;
            if frac == 0.0 {
                sorted[lo]
            } else {
                sorted[lo] + frac * (sorted[hi] - sorted[lo])
            }
        }
    }
}

/// Type-7 quantile of unsorted data, reordering `values` in place.
/// Uses selection rather than a full sort.
pub fn quantile_select(values: &mut [f64], q: f64) -> f64 {
    let n = values.len();
    match n {
        0 => 0.0,
        1 => values[0],
        _ => {
            let h = (n - 1) as f64 * q.clamp(0.0, 1.0);
            let lo = h.floor() as usize;
            let frac = h - lo as f64;
            let (_, lo_val, upper) = values.select_nth_unstable_by(lo, f64::total_cmp);
            let lo_val = *lo_val;
            if frac == 0.0 || upper.is_empty() {
                lo_val
            } else {
                let hi_val = upper.iter().copied().fold(f64::INFINITY, f64::min);
                lo_val + frac * (hi_val - lo_val)
            }
        }
    }
}

/// Streaming central moments up to order four (Terriberry's update).
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub count: u64,
    pub mean: f64,
    pub m2: f64,
    pub m3: f64,
    pub m4: f64,
}

impl Moments {
    pub fn push(&mut self, x: f64) {
        let n1 = self.count as f64;
        self.count += 1;
        let n = self.count as f64;
        let delta = x - self.mean;
        let delta_n = delta / n;
        let delta_n2 = delta_n * delta_n;
        let term1 = delta * delta_n * n1;
        self.mean += delta_n;
        self.m4 += term1 * delta_n2 * (n * n - 3.0 * n + 3.0) + 6.0 * delta_n2 * self.m2
            - 4.0 * delta_n * self.m3;
        self.m3 += term1 * delta_n * (n - 2.0) - 3.0 * delta_n * self.m2;
        self.m2 += term1;
    }

    /// Two-pass batch computation, used as the reference for the streaming path.
    pub fn from_batch(values: &[f64]) -> Self {
        let count = values.len() as u64;
        if count == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
        for &v in values {
            let d = v - mean;
            let d2 = d * d;
            m2 += d2;
            m3 += d2 * d;
            m4 += d2 * d2;
        }
        Self { count, mean, m2, m3, m4 }
    }

    /// Bessel-corrected sample variance; 0 below two observations.
    pub fn sample_variance(&self) -> f64 {
        if self.count < 2 {
            0.0
        } else {
            (self.m2 / (self.count - 1) as f64).max(0.0)
        }
    }

    /// Fourth central sample moment (divided by n).
    pub fn fourth_central(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.m4 / self.count as f64
        }
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Population variance (divisor n) around the sample mean.
pub fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = mean(values);
    values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// FNV-1a over bytes; stable across platforms and releases.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Folds a sequence of words into one well-mixed 64-bit seed.
pub fn mix_seed(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0u64, |acc, &w| splitmix64(acc ^ splitmix64(w)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn quantile_type7_matches_hand_values() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile_sorted(&v, 0.5), 3.0);
        assert_eq!(quantile_sorted(&[1.0, 2.0, 3.0, 4.0], 0.5), 2.5);
        assert!((quantile_sorted(&v, 0.9) - 4.6).abs() < 1e-12);
        assert_eq!(quantile_sorted(&[], 0.5), 0.0);
    }

    #[test]
    fn normal_cdf_reference_points() {
        // mpmath ncdf at 50 digits
        let cases = [
            (0.0, 0.5),
            (1.959963984540054, 0.975),
            (-1.0, 0.15865525393145705),
            (3.0, 0.9986501019683699),
            (-8.0, 6.22096057427178e-16),
            (8.5, 0.9999999999999999905),
            (-20.0, 2.7536241186062337e-89),
        ];
        for (x, p) in cases {
            assert!((normal_cdf(x) - p).abs() <= 1e-12, "x={x}");
        }
    }

    proptest! {
        #[test]
        fn select_matches_sort(mut v in prop::collection::vec(-1e6f64..1e6, 1..200), q in 0.0f64..1.0) {
            let mut sorted = v.clone();
            sorted.sort_by(f64::total_cmp);
            let a = quantile_sorted(&sorted, q);
            let b = quantile_select(&mut v, q);
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
        }

        #[test]
        fn streaming_moments_match_batch(v in prop::collection::vec(-1e3f64..1e3, 1..300)) {
            let mut m = Moments::default();
            v.iter().for_each(|&x| m.push(x));
            let b = Moments::from_batch(&v);
            let close = |x: f64, y: f64, scale: f64| (x - y).abs() <= 1e-9 * scale.max(1.0);
            prop_assert!(close(m.mean, b.mean, b.mean.abs()));
            prop_assert!(close(m.m2, b.m2, b.m2.abs()));
            let s4 = b.m4.abs() + (b.m2 * b.m2 / b.count as f64);
            prop_assert!(close(m.m4, b.m4, s4));
            let s3 = (b.m2.powf(1.5) / (b.count as f64).sqrt()).max(b.m3.abs());
            prop_assert!(close(m.m3, b.m3, s3));
        }
    }
}
