//! Shared statistical helpers.
//!
//! Every empirical quantile in the crate goes through [`quantile_sorted`]:
//! order statistics with linear interpolation at `h = (n - 1) * q`.

use statrs::distribution::{ContinuousCDF, Normal};

/// Empirical `q`-quantile of already sorted data. Returns `None` for empty
/// input or `q` outside `[0, 1]`.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() || !(0.0..=1.0).contains(&q) {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = h - lo as f64;
    Some(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Empirical `q`-quantile of unsorted data (sorts a copy).
pub fn quantile(values: &[f64], q: f64) -> Option<f64> {
    let mut sorted = values.to_vec();
    sort_f64(&mut sorted);
    quantile_sorted(&sorted, q)
}

/// Total-order sort; NaN values end up last.
pub fn sort_f64(values: &mut [f64]) {
    values.sort_by(|a, b| a.total_cmp(b));
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Unbiased sample variance (divisor `n - 1`).
pub fn sample_variance(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return f64::NAN;
    }
    let m = mean(values);
    values.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

pub fn sample_std(values: &[f64]) -> f64 {
    sample_variance(values).sqrt()
}

fn standard_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal is valid")
}

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    standard_normal().cdf(x)
}

/// Inverse standard normal CDF. Returns `None` unless `0 < p < 1`.
pub fn normal_quantile(p: f64) -> Option<f64> {
    if p > 0.0 && p < 1.0 {
        Some(standard_normal().inverse_cdf(p))
    } else {
        None
    }
}

/// Derives an independent child seed for `stream` (splitmix64 finalizer), so
/// per-day and per-model generators never share a sequence.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x6A09_E667_F3BC_C909);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantile_convention() {
        let w = [-0.05, -0.02, 0.01, 0.03];
        assert_eq!(quantile(&w, 0.0), Some(-0.05));
        assert!((quantile(&w, 0.25).unwrap() - -0.0275).abs() < 1e-15);
        assert_eq!(quantile(&w, 1.0), Some(0.03));
        assert_eq!(quantile(&[], 0.5), None);
        assert_eq!(quantile(&w, 1.5), None);
    }

    // Bisection on a Simpson-integrated density, independent of statrs.
    fn quadrature_normal_quantile(p: f64) -> f64 {
        let pdf = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let cdf = |x: f64| {
            let a = -12.0;
            let n = 20_000;
            let h = (x - a) / n as f64;
            let mut s = pdf(a) + pdf(x);
            for i in 1..n {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * pdf(a + i as f64 * h);
            }
            s * h / 3.0
        };
        let (mut lo, mut hi) = (-10.0, 10.0);
        for _ in 0..80 {
            let mid = 0.5 * (lo + hi);
            if cdf(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn normal_quantile_matches_quadrature_oracle() {
        for &p in &[0.001, 0.01, 0.05, 0.25, 0.5, 0.9, 0.99] {
            let oracle = quadrature_normal_quantile(p);
            let got = normal_quantile(p).unwrap();
            assert!((got - oracle).abs() < 1e-8, "p={p}: {got} vs {oracle}");
        }
        assert!((normal_quantile(0.05).unwrap() - -1.6448536).abs() < 1e-7);
        assert_eq!(normal_quantile(0.0), None);
        assert_eq!(normal_quantile(1.0), None);
    }

    #[test]
    fn sample_moments() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(mean(&v), 2.5);
        assert!((sample_variance(&v) - 5.0 / 3.0).abs() < 1e-15);
    }
}
