//! Synthetic data generators for tests, the acceptance suite and the
//! `simulate` command.

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::market_data::PricePanel;
use crate::matrix::Matrix;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// GARCH(1, 1) returns with Gaussian innovations, started at the
/// unconditional variance and run through `burn` discarded days.
pub fn garch11(omega: f64, alpha: f64, beta: f64, n: usize, burn: usize, seed: u64) -> Vec<f64> {
    assert!(omega > 0.0 && alpha >= 0.0 && beta >= 0.0 && alpha + beta < 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut s2 = omega / (1.0 - alpha - beta);
    let mut out = Vec::with_capacity(n);
    for t in 0..n + burn {
        let r = s2.sqrt() * normal(&mut rng);
        if t >= burn {
            out.push(r);
        }
        s2 = omega + alpha * r * r + beta * s2;
    }
    out
}

/// EGARCH(1, 1): `log s2_t = omega + theta z + lambda (|z| - sqrt(2/pi)) + alpha log s2_{t-1}`.
pub fn egarch11(omega: f64, alpha: f64, theta: f64, lambda: f64, n: usize, burn: usize, seed: u64) -> Vec<f64> {
    assert!(alpha.abs() < 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let e_abs = (2.0 / std::f64::consts::PI).sqrt();
    let mut ls2 = omega / (1.0 - alpha);
    let mut out = Vec::with_capacity(n);
    for t in 0..n + burn {
        let z = normal(&mut rng);
        if t >= burn {
            out.push((0.5 * ls2).exp() * z);
        }
        ls2 = omega + theta * z + lambda * (z.abs() - e_abs) + alpha * ls2;
    }
    out
}

/// `n_days x dim` rows drawn from `N(0, cov)`; panics unless `cov` is
/// positive definite.
pub fn gaussian_panel(n_days: usize, cov: &Matrix, seed: u64) -> Matrix {
    let l = cov.cholesky().expect("covariance must be positive definite");
    let dim = cov.rows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Matrix::zeros(n_days, dim);
    let mut z = vec![0.0; dim];
    for t in 0..n_days {
        z.iter_mut().for_each(|v| *v = normal(&mut rng));
        let row = out.row_mut(t);
        for i in 0..dim {
            row[i] = (0..=i).map(|k| l[(i, k)] * z[k]).sum();
        }
    }
    out
}

/// Equicorrelation matrix with unit diagonal and `rho` elsewhere.
pub fn equicorrelation(dim: usize, rho: f64) -> Matrix {
    Matrix::from_fn(dim, dim, |i, j| if i == j { 1.0 } else { rho })
}

/// Consecutive weekdays starting at `first` (moved forward to a weekday).
pub fn business_days(first: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut d = first;
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d += Duration::days(1);
    }
    out
}

/// One-factor price panel: a GARCH(1, 1) market factor with daily variance
/// around `1e-4`, asset loadings in `[0.5, 1.5]` and Gaussian idiosyncratic
/// noise with volatility in `[0.008, 0.015]`. Prices start at 100.
pub fn factor_price_panel(n_assets: usize, n_days: usize, seed: u64) -> PricePanel {
    assert!(n_assets >= 1 && n_days >= 2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let factor = garch11(0.05e-4, 0.10, 0.85, n_days - 1, 500, rng.random());
    let loadings: Vec<f64> = (0..n_assets).map(|_| rng.random_range(0.5..1.5)).collect();
    let idio: Vec<f64> = (0..n_assets).map(|_| rng.random_range(0.008..0.015)).collect();
    let mut prices = Matrix::zeros(n_days, n_assets);
    prices.row_mut(0).fill(100.0);
    for t in 1..n_days {
        for j in 0..n_assets {
            let r = loadings[j] * factor[t - 1] + idio[j] * normal(&mut rng);
            prices[(t, j)] = prices[(t - 1, j)] * r.exp();
        }
    }
    let dates = business_days(NaiveDate::from_ymd_opt(2000, 1, 3).expect("valid date"), n_days);
    let assets = (0..n_assets).map(|j| format!("A{j:03}")).collect();
    PricePanel::new(dates, assets, prices).expect("simulated prices are positive and dated")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::sample_variance;

    #[test]
    fn garch_simulation_matches_unconditional_variance() {
        let r = garch11(0.05e-4, 0.1, 0.85, 200_000, 1000, 3);
        let v = sample_variance(&r);
        assert!((v / 1e-4 - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn gaussian_panel_has_requested_correlation() {
        let x = gaussian_panel(50_000, &equicorrelation(3, 0.6), 5);
        let c01: f64 = x.iter_rows().map(|r| r[0] * r[1]).sum::<f64>() / 50_000.0;
        assert!((c01 - 0.6).abs() < 0.02);
    }

    #[test]
    fn factor_panel_shape_and_dates() {
        let p = factor_price_panel(4, 30, 1);
        assert_eq!((p.n_days(), p.n_assets()), (30, 4));
        assert!(p.dates().windows(2).all(|w| w[0] < w[1]));
        assert!(p.dates().iter().all(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)));
    }
}
