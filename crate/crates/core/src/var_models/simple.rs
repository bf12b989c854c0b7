//! Historical simulation, Monte-Carlo geometric Brownian motion and the
//! variance-covariance model.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_alpha, check_start, Result, VarModelError};
use crate::stats::{derive_seed, mean, normal_quantile, quantile, quantile_sorted, sample_std, sort_f64};

/// Shortest window accepted by the rolling estimators.
pub const MIN_WINDOW: usize = 20;

fn check_window(len: usize) -> Result<()> {
    if len < MIN_WINDOW {
        Err(VarModelError::ShortWindow { len, min: MIN_WINDOW })
    } else {
        Ok(())
    }
}

/// Empirical `alpha`-quantile of the window (`0 < alpha < 0.5`).
pub fn historical_var(window: &[f64], alpha: f64) -> Result<f64> {
    check_window(window.len())?;
    if !(alpha > 0.0 && alpha < 0.5) {
        return Err(VarModelError::InvalidAlpha(alpha));
    }
    if window.iter().any(|x| !x.is_finite()) {
        return Err(VarModelError::NonFinite);
    }
    Ok(quantile(window, alpha).expect("non-empty window, alpha in range"))
}

pub fn historical_series(returns: &[f64], start: usize, window: usize, alpha: f64) -> Result<Vec<f64>> {
    check_window(window)?;
    check_start(returns.len(), start, window)?;
    (start..returns.len())
        .map(|t| historical_var(&returns[t - window..t], alpha))
        .collect()
}

/// Empirical `alpha`-quantile of `n_paths` simulated one-day log returns
/// `(mu - sigma^2/2) + sigma Z`.
pub fn mc_gbm_quantile(mu: f64, sigma: f64, alpha: f64, n_paths: usize, seed: u64) -> Result<f64> {
    check_alpha(alpha)?;
    if n_paths == 0 {
        return Err(VarModelError::ZeroSamples);
    }
    if !(sigma >= 0.0) || !sigma.is_finite() || !mu.is_finite() {
        return Err(VarModelError::InvalidParams(format!("mu {mu}, sigma {sigma}")));
    }
    let drift = mu - 0.5 * sigma * sigma;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut paths: Vec<f64> = (0..n_paths)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            drift + sigma * z
        })
        .collect();
    sort_f64(&mut paths);
    Ok(quantile_sorted(&paths, alpha).expect("non-empty"))
}

/// Drift and volatility estimated from the window (mean and sample standard
/// deviation), then [`mc_gbm_quantile`].
pub fn mc_gbm_var(window: &[f64], alpha: f64, n_paths: usize, seed: u64) -> Result<f64> {
    check_window(window.len())?;
    if window.iter().any(|x| !x.is_finite()) {
        return Err(VarModelError::NonFinite);
    }
    mc_gbm_quantile(mean(window), sample_std(window), alpha, n_paths, seed)
}

/// Day `t` uses the child seed `derive_seed(seed, t)`.
pub fn mc_gbm_series(
    returns: &[f64],
    start: usize,
    window: usize,
    alpha: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    check_window(window)?;
    check_start(returns.len(), start, window)?;
    (start..returns.len())
        .map(|t| mc_gbm_var(&returns[t - window..t], alpha, n_paths, derive_seed(seed, t as u64)))
        .collect()
}

/// `Phi^{-1}(alpha) * sigma`.
pub fn variance_covariance_var(sigma: f64, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(VarModelError::NonPositiveSigma(sigma));
    }
    Ok(normal_quantile(alpha).expect("alpha checked") * sigma)
}

/// Volatility from the sample standard deviation of the trailing window.
pub fn variance_covariance_series(returns: &[f64], start: usize, window: usize, alpha: f64) -> Result<Vec<f64>> {
    check_window(window)?;
    check_start(returns.len(), start, window)?;
    (start..returns.len())
        .map(|t| variance_covariance_var(sample_std(&returns[t - window..t]), alpha))
        .collect()
}
