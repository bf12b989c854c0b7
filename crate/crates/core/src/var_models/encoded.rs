//! Encoded VaR: the `alpha`-quantile of portfolio returns rebuilt from
//! decoder scenarios.
//!
//! For each forecast day the decoder generates `n_samples` standardized
//! return vectors from the latent prior, each is mapped back to returns with
//! that day's rolling mean and volatility, and the portfolio weights collapse
//! it to a scalar scenario.

use rayon::prelude::*;

use super::{check_alpha, Result, VarModelError};
use crate::market_data::{RollingStats, Weights};
use crate::stats::{derive_seed, quantile_sorted, sort_f64};
use crate::vae::{sample_standardized, VaeParams};

/// Sorted portfolio scenarios for one day (seeded with `derive_seed(seed, day)`).
fn day_scenarios(
    params: &VaeParams,
    stats: &RollingStats,
    weights: &Weights,
    day: usize,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    // Fail on a missing day before spending time on sampling.
    stats.mu_at(day)?;
    let mut scenarios = sample_standardized(params, n_samples, derive_seed(seed, day as u64))?;
    let mut out = Vec::with_capacity(n_samples);
    for i in 0..scenarios.rows() {
        let row = scenarios.row_mut(i);
        stats.destandardize_row(day, row)?;
        out.push(weights.dot(row));
    }
    if out.iter().any(|x| !x.is_finite()) {
        return Err(VarModelError::NonFinite);
    }
    sort_f64(&mut out);
    Ok(out)
}

fn check_inputs(params: &VaeParams, stats: &RollingStats, weights: &Weights, n_samples: usize) -> Result<()> {
    if n_samples == 0 {
        return Err(VarModelError::ZeroSamples);
    }
    let n = params.arch.input_dim;
    if stats.n_assets() != n || weights.len() != n {
        return Err(VarModelError::ShapeMismatch(format!(
            "network has {n} inputs, statistics {} assets, weights {}",
            stats.n_assets(),
            weights.len()
        )));
    }
    Ok(())
}

/// Encoded VaR at one level for each day index in `days` (indices into the
/// return panel the statistics were computed from).
pub fn encoded_var(
    params: &VaeParams,
    stats: &RollingStats,
    weights: &Weights,
    days: &[usize],
    alpha: f64,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut all = encoded_var_multi(params, stats, weights, days, &[alpha], n_samples, seed)?;
    Ok(all.pop().expect("one level"))
}

/// Encoded VaR at several levels from a single scenario set per day, so the
/// forecasts are monotone in `alpha` by construction. Outer index: level.
pub fn encoded_var_multi(
    params: &VaeParams,
    stats: &RollingStats,
    weights: &Weights,
    days: &[usize],
    alphas: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    for &a in alphas {
        check_alpha(a)?;
    }
    check_inputs(params, stats, weights, n_samples)?;
    let per_day: Vec<Vec<f64>> = days
        .par_iter()
        .map(|&day| {
            let sorted = day_scenarios(params, stats, weights, day, n_samples, seed)?;
            Ok(alphas
                .iter()
                .map(|&a| quantile_sorted(&sorted, a).expect("non-empty"))
                .collect())
        })
        .collect::<Result<_>>()?;
    Ok((0..alphas.len())
        .map(|k| per_day.iter().map(|d| d[k]).collect())
        .collect())
}
