//! Conditional autoregressive VaR, fitted by minimizing the tick loss.
//!
//! Recursions, with `x` the return and `VaR` negative:
//!
//! - symmetric: `b1 + b2 VaR_{t-1} + b3 |x_{t-1}|`
//! - garch: `-(b1 + b2 VaR_{t-1}^2 + b3 x_{t-1}^2)^{1/2}`
//! - adaptive: `b0 + sum_{i<=p} b_i VaR_{t-i} + sum_{j<=q} b_{p+j} |x_{t-j}|`
//! - asymmetric: `b1 + b2 VaR_{t-1} + b3 max(x_{t-1}, 0) + b4 max(-x_{t-1}, 0)`
//!
//! `VaR_0` is the empirical quantile of the first 300 observations and the
//! tick loss is averaged over days `1..n`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_alpha, check_start, Result, VarModelError};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::stats::{quantile, sample_std};

pub const CAVIAR_INIT_OBS: usize = 300;
const MIN_FIT_OBS: usize = 1000;
const POLISH_ROUNDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CaviarVariant {
    Symmetric,
    Garch,
    /// Generic lag form with `l(x) = |x|`.
    Adaptive { p: usize, q: usize },
    Asymmetric,
}

impl CaviarVariant {
    pub fn n_params(self) -> usize {
        match self {
            CaviarVariant::Symmetric | CaviarVariant::Garch => 3,
            CaviarVariant::Adaptive { p, q } => 1 + p + q,
            CaviarVariant::Asymmetric => 4,
        }
    }

    fn max_lag(self) -> usize {
        match self {
            CaviarVariant::Adaptive { p, q } => p.max(q).max(1),
            _ => 1,
        }
    }

    /// Power of the return scale carried by the intercept.
    fn intercept_degree(self) -> i32 {
        if self == CaviarVariant::Garch {
            2
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaviarParams {
    pub variant: CaviarVariant,
    pub beta: Vec<f64>,
}

impl CaviarParams {
    pub fn new(variant: CaviarVariant, beta: Vec<f64>) -> Result<Self> {
        if let CaviarVariant::Adaptive { p, q } = variant {
            if p == 0 || q == 0 {
                return Err(VarModelError::InvalidParams("adaptive lags must be at least 1".into()));
            }
        }
        if beta.len() != variant.n_params() {
            return Err(VarModelError::InvalidParams(format!(
                "{:?} needs {} coefficients, got {}",
                variant,
                variant.n_params(),
                beta.len()
            )));
        }
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(VarModelError::NonFinite);
        }
        Ok(Self { variant, beta })
    }
}

/// Empirical `alpha`-quantile of the first (up to) 300 observations.
pub fn caviar_var0(returns: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    let head = &returns[..returns.len().min(CAVIAR_INIT_OBS)];
    quantile(head, alpha).ok_or(VarModelError::ShortWindow { len: 0, min: 1 })
}

/// VaR for days `0 ..= n`: `VaR_t = var0` for `t < max_lag`, the recursion
/// afterwards. A non-finite value (including a negative radicand in the
/// garch form) is propagated.
pub fn caviar_path(params: &CaviarParams, returns: &[f64], var0: f64) -> Vec<f64> {
    let n = returns.len();
    let b = &params.beta;
    let mut path = Vec::with_capacity(n + 1);
    let warm = params.variant.max_lag().min(n + 1);
    path.resize(warm, var0);
    for t in warm..=n {
        let (v1, x1) = (path[t - 1], returns[t - 1]);
        let v = match params.variant {
            CaviarVariant::Symmetric => b[0] + b[1] * v1 + b[2] * x1.abs(),
            CaviarVariant::Garch => {
                let s = b[0] + b[1] * v1 * v1 + b[2] * x1 * x1;
                if s >= 0.0 {
                    -s.sqrt()
                } else {
                    f64::NAN
                }
            }
            CaviarVariant::Adaptive { p, q } => {
                let ar: f64 = (1..=p).map(|i| b[i] * path[t - i]).sum();
                let ma: f64 = (1..=q).map(|j| b[p + j] * returns[t - j].abs()).sum();
                b[0] + ar + ma
            }
            CaviarVariant::Asymmetric => b[0] + b[1] * v1 + b[2] * x1.max(0.0) + b[3] * (-x1).max(0.0),
        };
        path.push(v);
    }
    path
}

/// Mean of `(alpha - 1{x < VaR}) (x - VaR)`.
pub fn tick_loss(returns: &[f64], var: &[f64], alpha: f64) -> f64 {
    let n = returns.len().min(var.len());
    if n == 0 {
        return f64::NAN;
    }
    let s: f64 = returns
        .iter()
        .zip(var)
        .map(|(x, v)| {
            let hit = if x < v { 1.0 } else { 0.0 };
            (alpha - hit) * (x - v)
        })
        .sum();
    s / n as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaviarFitOptions {
    /// Best random candidates refined by the simplex search.
    pub restarts: usize,
    /// Random coefficient vectors screened before the restarts.
    pub candidates: usize,
    pub seed: u64,
    /// Coefficients held at a given value; empty or `None` entries are free.
    pub fixed: Vec<Option<f64>>,
}

impl Default for CaviarFitOptions {
    fn default() -> Self {
        Self {
            restarts: 10,
            candidates: 1000,
            seed: 0,
            fixed: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaviarFit {
    pub params: CaviarParams,
    pub alpha: f64,
    pub var0: f64,
    /// In-sample tick loss over days `1..n`.
    pub loss: f64,
    /// Tick loss of the best constant forecast over the same days.
    pub baseline_loss: f64,
}

fn path_loss(params: &CaviarParams, returns: &[f64], var0: f64, alpha: f64) -> f64 {
    let path = caviar_path(params, returns, var0);
    let v = &path[1..returns.len()];
    if v.iter().any(|x| !x.is_finite() || x.abs() > 1e6) {
        return f64::INFINITY;
    }
    tick_loss(&returns[1..], v, alpha)
}

/// Random coefficients around a stationary recursion whose mean is near `q0`
/// (returns scaled to unit standard deviation).
fn random_candidate<R: Rng>(variant: CaviarVariant, q0: f64, rng: &mut R) -> Vec<f64> {
    const E_ABS: f64 = 0.8;
    let jitter: f64 = rng.random_range(0.5..1.5);
    match variant {
        CaviarVariant::Symmetric => {
            let ar = rng.random_range(0.0..0.99);
            let c = rng.random_range(-0.6..0.0);
            vec![(q0 * (1.0 - ar) - c * E_ABS) * jitter, ar, c]
        }
        CaviarVariant::Garch => {
            let ar = rng.random_range(0.0..0.99);
            let c = rng.random_range(0.0..0.6);
            vec![(q0 * q0 * (1.0 - ar) - c).max(0.01) * jitter, ar, c]
        }
        CaviarVariant::Adaptive { p, q } => {
            let ar: Vec<f64> = (0..p).map(|_| rng.random_range(0.0..0.99 / p as f64)).collect();
            let ma: Vec<f64> = (0..q).map(|_| rng.random_range(-0.6 / q as f64..0.0)).collect();
            let sa: f64 = ar.iter().sum();
            let sm: f64 = ma.iter().sum();
            let mut b = vec![(q0 * (1.0 - sa) - sm * E_ABS) * jitter];
            b.extend(ar);
            b.extend(ma);
            b
        }
        CaviarVariant::Asymmetric => {
            let ar = rng.random_range(0.0..0.99);
            let up = rng.random_range(-0.6..0.2);
            let down = rng.random_range(-0.6..0.0);
            vec![(q0 * (1.0 - ar) - (up + down) * E_ABS / 2.0) * jitter, ar, up, down]
        }
    }
}

/// Constant forecast `c` written in the coefficients of `variant`.
fn constant_coefficients(variant: CaviarVariant, c: f64) -> Vec<f64> {
    let mut b = vec![0.0; variant.n_params()];
    b[0] = if variant == CaviarVariant::Garch { c * c } else { c };
    b
}

/// Multi-start tick-loss minimization: screen `candidates` random vectors
/// plus the constant-quantile baseline, refine the best `restarts` of them
/// with repeated simplex searches, keep the overall best.
pub fn caviar_fit(returns: &[f64], variant: CaviarVariant, alpha: f64, opts: &CaviarFitOptions) -> Result<CaviarFit> {
    check_alpha(alpha)?;
    if returns.len() < MIN_FIT_OBS {
        return Err(VarModelError::ShortWindow {
            len: returns.len(),
            min: MIN_FIT_OBS,
        });
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(VarModelError::NonFinite);
    }
    CaviarParams::new(variant, constant_coefficients(variant, -1.0))?;
    let k = variant.n_params();
    if opts.fixed.len() > k {
        return Err(VarModelError::InvalidParams(format!("{} fixed entries for {k} coefficients", opts.fixed.len())));
    }
    let scale = sample_std(returns);
    if !(scale > 0.0) {
        return Err(VarModelError::InvalidParams("series has zero variance".into()));
    }
    // Work on unit-variance returns; only the intercept carries the scale.
    let deg = variant.intercept_degree();
    let scaled: Vec<f64> = returns.iter().map(|r| r / scale).collect();
    let var0 = caviar_var0(returns, alpha)?;
    let var0_s = var0 / scale;

    let mut fixed: Vec<Option<f64>> = opts.fixed.clone();
    fixed.resize(k, None);
    if let Some(f0) = fixed[0].as_mut() {
        *f0 /= scale.powi(deg);
    }
    let free: Vec<usize> = (0..k).filter(|&i| fixed[i].is_none()).collect();
    let expand = |x: &[f64]| -> Vec<f64> {
        let mut b: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
        for (&i, v) in free.iter().zip(x) {
            b[i] = *v;
        }
        b
    };
    let restrict = |b: &[f64]| -> Vec<f64> { free.iter().map(|&i| b[i]).collect() };
    let loss_of = |b: Vec<f64>| path_loss(&CaviarParams { variant, beta: b }, &scaled, var0_s, alpha);

    let baseline_q = quantile(&scaled[1..], alpha).expect("non-empty");
    let baseline_loss_s = tick_loss(&scaled[1..], &vec![baseline_q; scaled.len() - 1], alpha);

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut pool: Vec<(f64, Vec<f64>)> = Vec::with_capacity(opts.candidates + 1);
    let base = restrict(&constant_coefficients(variant, baseline_q));
    pool.push((loss_of(expand(&base)), base));
    for _ in 0..opts.candidates {
        let x = restrict(&random_candidate(variant, baseline_q, &mut rng));
        pool.push((loss_of(expand(&x)), x));
    }
    pool.sort_by(|a, b| a.0.total_cmp(&b.0));
    pool.truncate(opts.restarts.max(1));

    let nm = NelderMeadOptions {
        max_evals: 2000,
        f_tol: 1e-12,
        x_tol: 1e-9,
    };
    let mut best = pool[0].clone();
    if !free.is_empty() {
        for (mut fx, mut x) in pool {
            for _ in 0..POLISH_ROUNDS {
                let steps: Vec<f64> = x.iter().map(|v| 0.1 * v.abs() + 0.02).collect();
                let m = nelder_mead(|z| loss_of(expand(z)), &x, &steps, &nm);
                let improved = fx - m.fx;
                if m.fx < fx {
                    fx = m.fx;
                    x = m.x;
                }
                if !(improved > 1e-12) {
                    break;
                }
            }
            if fx < best.0 {
                best = (fx, x);
            }
        }
    }
    if !best.0.is_finite() {
        return Err(VarModelError::InvalidParams("no candidate produced a finite tick loss".into()));
    }
    let mut beta = expand(&best.1);
    beta[0] *= scale.powi(deg);
    let params = CaviarParams::new(variant, beta)?;
    let loss = path_loss(&params, returns, var0, alpha);
    Ok(CaviarFit {
        params,
        alpha,
        var0,
        loss,
        baseline_loss: baseline_loss_s * scale,
    })
}

/// Rolls the recursion through the whole series (starting from the
/// first-300 quantile) and returns the forecasts for `start..returns.len()`.
pub fn caviar_var(params: &CaviarParams, returns: &[f64], alpha: f64, start: usize) -> Result<Vec<f64>> {
    check_start(returns.len(), start, 1)?;
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(VarModelError::NonFinite);
    }
    let var0 = caviar_var0(returns, alpha)?;
    let path = caviar_path(params, returns, var0);
    let out = path[start..returns.len()].to_vec();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(VarModelError::NonFinite);
    }
    Ok(out)
}
