//! GARCH(p, q), EGARCH(1, 1), RiskMetrics and filtered historical simulation.
//!
//! Estimation is Gaussian quasi-maximum likelihood on the zero-mean return
//! series. The optimizer works on returns rescaled to unit sample variance
//! and on unconstrained coordinates:
//!
//! - GARCH: `omega = exp(u)` and `c_i = exp(v_i) / (1 + sum_j exp(v_j))`, so
//!   every coefficient is positive and their sum stays below one.
//! - EGARCH: `alpha = tanh(u)`; `omega`, `theta`, `lambda` are free. The
//!   coefficient on `g(Z)` is fixed at one because it is not separately
//!   identified from `theta` and `lambda`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{check_alpha, check_start, Result, VarModelError};
use crate::optim::{nelder_mead, NelderMeadOptions};
use crate::stats::{normal_quantile, quantile, sample_variance};

/// Shortest estimation sample accepted by the QMLE fits.
pub const MIN_FIT_OBS: usize = 500;
pub const RISKMETRICS_DECAY: f64 = 0.94;
/// Days whose sample variance seeds the RiskMetrics recursion.
pub const RISKMETRICS_INIT_DAYS: usize = 50;
const MIN_FHS_WINDOW: usize = 100;
const LN_2PI: f64 = 1.837_877_066_409_345_5;
const E_ABS_Z: f64 = 0.797_884_560_802_865_4;

fn check_fit_len(len: usize) -> Result<()> {
    if len < MIN_FIT_OBS {
        Err(VarModelError::ShortWindow { len, min: MIN_FIT_OBS })
    } else {
        Ok(())
    }
}

fn check_finite(returns: &[f64]) -> Result<()> {
    if returns.iter().all(|r| r.is_finite()) {
        Ok(())
    } else {
        Err(VarModelError::NonFinite)
    }
}

/// `sigma2_t = omega + sum_i alpha_i eps^2_{t-i} + sum_j beta_j sigma2_{t-j}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchParams {
    pub omega: f64,
    /// ARCH coefficients, length `q`.
    pub alpha: Vec<f64>,
    /// GARCH coefficients, length `p`.
    pub beta: Vec<f64>,
}

impl GarchParams {
    /// Stationary parameters: `omega > 0`, coefficients non-negative and
    /// summing to less than one.
    pub fn new(omega: f64, alpha: Vec<f64>, beta: Vec<f64>) -> Result<Self> {
        let p = Self { omega, alpha, beta };
        p.validate(false)?;
        Ok(p)
    }

    /// Integrated GARCH(1, 1): `alpha = 1 - beta`.
    pub fn igarch(omega: f64, beta: f64) -> Result<Self> {
        let p = Self {
            omega,
            alpha: vec![1.0 - beta],
            beta: vec![beta],
        };
        p.validate(true)?;
        Ok(p)
    }

    pub fn persistence(&self) -> f64 {
        self.alpha.iter().sum::<f64>() + self.beta.iter().sum::<f64>()
    }

    /// Long-run variance `omega / (1 - persistence)`; infinite when integrated.
    pub fn unconditional_variance(&self) -> f64 {
        let gap = 1.0 - self.persistence();
        if gap > 0.0 {
            self.omega / gap
        } else {
            f64::INFINITY
        }
    }

    fn validate(&self, allow_integrated: bool) -> Result<()> {
        let coefs = self.alpha.iter().chain(&self.beta);
        if !(self.omega > 0.0) || !self.omega.is_finite() {
            return Err(VarModelError::InvalidParams(format!("omega {} must be positive", self.omega)));
        }
        if self.alpha.is_empty() {
            return Err(VarModelError::InvalidParams("at least one ARCH coefficient".into()));
        }
        if coefs.clone().any(|c| !(*c >= 0.0) || !c.is_finite()) {
            return Err(VarModelError::InvalidParams("coefficients must be non-negative".into()));
        }
        let s = self.persistence();
        let ok = if allow_integrated { s <= 1.0 + 1e-12 } else { s < 1.0 };
        if !ok {
            return Err(VarModelError::InvalidParams(format!("persistence {s} too large")));
        }
        Ok(())
    }
}

/// Conditional variances `sigma2_0 ..= sigma2_n` for a series of length `n`;
/// entry `t` only uses `returns[..t]`, so the last entry is the forecast for
/// the day after the series ends. Lags before the sample start take the
/// value `sigma2_0` for both squared returns and variances.
pub fn garch_variance_path(params: &GarchParams, returns: &[f64], sigma2_0: f64) -> Vec<f64> {
    let n = returns.len();
    let mut s2 = Vec::with_capacity(n + 1);
    s2.push(sigma2_0);
    for t in 1..=n {
        let mut v = params.omega;
        for (i, a) in params.alpha.iter().enumerate() {
            let e2 = if t > i { returns[t - 1 - i].powi(2) } else { sigma2_0 };
            v += a * e2;
        }
        for (j, b) in params.beta.iter().enumerate() {
            let prev = if t > j { s2[t - 1 - j] } else { sigma2_0 };
            v += b * prev;
        }
        s2.push(v);
    }
    s2
}

/// Gaussian log-likelihood `-1/2 sum_t (ln 2 pi + ln sigma2_t + r_t^2 / sigma2_t)`.
pub fn garch_log_likelihood(params: &GarchParams, returns: &[f64], sigma2_0: f64) -> f64 {
    let path = garch_variance_path(params, returns, sigma2_0);
    gaussian_loglik(returns, path.iter().map(|&v| v))
}

fn gaussian_loglik(returns: &[f64], variances: impl Iterator<Item = f64>) -> f64 {
    let mut ll = 0.0;
    for (r, v) in returns.iter().zip(variances) {
        if !(v > 0.0) || !v.is_finite() {
            return f64::NEG_INFINITY;
        }
        ll -= 0.5 * (LN_2PI + v.ln() + r * r / v);
    }
    ll
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchFit {
    pub params: GarchParams,
    /// Initial variance of the recursion: the sample variance of the fit sample.
    pub sigma2_0: f64,
    pub log_likelihood: f64,
    pub converged: bool,
}

fn coefs_from_logits(v: &[f64]) -> Vec<f64> {
    // Shift by the largest logit (including the implicit zero) for stability.
    let m = v.iter().copied().fold(0.0_f64, f64::max);
    let denom = (-m).exp() + v.iter().map(|x| (x - m).exp()).sum::<f64>();
    v.iter().map(|x| (x - m).exp() / denom).collect()
}

fn logits_from_coefs(c: &[f64]) -> Vec<f64> {
    let slack = 1.0 - c.iter().sum::<f64>();
    c.iter().map(|x| (x / slack).ln()).collect()
}

/// QMLE of a GARCH(p, q) with `restarts` starting points (the first is
/// deterministic, the rest drawn from `seed`). Non-convergence of the final
/// polish is reported through [`GarchFit::converged`].
pub fn garch_fit(returns: &[f64], p: usize, q: usize, restarts: usize, seed: u64) -> Result<GarchFit> {
    check_fit_len(returns.len())?;
    check_finite(returns)?;
    if q == 0 {
        return Err(VarModelError::InvalidParams("q must be at least 1".into()));
    }
    let var = sample_variance(returns);
    if !(var > 0.0) {
        return Err(VarModelError::InvalidParams("series has zero variance".into()));
    }
    let scaled: Vec<f64> = returns.iter().map(|r| r / var.sqrt()).collect();
    let n = scaled.len() as f64;
    let unpack = |x: &[f64]| -> GarchParams {
        let c = coefs_from_logits(&x[1..]);
        GarchParams {
            omega: x[0].exp(),
            alpha: c[..q].to_vec(),
            beta: c[q..].to_vec(),
        }
    };
    let objective = |x: &[f64]| -> f64 {
        let params = unpack(x);
        -garch_log_likelihood(&params, &scaled, 1.0) / n
    };
    let pack = |persistence: f64, alpha_share: f64, omega: f64| -> Vec<f64> {
        let a = persistence * alpha_share / q as f64;
        let b = if p > 0 { persistence * (1.0 - alpha_share) / p as f64 } else { 0.0 };
        let mut c = vec![a; q];
        c.extend(std::iter::repeat(b).take(p));
        if p == 0 {
            c.iter_mut().for_each(|x| *x = persistence / q as f64);
        }
        let mut x = vec![omega.ln()];
        x.extend(logits_from_coefs(&c));
        x
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![pack(0.95, 0.05 / 0.95, 0.05)];
    for _ in 1..restarts.max(1) {
        let pers: f64 = rng.random_range(0.3..0.99);
        let share: f64 = rng.random_range(0.02..0.5);
        let omega = (1.0 - pers) * rng.random_range(0.5..2.0);
        starts.push(pack(pers, share, omega));
    }
    let opts = NelderMeadOptions {
        max_evals: 4000,
        f_tol: 1e-13,
        x_tol: 1e-9,
    };
    let steps = vec![0.5; 1 + p + q];
    let best = starts
        .iter()
        .map(|x0| nelder_mead(objective, x0, &steps, &opts))
        .min_by(|a, b| a.fx.total_cmp(&b.fx))
        .expect("at least one start");
    let polished = nelder_mead(objective, &best.x, &vec![0.1; 1 + p + q], &opts);
    let chosen = if polished.fx <= best.fx { polished } else { best };
    if !chosen.fx.is_finite() {
        return Err(VarModelError::InvalidParams("likelihood is not finite at any start".into()));
    }
    let scaled_params = unpack(&chosen.x);
    let params = GarchParams {
        omega: scaled_params.omega * var,
        ..scaled_params
    };
    if !chosen.converged {
        log::warn!("GARCH({p},{q}) fit stopped before convergence after {} evaluations", chosen.evals);
    }
    Ok(GarchFit {
        log_likelihood: garch_log_likelihood(&params, returns, var),
        params,
        sigma2_0: var,
        converged: chosen.converged,
    })
}

/// `Phi^{-1}(alpha) sigma_t` for every day in `start..returns.len()`.
pub fn garch_var(params: &GarchParams, returns: &[f64], sigma2_0: f64, start: usize, alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    params.validate(true)?;
    check_start(returns.len(), start, 0)?;
    check_finite(returns)?;
    let z = normal_quantile(alpha).expect("alpha checked");
    let path = garch_variance_path(params, returns, sigma2_0);
    Ok(path[start..returns.len()].iter().map(|v| z * v.sqrt()).collect())
}

/// `log sigma2_t = omega + sum_k beta_k g(Z_{t-k}) + sum_k alpha_k log sigma2_{t-k}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgarchParams {
    pub omega: f64,
    /// Coefficients on the lagged news impact `g(Z)`.
    pub beta: Vec<f64>,
    /// Coefficients on the lagged log variances.
    pub alpha: Vec<f64>,
    pub theta: f64,
    pub lambda: f64,
}

impl EgarchParams {
    pub fn validate(&self) -> Result<()> {
        let all = [self.omega, self.theta, self.lambda];
        if all.iter().chain(&self.alpha).chain(&self.beta).any(|x| !x.is_finite()) {
            return Err(VarModelError::NonFinite);
        }
        let s: f64 = self.alpha.iter().map(|a| a.abs()).sum();
        if s >= 1.0 {
            return Err(VarModelError::InvalidParams(format!("log-variance persistence {s} must be below 1")));
        }
        Ok(())
    }
}

/// News impact `g(z) = theta z + lambda (|z| - E|Z|)` with `E|Z| = sqrt(2/pi)`.
pub fn egarch_g(z: f64, theta: f64, lambda: f64) -> f64 {
    theta * z + lambda * (z.abs() - E_ABS_Z)
}

/// Log variances for days `0 ..= n`; pre-sample lags use `log_sigma2_0` and
/// contribute no news impact.
pub fn egarch_log_variance_path(params: &EgarchParams, returns: &[f64], log_sigma2_0: f64) -> Vec<f64> {
    let n = returns.len();
    let mut path = Vec::with_capacity(n + 1);
    path.push(log_sigma2_0);
    for t in 1..=n {
        let mut v = params.omega;
        for (k, b) in params.beta.iter().enumerate() {
            if t > k {
                let s = t - 1 - k;
                let z = returns[s] / (0.5 * path[s]).exp();
                v += b * egarch_g(z, params.theta, params.lambda);
            }
        }
        for (k, a) in params.alpha.iter().enumerate() {
            let prev = if t > k { path[t - 1 - k] } else { log_sigma2_0 };
            v += a * prev;
        }
        path.push(v);
    }
    path
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EgarchFit {
    pub params: EgarchParams,
    pub log_sigma2_0: f64,
    pub log_likelihood: f64,
    pub converged: bool,
}

fn egarch_loglik(params: &EgarchParams, returns: &[f64], log_sigma2_0: f64) -> f64 {
    let path = egarch_log_variance_path(params, returns, log_sigma2_0);
    if path.iter().any(|v| !v.is_finite() || v.abs() > 700.0) {
        return f64::NEG_INFINITY;
    }
    gaussian_loglik(returns, path.iter().map(|v| v.exp()))
}

/// QMLE of an EGARCH(1, 1), multi-start as in [`garch_fit`].
pub fn egarch_fit(returns: &[f64], restarts: usize, seed: u64) -> Result<EgarchFit> {
    check_fit_len(returns.len())?;
    check_finite(returns)?;
    let var = sample_variance(returns);
    if !(var > 0.0) {
        return Err(VarModelError::InvalidParams("series has zero variance".into()));
    }
    let scaled: Vec<f64> = returns.iter().map(|r| r / var.sqrt()).collect();
    let n = scaled.len() as f64;
    let unpack = |x: &[f64]| EgarchParams {
        omega: x[0],
        beta: vec![1.0],
        alpha: vec![x[1].tanh()],
        theta: x[2],
        lambda: x[3],
    };
    let objective = |x: &[f64]| -egarch_loglik(&unpack(x), &scaled, 0.0) / n;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut starts = vec![vec![0.0, 0.95_f64.atanh(), 0.0, 0.1]];
    for _ in 1..restarts.max(1) {
        let a: f64 = rng.random_range(0.5..0.99);
        starts.push(vec![
            0.0,
            a.atanh(),
            rng.random_range(-0.2..0.2),
            rng.random_range(0.0..0.3),
        ]);
    }
    let opts = NelderMeadOptions {
        max_evals: 4000,
        f_tol: 1e-13,
        x_tol: 1e-9,
    };
    let steps = [0.1, 0.5, 0.05, 0.05];
    let best = starts
        .iter()
        .map(|x0| nelder_mead(objective, x0, &steps, &opts))
        .min_by(|a, b| a.fx.total_cmp(&b.fx))
        .expect("at least one start");
    let polished = nelder_mead(objective, &best.x, &[0.02, 0.1, 0.01, 0.01], &opts);
    let chosen = if polished.fx <= best.fx { polished } else { best };
    if !chosen.fx.is_finite() {
        return Err(VarModelError::InvalidParams("likelihood is not finite at any start".into()));
    }
    let mut params = unpack(&chosen.x);
    // Undo the rescaling: log sigma2 = scaled log sigma2 + ln var.
    let c = var.ln();
    params.omega += c * (1.0 - params.alpha[0]);
    if !chosen.converged {
        log::warn!("EGARCH fit stopped before convergence after {} evaluations", chosen.evals);
    }
    Ok(EgarchFit {
        log_likelihood: egarch_loglik(&params, returns, c),
        params,
        log_sigma2_0: c,
        converged: chosen.converged,
    })
}

pub fn egarch_var(
    params: &EgarchParams,
    returns: &[f64],
    log_sigma2_0: f64,
    start: usize,
    alpha: f64,
) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    params.validate()?;
    check_start(returns.len(), start, 0)?;
    check_finite(returns)?;
    let z = normal_quantile(alpha).expect("alpha checked");
    let path = egarch_log_variance_path(params, returns, log_sigma2_0);
    let out: Vec<f64> = path[start..returns.len()].iter().map(|v| z * (0.5 * v).exp()).collect();
    if out.iter().any(|v| !v.is_finite()) {
        return Err(VarModelError::NonFinite);
    }
    Ok(out)
}

/// `sigma2_t = 0.94 sigma2_{t-1} + 0.06 r^2_{t-1}` for days `0 ..= n`, with
/// `sigma2_0` the sample variance of the first fifty days.
pub fn riskmetrics_variance_path(returns: &[f64]) -> Result<Vec<f64>> {
    if returns.len() < RISKMETRICS_INIT_DAYS {
        return Err(VarModelError::ShortWindow {
            len: returns.len(),
            min: RISKMETRICS_INIT_DAYS,
        });
    }
    check_finite(returns)?;
    let s0 = sample_variance(&returns[..RISKMETRICS_INIT_DAYS]);
    let mut path = Vec::with_capacity(returns.len() + 1);
    path.push(s0);
    for r in returns {
        let prev = *path.last().expect("non-empty");
        path.push(RISKMETRICS_DECAY * prev + (1.0 - RISKMETRICS_DECAY) * r * r);
    }
    Ok(path)
}

/// Forecasts from day `start >= 50`, so the initial variance never uses the
/// forecast day.
pub fn riskmetrics_var(returns: &[f64], start: usize, alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    check_start(returns.len(), start, RISKMETRICS_INIT_DAYS)?;
    let z = normal_quantile(alpha).expect("alpha checked");
    let path = riskmetrics_variance_path(returns)?;
    let out: Vec<f64> = path[start..returns.len()].iter().map(|v| z * v.sqrt()).collect();
    if out.iter().any(|v| *v == 0.0) {
        return Err(VarModelError::NonPositiveSigma(0.0));
    }
    Ok(out)
}

/// Filtered historical simulation: `sigma_t` times the empirical
/// `alpha`-quantile of the standardized residuals `r_s / sigma_s` over the
/// trailing `window` days.
pub fn fhs_var(
    returns: &[f64],
    params: &GarchParams,
    sigma2_0: f64,
    start: usize,
    window: usize,
    alpha: f64,
) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    params.validate(true)?;
    if window < MIN_FHS_WINDOW {
        return Err(VarModelError::ShortWindow {
            len: window,
            min: MIN_FHS_WINDOW,
        });
    }
    check_start(returns.len(), start, window)?;
    check_finite(returns)?;
    let path = garch_variance_path(params, returns, sigma2_0);
    let sigma: Vec<f64> = path.iter().map(|v| v.sqrt()).collect();
    let z: Vec<f64> = returns.iter().zip(&sigma).map(|(r, s)| r / s).collect();
    Ok((start..returns.len())
        .map(|t| sigma[t] * quantile(&z[t - window..t], alpha).expect("non-empty window"))
        .collect())
}
