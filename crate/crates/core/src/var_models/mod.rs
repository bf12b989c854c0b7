//! Value-at-Risk forecasts: Encoded VaR and the eleven benchmark models.
//!
//! VaR is stored as the signed `alpha`-quantile of the next-day return, so it
//! is negative in practice and a violation is a day with `r_t < VaR_t`.
//!
//! Every rolling forecaster takes the full return history and a first
//! forecast day `start`; the forecast for day `t` only looks at
//! `returns[..t]`.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::market_data::MarketDataError;
use crate::vae::VaeError;

mod caviar;
mod encoded;
mod garch;
mod simple;

pub use caviar::{
    caviar_fit, caviar_path, caviar_var, caviar_var0, tick_loss, CaviarFit, CaviarFitOptions, CaviarParams,
    CaviarVariant, CAVIAR_INIT_OBS,
};
pub use encoded::{encoded_var, encoded_var_multi};
pub use garch::{
    egarch_fit, egarch_g, egarch_log_variance_path, egarch_var, fhs_var, garch_fit, garch_log_likelihood,
    garch_variance_path, garch_var, riskmetrics_var, riskmetrics_variance_path, EgarchFit, EgarchParams, GarchFit,
    GarchParams, RISKMETRICS_DECAY, RISKMETRICS_INIT_DAYS,
};
pub use simple::{
    historical_series, historical_var, mc_gbm_quantile, mc_gbm_series, mc_gbm_var, variance_covariance_series,
    variance_covariance_var, MIN_WINDOW,
};

#[derive(Debug, Error)]
pub enum VarModelError {
    #[error("alpha {0} is outside the admissible range")]
    InvalidAlpha(f64),
    #[error("window of length {len} is too short (need at least {min})")]
    ShortWindow { len: usize, min: usize },
    #[error("volatility {0} must be positive")]
    NonPositiveSigma(f64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("at least one simulated path or sample is required")]
    ZeroSamples,
    #[error("non-finite value encountered")]
    NonFinite,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("unknown model tag `{0}`")]
    UnknownModel(String),
    #[error("model `{0}` is not a benchmark; it needs a trained auto-encoder")]
    NotABenchmark(String),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    MarketData(#[from] MarketDataError),
    #[error(transparent)]
    Vae(#[from] VaeError),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, VarModelError>;

/// `0 < alpha < 1`.
pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(VarModelError::InvalidAlpha(alpha))
    }
}

pub(crate) fn check_start(len: usize, start: usize, min: usize) -> Result<()> {
    if start < min {
        return Err(VarModelError::ShortWindow { len: start, min });
    }
    if start > len {
        return Err(VarModelError::ShapeMismatch(format!("start {start} beyond series of length {len}")));
    }
    Ok(())
}

/// Model tags, in the column order used by reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Historical,
    McGbm,
    VarianceCovariance,
    Garch,
    Egarch,
    Riskmetrics,
    Fhs,
    CaviarSymmetric,
    CaviarGarch,
    CaviarAdaptive,
    CaviarAsymmetric,
    Encoded,
}

impl ModelKind {
    pub const ALL: [ModelKind; 12] = [
        ModelKind::Historical,
        ModelKind::McGbm,
        ModelKind::VarianceCovariance,
        ModelKind::Garch,
        ModelKind::Egarch,
        ModelKind::Riskmetrics,
        ModelKind::Fhs,
        ModelKind::CaviarSymmetric,
        ModelKind::CaviarGarch,
        ModelKind::CaviarAdaptive,
        ModelKind::CaviarAsymmetric,
        ModelKind::Encoded,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Historical => "historical",
            ModelKind::McGbm => "mc_gbm",
            ModelKind::VarianceCovariance => "variance_covariance",
            ModelKind::Garch => "garch",
            ModelKind::Egarch => "egarch",
            ModelKind::Riskmetrics => "riskmetrics",
            ModelKind::Fhs => "fhs",
            ModelKind::CaviarSymmetric => "caviar_symmetric",
            ModelKind::CaviarGarch => "caviar_garch",
            ModelKind::CaviarAdaptive => "caviar_adaptive",
            ModelKind::CaviarAsymmetric => "caviar_asymmetric",
            ModelKind::Encoded => "encoded",
        }
    }

    pub fn is_benchmark(self) -> bool {
        self != ModelKind::Encoded
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ModelKind {
    type Err = VarModelError;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.tag() == s.trim())
            .ok_or_else(|| VarModelError::UnknownModel(s.to_string()))
    }
}

/// Per-day VaR forecasts aligned with the realized returns they forecast.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VarSeries {
    pub model: String,
    pub alpha: f64,
    pub dates: Vec<NaiveDate>,
    pub var_values: Vec<f64>,
    pub realized: Vec<f64>,
}

const CSV_HEADER: [&str; 6] = ["date", "var", "realized_return", "violation_flag", "model", "alpha"];

impl VarSeries {
    pub fn new(
        model: impl Into<String>,
        alpha: f64,
        dates: Vec<NaiveDate>,
        var_values: Vec<f64>,
        realized: Vec<f64>,
    ) -> Result<Self> {
        check_alpha(alpha)?;
        if dates.len() != var_values.len() || dates.len() != realized.len() {
            return Err(VarModelError::ShapeMismatch(format!(
                "{} dates, {} forecasts, {} realized returns",
                dates.len(),
                var_values.len(),
                realized.len()
            )));
        }
        if var_values.iter().chain(&realized).any(|v| !v.is_finite()) {
            return Err(VarModelError::NonFinite);
        }
        Ok(Self {
            model: model.into(),
            alpha,
            dates,
            var_values,
            realized,
        })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn violation_flags(&self) -> impl Iterator<Item = bool> + '_ {
        self.realized.iter().zip(&self.var_values).map(|(r, v)| r < v)
    }

    pub fn violations(&self) -> usize {
        self.violation_flags().filter(|&f| f).count()
    }

    /// `date,var,realized_return,violation_flag,model,alpha`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_HEADER)?;
        let alpha = self.alpha.to_string();
        for ((d, v), (r, flag)) in self
            .dates
            .iter()
            .zip(&self.var_values)
            .zip(self.realized.iter().zip(self.violation_flags()))
        {
            out.write_record([
                d.format("%Y-%m-%d").to_string(),
                v.to_string(),
                r.to_string(),
                u8::from(flag).to_string(),
                self.model.clone(),
                alpha.clone(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(r);
        let header = reader.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != CSV_HEADER {
            return Err(VarModelError::Parse {
                line: 1,
                msg: format!("unexpected header {:?}", header),
            });
        }
        let (mut dates, mut vars, mut realized) = (Vec::new(), Vec::new(), Vec::new());
        let (mut model, mut alpha) = (None::<String>, None::<f64>);
        for (i, rec) in reader.records().enumerate() {
            let rec = rec?;
            let line = i + 2;
            let bad = |msg: String| VarModelError::Parse { line, msg };
            let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d").map_err(|e| bad(e.to_string()))?;
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("`{s}`: {e}")));
            dates.push(date);
            vars.push(num(&rec[1])?);
            realized.push(num(&rec[2])?);
            let a = num(&rec[5])?;
            match (&model, alpha) {
                (None, _) => {
                    model = Some(rec[4].to_string());
                    alpha = Some(a);
                }
                (Some(m), Some(prev)) if m != &rec[4] || prev != a => {
                    return Err(bad("model or alpha changes within one file".into()));
                }
                _ => {}
            }
        }
        let (Some(model), Some(alpha)) = (model, alpha) else {
            return Err(VarModelError::Parse {
                line: 2,
                msg: "no forecast rows".into(),
            });
        };
        Self::new(model, alpha, dates, vars, realized)
    }
}

/// Settings shared by the benchmark models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    /// Rolling window of the historical, Monte-Carlo and variance-covariance models.
    pub window: usize,
    /// Residual window of filtered historical simulation.
    pub fhs_window: usize,
    pub mc_paths: usize,
    pub garch_restarts: usize,
    pub caviar_restarts: usize,
    pub caviar_candidates: usize,
    pub seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            window: 250,
            fhs_window: 250,
            mc_paths: 10_000,
            garch_restarts: 5,
            caviar_restarts: 10,
            caviar_candidates: 1000,
            seed: 11,
        }
    }
}

/// Forecasts of one benchmark model for every day in `start..returns.len()`
/// and every level in `alphas` (outer index). Fitted models are estimated
/// once on `returns[..fit_end]` and rolled forward without refitting.
pub fn benchmark_forecasts(
    kind: ModelKind,
    returns: &[f64],
    fit_end: usize,
    start: usize,
    alphas: &[f64],
    cfg: &BenchmarkConfig,
) -> Result<Vec<Vec<f64>>> {
    for &a in alphas {
        check_alpha(a)?;
    }
    if fit_end > returns.len() || start > returns.len() || fit_end > start {
        return Err(VarModelError::ShapeMismatch(format!(
            "fit end {fit_end} and start {start} for a series of length {}",
            returns.len()
        )));
    }
    let fit = &returns[..fit_end];
    let seed = crate::stats::derive_seed(cfg.seed, kind as u64);
    let caviar = |variant: CaviarVariant| -> Result<Vec<Vec<f64>>> {
        alphas
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let opts = CaviarFitOptions {
                    restarts: cfg.caviar_restarts,
                    candidates: cfg.caviar_candidates,
                    seed: crate::stats::derive_seed(seed, i as u64),
                    fixed: Vec::new(),
                };
                let fitted = caviar_fit(fit, variant, a, &opts)?;
                caviar_var(&fitted.params, returns, a, start)
            })
            .collect()
    };
    match kind {
        ModelKind::Historical => alphas
            .iter()
            .map(|&a| historical_series(returns, start, cfg.window, a))
            .collect(),
        ModelKind::McGbm => alphas
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                mc_gbm_series(returns, start, cfg.window, a, cfg.mc_paths, crate::stats::derive_seed(seed, i as u64))
            })
            .collect(),
        ModelKind::VarianceCovariance => alphas
            .iter()
            .map(|&a| variance_covariance_series(returns, start, cfg.window, a))
            .collect(),
        ModelKind::Garch => {
            let fitted = garch_fit(fit, 1, 1, cfg.garch_restarts, seed)?;
            alphas
                .iter()
                .map(|&a| garch_var(&fitted.params, returns, fitted.sigma2_0, start, a))
                .collect()
        }
        ModelKind::Egarch => {
            let fitted = egarch_fit(fit, cfg.garch_restarts, seed)?;
            alphas
                .iter()
                .map(|&a| egarch_var(&fitted.params, returns, fitted.log_sigma2_0, start, a))
                .collect()
        }
        ModelKind::Riskmetrics => alphas.iter().map(|&a| riskmetrics_var(returns, start, a)).collect(),
        ModelKind::Fhs => {
            let fitted = garch_fit(fit, 1, 1, cfg.garch_restarts, seed)?;
            alphas
                .iter()
                .map(|&a| fhs_var(returns, &fitted.params, fitted.sigma2_0, start, cfg.fhs_window, a))
                .collect()
        }
        ModelKind::CaviarSymmetric => caviar(CaviarVariant::Symmetric),
        ModelKind::CaviarGarch => caviar(CaviarVariant::Garch),
        ModelKind::CaviarAdaptive => caviar(CaviarVariant::Adaptive { p: 1, q: 1 }),
        ModelKind::CaviarAsymmetric => caviar(CaviarVariant::Asymmetric),
        ModelKind::Encoded => Err(VarModelError::NotABenchmark(kind.tag().into())),
    }
}
