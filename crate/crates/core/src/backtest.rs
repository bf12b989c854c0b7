//! Backtest losses for aligned (realized return, VaR) series and the Sener
//! penalization measure used to rank models.
//!
//! A violation is `r_t < VaR_t` (strict). Losses are reported as means over
//! the series so that portfolios with different test lengths compare; the
//! raw sums are kept alongside in [`LossSums`].

use std::io::Write;

use chrono::NaiveDate;
use serde::Serialize;
use thiserror::Error;

use crate::stats::quantile;
use crate::var_models::VarSeries;

/// Default Sarma opportunity cost per covered day.
pub const DEFAULT_SARMA_BETA: f64 = 0.0003;

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty series")]
    Empty,
    #[error("non-finite value encountered")]
    NonFinite,
    #[error("alpha {0} must lie strictly between 0 and 1")]
    InvalidAlpha(f64),
    #[error("opportunity cost {0} must be non-negative")]
    NegativeBeta(f64),
    #[error("penalization measures sum to zero")]
    ZeroDenominator,
    #[error("series for `{model}` is misaligned with `{reference}`")]
    Misaligned { model: String, reference: String },
    #[error("all series in one report must share alpha ({expected} vs {found})")]
    MixedAlpha { expected: f64, found: f64 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, BacktestError>;

/// Realized returns and VaR forecasts for the same days.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSeries {
    dates: Vec<NaiveDate>,
    returns: Vec<f64>,
    var_values: Vec<f64>,
    alpha: f64,
}

impl AlignedSeries {
    pub fn new(dates: Vec<NaiveDate>, returns: Vec<f64>, var_values: Vec<f64>, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(BacktestError::InvalidAlpha(alpha));
        }
        if returns.len() != var_values.len() || dates.len() != returns.len() {
            return Err(BacktestError::ShapeMismatch(format!(
                "{} dates, {} returns, {} forecasts",
                dates.len(),
                returns.len(),
                var_values.len()
            )));
        }
        if returns.is_empty() {
            return Err(BacktestError::Empty);
        }
        if returns.iter().chain(&var_values).any(|x| !x.is_finite()) {
            return Err(BacktestError::NonFinite);
        }
        Ok(Self {
            dates,
            returns,
            var_values,
            alpha,
        })
    }

    /// Series without dates (placeholders), for scoring raw vectors.
    pub fn from_values(returns: Vec<f64>, var_values: Vec<f64>, alpha: f64) -> Result<Self> {
        let dates = vec![NaiveDate::MIN; returns.len()];
        Self::new(dates, returns, var_values, alpha)
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn returns(&self) -> &[f64] {
        &self.returns
    }

    pub fn var_values(&self) -> &[f64] {
        &self.var_values
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }

    fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.returns.iter().copied().zip(self.var_values.iter().copied())
    }
}

impl TryFrom<&VarSeries> for AlignedSeries {
    type Error = BacktestError;

    fn try_from(s: &VarSeries) -> Result<Self> {
        Self::new(s.dates.clone(), s.realized.clone(), s.var_values.clone(), s.alpha)
    }
}

fn mean_and_sum(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    (sum / n as f64, sum)
}

fn lopez_terms(s: &AlignedSeries) -> impl Iterator<Item = f64> + '_ {
    s.pairs().map(|(r, v)| if r < v { 1.0 + (v - r).powi(2) } else { 0.0 })
}

fn linear_terms(s: &AlignedSeries) -> impl Iterator<Item = f64> + '_ {
    s.pairs().map(|(r, v)| (r - v).abs())
}

fn quadratic_terms(s: &AlignedSeries) -> impl Iterator<Item = f64> + '_ {
    s.pairs().map(|(r, v)| (r - v).powi(2))
}

fn sarma_terms(s: &AlignedSeries, beta: f64) -> impl Iterator<Item = f64> + '_ {
    s.pairs().map(move |(r, v)| if r < v { (v - r).powi(2) } else { -beta * v })
}

fn quantile_terms(s: &AlignedSeries) -> impl Iterator<Item = f64> + '_ {
    let p = angelidis_percentile(s);
    s.pairs().map(move |(r, v)| if r < v { (r - v).powi(2) } else { (p - v).powi(2) })
}

/// Regulatory loss: mean of `1 + (VaR - r)^2` on violation days, 0 otherwise.
pub fn lopez_rql(s: &AlignedSeries) -> f64 {
    mean_and_sum(lopez_terms(s)).0
}

/// Mean of `|r - VaR|` over all days.
pub fn linear_loss(s: &AlignedSeries) -> f64 {
    mean_and_sum(linear_terms(s)).0
}

/// Mean of `(r - VaR)^2` over all days.
pub fn quadratic_loss(s: &AlignedSeries) -> f64 {
    mean_and_sum(quadratic_terms(s)).0
}

/// Mean of `(VaR - r)^2` on violations and `-beta VaR` on covered days.
pub fn sarma_loss(s: &AlignedSeries, beta: f64) -> Result<f64> {
    if !(beta >= 0.0) || !beta.is_finite() {
        return Err(BacktestError::NegativeBeta(beta));
    }
    Ok(mean_and_sum(sarma_terms(s, beta)).0)
}

/// Percentile of the realized test returns at level `alpha`, the proxy for
/// the true VaR in the quantile loss.
pub fn angelidis_percentile(s: &AlignedSeries) -> f64 {
    quantile(&s.returns, s.alpha).expect("non-empty series")
}

/// Mean of `(r - VaR)^2` on violations and `(P - VaR)^2` on covered days,
/// with `P` from [`angelidis_percentile`].
pub fn angelidis_quantile_loss(s: &AlignedSeries) -> f64 {
    mean_and_sum(quantile_terms(s)).0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CaporinLosses {
    /// Mean of `|1 - |r / VaR||` over days with `VaR != 0`.
    pub cl1: f64,
    /// Mean of `(|r| - |VaR|)^2 / |VaR|` over days with `VaR != 0`.
    pub cl2: f64,
    /// Mean of `|r - VaR|` over all days.
    pub cl3: f64,
    pub cl1_sum: f64,
    pub cl2_sum: f64,
    pub cl3_sum: f64,
    /// Days skipped by `cl1` and `cl2` because `VaR = 0`.
    pub skipped: usize,
}

pub fn caporin_losses(s: &AlignedSeries) -> CaporinLosses {
    let (mut s1, mut s2, mut used) = (0.0, 0.0, 0usize);
    for (r, v) in s.pairs() {
        if v == 0.0 {
            continue;
        }
        s1 += (1.0 - (r / v).abs()).abs();
        s2 += (r.abs() - v.abs()).powi(2) / v.abs();
        used += 1;
    }
    let (cl3, cl3_sum) = mean_and_sum(linear_terms(s));
    let skipped = s.len() - used;
    if skipped > 0 {
        log::warn!("caporin cl1/cl2 skipped {skipped} day(s) with zero VaR");
    }
    let denom = if used == 0 { f64::NAN } else { used as f64 };
    CaporinLosses {
        cl1: s1 / denom,
        cl2: s2 / denom,
        cl3,
        cl1_sum: s1,
        cl2_sum: s2,
        cl3_sum,
        skipped,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SenerPm {
    /// Interaction of violation clusters.
    pub phi: f64,
    /// Safe-space penalty: sum of `r - VaR` over covered days with `r < 0`.
    pub psi: f64,
    /// `((1 - theta) phi + theta psi) / T` with `theta = 1 - alpha`.
    pub pm: f64,
    pub clusters: usize,
}

/// A maximal run of consecutive violations.
struct Cluster {
    first: usize,
    last: usize,
    /// Product of `1 + eps` over the run, `eps = VaR - r > 0`.
    growth: f64,
}

/// Sener penalization measure. Clusters interact pairwise with weight
/// `1 / k`, where `k` is the number of days from the last violation of the
/// earlier cluster to the first violation of the later one.
pub fn sener_pm(s: &AlignedSeries) -> SenerPm {
    let mut clusters: Vec<Cluster> = Vec::new();
    let mut psi = 0.0;
    let mut in_run = false;
    for (t, (r, v)) in s.pairs().enumerate() {
        if r < v {
            let eps = v - r;
            debug_assert!(eps > 0.0);
            match clusters.last_mut() {
                Some(c) if in_run => {
                    c.last = t;
                    c.growth *= 1.0 + eps;
                }
                _ => clusters.push(Cluster {
                    first: t,
                    last: t,
                    growth: 1.0 + eps,
                }),
            }
            in_run = true;
        } else {
            in_run = false;
            if r > v && r < 0.0 {
                psi += r - v;
            }
        }
    }
    let mut phi = 0.0;
    for (i, a) in clusters.iter().enumerate() {
        for b in &clusters[i + 1..] {
            let k = (b.first - a.last) as f64;
            phi += (a.growth * b.growth - 1.0) / k;
        }
    }
    let theta = 1.0 - s.alpha;
    SenerPm {
        phi,
        psi,
        pm: ((1.0 - theta) * phi + theta * psi) / s.len() as f64,
        clusters: clusters.len(),
    }
}

/// `Ratio_j = PM_j / sum_i PM_i`; the lowest ratio ranks first.
pub fn pm_ratio(pms: &[f64]) -> Result<Vec<f64>> {
    if pms.is_empty() {
        return Err(BacktestError::Empty);
    }
    if pms.iter().any(|p| !p.is_finite()) {
        return Err(BacktestError::NonFinite);
    }
    let total: f64 = pms.iter().sum();
    if total == 0.0 {
        return Err(BacktestError::ZeroDenominator);
    }
    Ok(pms.iter().map(|p| p / total).collect())
}

/// Number and share of days with `r < VaR`.
pub fn violation_stats(s: &AlignedSeries) -> (usize, f64) {
    let n = s.pairs().filter(|(r, v)| r < v).count();
    (n, n as f64 / s.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossSums {
    pub lopez: f64,
    pub linear: f64,
    pub quadratic: f64,
    pub sarma: f64,
    pub quantile: f64,
    pub caporin_cl1: f64,
    pub caporin_cl2: f64,
    pub caporin_cl3: f64,
}

/// All losses of one model at one level; loss fields are means.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelScores {
    pub model: String,
    pub n: usize,
    pub violations: usize,
    pub violation_rate: f64,
    pub lopez: f64,
    pub linear: f64,
    pub quadratic: f64,
    pub sarma: f64,
    pub quantile: f64,
    pub caporin_cl1: f64,
    pub caporin_cl2: f64,
    pub caporin_cl3: f64,
    pub caporin_skipped: usize,
    pub sener_phi: f64,
    pub sener_psi: f64,
    pub sener_pm: f64,
    pub pm_ratio: f64,
    /// 1 = lowest PM ratio.
    pub pm_rank: usize,
    /// 1 = lowest Caporin cl2.
    pub caporin_rank: usize,
    pub sums: LossSums,
}

/// Scores for every model at one `alpha`, in input order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BacktestReport {
    pub alpha: f64,
    pub sarma_beta: f64,
    pub models: Vec<ModelScores>,
}

const REPORT_COLUMNS: [&str; 20] = [
    "model",
    "n",
    "violations",
    "violation_rate",
    "lopez",
    "linear",
    "quadratic",
    "sarma",
    "quantile",
    "caporin_cl1",
    "caporin_cl2",
    "caporin_cl3",
    "caporin_skipped",
    "sener_phi",
    "sener_psi",
    "sener_pm",
    "pm_ratio",
    "pm_rank",
    "caporin_rank",
    "alpha",
];

fn ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut out = vec![0; values.len()];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = rank + 1;
    }
    out
}

impl BacktestReport {
    /// Scores named series that share `alpha` and dates.
    pub fn score(series: &[(String, AlignedSeries)], sarma_beta: f64) -> Result<Self> {
        let Some((ref_name, reference)) = series.first() else {
            return Err(BacktestError::Empty);
        };
        for (name, s) in series {
            if s.alpha != reference.alpha {
                return Err(BacktestError::MixedAlpha {
                    expected: reference.alpha,
                    found: s.alpha,
                });
            }
            if s.dates != reference.dates || s.returns != reference.returns {
                return Err(BacktestError::Misaligned {
                    model: name.clone(),
                    reference: ref_name.clone(),
                });
            }
        }
        let mut models = Vec::with_capacity(series.len());
        for (name, s) in series {
            let (violations, violation_rate) = violation_stats(s);
            let (lopez, lopez_sum) = mean_and_sum(lopez_terms(s));
            let (linear, linear_sum) = mean_and_sum(linear_terms(s));
            let (quadratic, quadratic_sum) = mean_and_sum(quadratic_terms(s));
            sarma_loss(s, sarma_beta)?;
            let (sarma, sarma_sum) = mean_and_sum(sarma_terms(s, sarma_beta));
            let (quantile, quantile_sum) = mean_and_sum(quantile_terms(s));
            let cap = caporin_losses(s);
            let sener = sener_pm(s);
            models.push(ModelScores {
                model: name.clone(),
                n: s.len(),
                violations,
                violation_rate,
                lopez,
                linear,
                quadratic,
                sarma,
                quantile,
                caporin_cl1: cap.cl1,
                caporin_cl2: cap.cl2,
                caporin_cl3: cap.cl3,
                caporin_skipped: cap.skipped,
                sener_phi: sener.phi,
                sener_psi: sener.psi,
                sener_pm: sener.pm,
                pm_ratio: f64::NAN,
                pm_rank: 0,
                caporin_rank: 0,
                sums: LossSums {
                    lopez: lopez_sum,
                    linear: linear_sum,
                    quadratic: quadratic_sum,
                    sarma: sarma_sum,
                    quantile: quantile_sum,
                    caporin_cl1: cap.cl1_sum,
                    caporin_cl2: cap.cl2_sum,
                    caporin_cl3: cap.cl3_sum,
                },
            });
        }
        let pms: Vec<f64> = models.iter().map(|m| m.sener_pm).collect();
        let ratios = pm_ratio(&pms)?;
        let pm_ranks = ranks(&ratios);
        let cl2: Vec<f64> = models.iter().map(|m| m.caporin_cl2).collect();
        let cl2_ranks = ranks(&cl2);
        for (i, m) in models.iter_mut().enumerate() {
            m.pm_ratio = ratios[i];
            m.pm_rank = pm_ranks[i];
            m.caporin_rank = cl2_ranks[i];
        }
        Ok(Self {
            alpha: reference.alpha,
            sarma_beta,
            models,
        })
    }

    /// One row per model, one column per loss (means).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(REPORT_COLUMNS)?;
        for m in &self.models {
            let f = |x: f64| x.to_string();
            out.write_record([
                m.model.clone(),
                m.n.to_string(),
                m.violations.to_string(),
                f(m.violation_rate),
                f(m.lopez),
                f(m.linear),
                f(m.quadratic),
                f(m.sarma),
                f(m.quantile),
                f(m.caporin_cl1),
                f(m.caporin_cl2),
                f(m.caporin_cl3),
                m.caporin_skipped.to_string(),
                f(m.sener_phi),
                f(m.sener_psi),
                f(m.sener_pm),
                f(m.pm_ratio),
                m.pm_rank.to_string(),
                m.caporin_rank.to_string(),
                f(self.alpha),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;

    fn one(r: f64, v: f64, alpha: f64) -> AlignedSeries {
        AlignedSeries::from_values(vec![r], vec![v], alpha).unwrap()
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-15
    }

    #[test]
    fn lopez_examples() {
        let s = AlignedSeries::from_values(vec![0.01, -0.01], vec![-0.02, -0.02], 0.05).unwrap();
        assert_eq!(lopez_rql(&s), 0.0);
        assert!(close(lopez_rql(&one(-0.05, -0.03, 0.05)), 1.0 + 0.02 * 0.02));
        assert!(close(lopez_rql(&one(-0.05, -0.03, 0.05)), 1.0004));
        assert_eq!(lopez_rql(&one(-0.03, -0.03, 0.05)), 0.0);
    }

    #[test]
    fn linear_and_quadratic_examples() {
        let s = AlignedSeries::from_values(vec![-0.02, 0.01], vec![-0.02, 0.01], 0.05).unwrap();
        assert_eq!((linear_loss(&s), quadratic_loss(&s)), (0.0, 0.0));
        let d = one(0.01, -0.03, 0.05);
        assert!(close(linear_loss(&d), 0.04));
        assert!(close(quadratic_loss(&d), 0.0016));
        assert!(close(quadratic_loss(&d), linear_loss(&d).powi(2)));
    }

    #[test]
    fn sarma_examples() {
        assert!(close(sarma_loss(&one(-0.05, -0.03, 0.05), 0.01).unwrap(), 0.0004));
        assert!(close(sarma_loss(&one(0.01, -0.03, 0.05), 0.01).unwrap(), 0.0003));
        let covered = AlignedSeries::from_values(vec![0.0, 0.01], vec![-0.03, -0.01], 0.05).unwrap();
        assert_eq!(sarma_loss(&covered, 0.0).unwrap(), 0.0);
        assert!(matches!(sarma_loss(&covered, -1.0), Err(BacktestError::NegativeBeta(_))));
    }

    #[test]
    fn angelidis_examples() {
        let r = vec![-0.05, -0.02, 0.01, 0.03];
        let p = quantile(&r, 0.25).unwrap();
        // h = 0.75 between the two smallest returns.
        assert!(close(p, -0.05 + 0.75 * 0.03));
        let s = AlignedSeries::from_values(r.clone(), vec![p; 4], 0.25).unwrap();
        assert!(close(angelidis_percentile(&s), -0.0275));
        // p sits above the smallest return, so day 0 is a violation.
        let no_viol = AlignedSeries::from_values(vec![-0.02, 0.01, 0.03, 0.0], vec![-0.02; 4], 0.01).unwrap();
        assert!(close(angelidis_percentile(&no_viol), -0.02 + 0.03 * 0.02));
        let flat_var = AlignedSeries::from_values(vec![-0.02; 5], vec![-0.02; 5], 0.05).unwrap();
        assert_eq!(angelidis_quantile_loss(&flat_var), 0.0);

        // Single covered day with VaR -0.04 and percentile -0.02.
        let covered_term = (-0.02_f64 - -0.04).powi(2);
        assert!(close(covered_term, 0.0004));
        let s = AlignedSeries::from_values(vec![-0.02, -0.02, 0.05], vec![-0.04, -0.02, -0.02], 0.01).unwrap();
        assert!(close(angelidis_percentile(&s), -0.02));
        assert!(close(angelidis_quantile_loss(&s), (0.0004 + 0.0 + 0.0) / 3.0));
    }

    #[test]
    fn caporin_examples() {
        let eq = caporin_losses(&one(0.02, -0.02, 0.05));
        assert_eq!((eq.cl1, eq.cl2), (0.0, 0.0));
        let c = caporin_losses(&one(-0.04, -0.02, 0.05));
        assert!(close(c.cl2, 0.02 * 0.02 / 0.02));
        assert!(close(c.cl2, 0.02));
        assert!(close(c.cl1, 1.0));
        let s = AlignedSeries::from_values(vec![0.01, -0.03, 0.02], vec![-0.02, 0.0, -0.01], 0.05).unwrap();
        let c = caporin_losses(&s);
        assert_eq!(c.skipped, 1);
        assert_eq!(c.cl3, linear_loss(&s));
        assert!(close(c.cl1, ((1.0 - 0.5_f64).abs() + (1.0 - 2.0_f64).abs()) / 2.0));
    }

    /// Clusters found by checking each day's neighbours directly, products
    /// by walking forward from each cluster start.
    fn sener_reference(r: &[f64], v: &[f64], alpha: f64) -> (f64, f64, f64) {
        let n = r.len();
        let viol: Vec<bool> = (0..n).map(|t| r[t] < v[t]).collect();
        let mut clusters: Vec<(usize, usize, f64)> = Vec::new();
        for t in 0..n {
            let starts = viol[t] && (t == 0 || !viol[t - 1]);
            if !starts {
                continue;
            }
            let mut end = t;
            let mut prod = 1.0;
            while end < n && viol[end] {
                prod *= 1.0 + (v[end] - r[end]);
                end += 1;
            }
            clusters.push((t, end - 1, prod));
        }
        let mut phi = 0.0;
        for i in 0..clusters.len() {
            for m in 1..clusters.len() - i {
                let (a, b) = (clusters[i], clusters[i + m]);
                phi += (a.2 * b.2 - 1.0) / (b.0 - a.1) as f64;
            }
        }
        let mut psi = 0.0;
        for t in 0..n {
            if r[t] > v[t] && r[t] < 0.0 {
                psi += r[t] - v[t];
            }
        }
        let theta = 1.0 - alpha;
        (phi, psi, ((1.0 - theta) * phi + theta * psi) / n as f64)
    }

    fn random_sequence(rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<f64>) {
        let n = rng.random_range(1..=50);
        let r: Vec<f64> = (0..n)
            .map(|_| 0.02 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, rng))
            .collect();
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-0.04..0.0)).collect();
        (r, v)
    }

    #[test]
    fn sener_examples() {
        let s = AlignedSeries::from_values(vec![0.01, 0.0, 0.02], vec![-0.02; 3], 0.05).unwrap();
        let pm = sener_pm(&s);
        assert_eq!((pm.phi, pm.psi, pm.pm), (0.0, 0.0, 0.0));

        let s = AlignedSeries::from_values(vec![0.01, -0.05, -0.04, 0.02], vec![-0.02; 4], 0.05).unwrap();
        assert_eq!(sener_pm(&s).phi, 0.0);
        assert_eq!(sener_pm(&s).clusters, 1);

        // Two single-violation clusters with eps = 0.01 five days apart, T = 100.
        let mut r = vec![0.01; 100];
        let v = vec![-0.02; 100];
        r[10] = -0.03;
        r[15] = -0.03;
        r[40] = -0.01;
        r[41] = -0.015;
        let s = AlignedSeries::from_values(r, v, 0.05).unwrap();
        let pm = sener_pm(&s);
        let phi = (1.01_f64 * 1.01 - 1.0) / 5.0;
        assert!((phi - 0.004020).abs() < 1e-6);
        assert!((pm.phi - phi).abs() < 1e-15);
        let psi = 0.01 + 0.005;
        assert!((pm.psi - psi).abs() < 1e-15);
        assert!((pm.pm - (0.05 * phi + 0.95 * psi) / 100.0).abs() < 1e-15);
    }

    #[test]
    fn sener_matches_reference_on_random_sequences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..1000 {
            let (r, v) = random_sequence(&mut rng);
            let alpha = if rng.random_bool(0.5) { 0.05 } else { 0.01 };
            let (phi, psi, pm) = sener_reference(&r, &v, alpha);
            let got = sener_pm(&AlignedSeries::from_values(r, v, alpha).unwrap());
            assert!((got.phi - phi).abs() < 1e-12);
            assert!((got.psi - psi).abs() < 1e-12);
            assert!((got.pm - pm).abs() < 1e-12);
        }
    }

    #[test]
    fn sener_is_order_sensitive_while_losses_are_not() {
        let r = vec![-0.05, -0.05, 0.01, 0.02, 0.01, -0.05];
        let v = vec![-0.02; 6];
        let s = AlignedSeries::from_values(r.clone(), v.clone(), 0.05).unwrap();
        let perm = [2usize, 0, 3, 1, 5, 4];
        let r2: Vec<f64> = perm.iter().map(|&i| r[i]).collect();
        let v2: Vec<f64> = perm.iter().map(|&i| v[i]).collect();
        let p = AlignedSeries::from_values(r2, v2, 0.05).unwrap();
        assert_ne!(sener_pm(&s).phi, sener_pm(&p).phi);
        for f in [lopez_rql, linear_loss, quadratic_loss, angelidis_quantile_loss] {
            assert!((f(&s) - f(&p)).abs() < 1e-15);
        }
        assert!((sarma_loss(&s, 0.01).unwrap() - sarma_loss(&p, 0.01).unwrap()).abs() < 1e-15);
        assert!((caporin_losses(&s).cl2 - caporin_losses(&p).cl2).abs() < 1e-15);
    }

    #[test]
    fn pm_ratio_examples() {
        assert_eq!(pm_ratio(&[1.0, 3.0]).unwrap(), vec![0.25, 0.75]);
        assert_eq!(pm_ratio(&[2.0; 4]).unwrap(), vec![0.25; 4]);
        assert_eq!(pm_ratio(&[0.7]).unwrap(), vec![1.0]);
        assert!(matches!(pm_ratio(&[0.0, 0.0]), Err(BacktestError::ZeroDenominator)));
        assert!(pm_ratio(&[]).is_err());
    }

    #[test]
    fn violation_stats_examples() {
        let r = vec![-0.01, 0.0, 0.02];
        let below = AlignedSeries::from_values(r.clone(), vec![-0.5; 3], 0.05).unwrap();
        assert_eq!(violation_stats(&below), (0, 0.0));
        let above = AlignedSeries::from_values(r, vec![0.5; 3], 0.05).unwrap();
        assert_eq!(violation_stats(&above), (3, 1.0));

        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 5000;
        let r: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let q = crate::stats::normal_quantile(0.05).unwrap();
        let s = AlignedSeries::from_values(r, vec![q; n], 0.05).unwrap();
        let (_, rate) = violation_stats(&s);
        let band = 2.5758 * (0.05_f64 * 0.95 / n as f64).sqrt();
        assert!((rate - 0.05).abs() <= band);
    }

    #[test]
    fn series_validation() {
        assert!(AlignedSeries::from_values(vec![0.0], vec![0.0, 1.0], 0.05).is_err());
        assert!(AlignedSeries::from_values(vec![], vec![], 0.05).is_err());
        assert!(AlignedSeries::from_values(vec![f64::NAN], vec![0.0], 0.05).is_err());
        assert!(AlignedSeries::from_values(vec![0.0], vec![0.0], 1.0).is_err());
    }

    fn report_for(pairs: Vec<(&str, Vec<f64>)>, r: &[f64]) -> Result<BacktestReport> {
        let series: Vec<(String, AlignedSeries)> = pairs
            .into_iter()
            .map(|(n, v)| (n.to_string(), AlignedSeries::from_values(r.to_vec(), v, 0.05).unwrap()))
            .collect();
        BacktestReport::score(&series, DEFAULT_SARMA_BETA)
    }

    #[test]
    fn report_ratios_and_ranks() {
        let r = vec![-0.03, 0.01, -0.01, 0.02, -0.04];
        let single = report_for(vec![("garch", vec![-0.02; 5])], &r).unwrap();
        assert_eq!(single.models[0].pm_ratio, 1.0);
        let twin = report_for(vec![("a", vec![-0.02; 5]), ("b", vec![-0.02; 5])], &r).unwrap();
        assert_eq!(twin.models[0].pm_ratio, 0.5);
        assert_eq!(twin.models[1].pm_ratio, 0.5);

        let rep = report_for(vec![("tight", vec![-0.005; 5]), ("loose", vec![-0.05; 5])], &r).unwrap();
        let s: f64 = rep.models.iter().map(|m| m.pm_ratio).sum();
        assert!((s - 1.0).abs() < 1e-15);
        assert_eq!(rep.models[0].lopez, lopez_rql(&AlignedSeries::from_values(r.clone(), vec![-0.005; 5], 0.05).unwrap()));
        assert!((rep.models[0].sums.linear - 5.0 * rep.models[0].linear).abs() < 1e-15);

        let mut csv = Vec::new();
        rep.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("model,n,violations,"));
        assert_eq!(text.lines().count(), 3);
        let json: serde_json::Value = serde_json::from_str(&rep.to_json().unwrap()).unwrap();
        assert_eq!(json["models"][1]["model"], "loose");

        let other = AlignedSeries::from_values(vec![0.0; 5], vec![-0.01; 5], 0.05).unwrap();
        let base = AlignedSeries::from_values(r.clone(), vec![-0.01; 5], 0.05).unwrap();
        assert!(matches!(
            BacktestReport::score(&[("a".into(), base.clone()), ("b".into(), other)], 0.0),
            Err(BacktestError::Misaligned { .. })
        ));
        let a01 = AlignedSeries::from_values(r, vec![-0.01; 5], 0.01).unwrap();
        assert!(matches!(
            BacktestReport::score(&[("a".into(), base), ("b".into(), a01)], 0.0),
            Err(BacktestError::MixedAlpha { .. })
        ));
    }

    proptest! {
        #[test]
        fn ratios_sum_to_one_and_keep_order(pms in prop::collection::vec(1e-6f64..10.0, 1..12)) {
            let ratios = pm_ratio(&pms).unwrap();
            prop_assert!((ratios.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for i in 0..pms.len() {
                for j in 0..pms.len() {
                    if pms[i] < pms[j] {
                        prop_assert!(ratios[i] < ratios[j]);
                    }
                }
            }
        }

        #[test]
        fn regulatory_loss_zero_without_violations(r in prop::collection::vec(-0.05f64..0.05, 1..40)) {
            let v = vec![-0.06; r.len()];
            let s = AlignedSeries::from_values(r, v, 0.05).unwrap();
            prop_assert_eq!(lopez_rql(&s), 0.0);
            prop_assert_eq!(sener_pm(&s).phi, 0.0);
        }

        #[test]
        fn caporin_cl3_is_linear_loss(r in prop::collection::vec(-0.05f64..0.05, 1..40), shift in -0.03f64..0.0) {
            let v: Vec<f64> = r.iter().map(|x| x * 0.3 + shift).collect();
            let s = AlignedSeries::from_values(r, v, 0.05).unwrap();
            prop_assert_eq!(caporin_losses(&s).cl3, linear_loss(&s));
        }

        #[test]
        fn sener_non_negative_parts(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (r, v) = random_sequence(&mut rng);
            let pm = sener_pm(&AlignedSeries::from_values(r, v, 0.05).unwrap());
            prop_assert!(pm.phi >= 0.0 && pm.psi >= 0.0 && pm.pm >= 0.0);
        }
    }
}
