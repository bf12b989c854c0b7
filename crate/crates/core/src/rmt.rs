//! Random-matrix diagnostics for return panels: correlation spectra, the
//! Marchenko-Pastur noise fit, eigenvector overlaps, signal-variance shares
//! and the Henze-Zirkler multivariate normality test.
//!
//! Panels are `T x N` matrices (days by assets).

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, LogNormal};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::stats::{mean, quantile_sorted, sample_std, sort_f64};

/// Largest tolerated `|a_ij - a_ji|` in [`eigh`].
pub const SYMMETRY_TOL: f64 = 1e-10;
pub const MAX_SWEEPS: usize = 100;
pub const MIN_FIT_EIGENVALUES: usize = 20;
const SIGMA2_GRID_MIN: f64 = 0.05;
const SIGMA2_GRID_MAX: f64 = 1.0;
const SIGMA2_GRID_STEP: f64 = 0.01;
const FIT_POINTS: usize = 1000;
const ORTHONORMAL_TOL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum RmtError {
    #[error("column {0} has zero variance")]
    ZeroVariance(usize),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),
    #[error("matrix must be square, got {0}x{1}")]
    NotSquare(usize, usize),
    #[error("need T > N, got T = {t}, N = {n}")]
    InvalidShape { t: usize, n: usize },
    #[error("sigma2 {0} must be positive")]
    InvalidSigma2(f64),
    #[error("degenerate spectrum: {0}")]
    Degenerate(String),
    #[error("vectors are not orthonormal")]
    NotOrthonormal,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("sample covariance is singular")]
    SingularCovariance,
    #[error("non-finite value encountered")]
    NonFinite,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, RmtError>;

fn column_moments(data: &Matrix) -> Result<(Vec<f64>, Vec<f64>)> {
    if !data.is_finite() {
        return Err(RmtError::NonFinite);
    }
    let (t, n) = data.shape();
    if t < 2 {
        return Err(RmtError::InvalidShape { t, n });
    }
    let mut means = Vec::with_capacity(n);
    let mut sds = Vec::with_capacity(n);
    for j in 0..n {
        let col = data.col(j);
        let sd = sample_std(&col);
        if !(sd > 0.0) {
            return Err(RmtError::ZeroVariance(j));
        }
        means.push(mean(&col));
        sds.push(sd);
    }
    Ok((means, sds))
}

/// Columns shifted to zero mean and scaled to unit sample variance.
pub fn zscore(data: &Matrix) -> Result<Matrix> {
    let (means, sds) = column_moments(data)?;
    let (t, n) = data.shape();
    Ok(Matrix::from_fn(t, n, |i, j| (data[(i, j)] - means[j]) / sds[j]))
}

/// Pearson correlation matrix of the columns of a `T x N` panel.
pub fn correlation_matrix(data: &Matrix) -> Result<Matrix> {
    let (t, n) = data.shape();
    if t <= n {
        log::warn!("correlation of {n} columns from only {t} rows is rank deficient");
    }
    let z = zscore(data)?;
    let mut c = z.transpose().matmul(&z);
    let scale = 1.0 / (t as f64 - 1.0);
    for i in 0..n {
        for j in 0..n {
            c[(i, j)] = if i == j { 1.0 } else { c[(i, j)] * scale };
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Ok(c)
}

/// Spectral decomposition with eigenvalues in descending order and
/// eigenvectors as matching columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenReport {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Matrix,
    pub n: usize,
    /// Number of observations behind the matrix, when it came from a panel.
    pub t: Option<usize>,
}

impl EigenReport {
    /// Eigenvector `k` (0 = largest eigenvalue).
    pub fn vector(&self, k: usize) -> Vec<f64> {
        self.eigenvectors.col(k)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Cyclic Jacobi eigen-decomposition of a symmetric matrix.
pub fn eigh(a: &Matrix) -> Result<EigenReport> {
    let (rows, cols) = a.shape();
    if rows != cols {
        return Err(RmtError::NotSquare(rows, cols));
    }
    if !a.is_finite() {
        return Err(RmtError::NonFinite);
    }
    let asym = a.max_asymmetry().expect("square");
    if asym > SYMMETRY_TOL {
        return Err(RmtError::Asymmetric(asym));
    }
    let n = rows;
    let mut m = a.as_slice().to_vec();
    let mut v = Matrix::identity(n).into_vec();
    let norm = a.frobenius_norm();
    let target = 1e-12 * norm;
    for _ in 0..MAX_SWEEPS {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| m[i * n + j].powi(2))
            .sum::<f64>()
            .sqrt();
        if off <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (m[q * n + q] - m[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate_cols(&mut m, n, p, q, c, s);
                for k in 0..n {
                    let (apk, aqk) = (m[p * n + k], m[q * n + k]);
                    m[p * n + k] = c * apk - s * aqk;
                    m[q * n + k] = s * apk + c * aqk;
                }
                m[p * n + q] = 0.0;
                m[q * n + p] = 0.0;
                rotate_cols(&mut v, n, p, q, c, s);
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[j * n + j].total_cmp(&m[i * n + i]).then(i.cmp(&j)));
    let eigenvalues: Vec<f64> = order.iter().map(|&k| m[k * n + k]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        // Fix the arbitrary sign: largest-magnitude component positive.
        let col: Vec<f64> = (0..n).map(|i| v[i * n + src]).collect();
        let pivot = col
            .iter()
            .copied()
            .fold(0.0_f64, |best, x| if x.abs() > best.abs() { x } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(i, dst)] = sign * col[i];
        }
    }
    Ok(EigenReport {
        eigenvalues,
        eigenvectors: vectors,
        n,
        t: None,
    })
}

fn rotate_cols(m: &mut [f64], n: usize, p: usize, q: usize, c: f64, s: f64) {
    for k in 0..n {
        let (akp, akq) = (m[k * n + p], m[k * n + q]);
        m[k * n + p] = c * akp - s * akq;
        m[k * n + q] = s * akp + c * akq;
    }
}

/// Eigen-decomposition of the correlation matrix of a `T x N` panel.
pub fn correlation_spectrum(data: &Matrix) -> Result<EigenReport> {
    let mut report = eigh(&correlation_matrix(data)?)?;
    report.t = Some(data.rows());
    Ok(report)
}

/// Support edges `sigma2 (1 -/+ sqrt(N/T))^2`.
pub fn mp_edges(sigma2: f64, t: usize, n: usize) -> Result<(f64, f64)> {
    if t <= n || n == 0 {
        return Err(RmtError::InvalidShape { t, n });
    }
    if !(sigma2 > 0.0) || !sigma2.is_finite() {
        return Err(RmtError::InvalidSigma2(sigma2));
    }
    let r = (n as f64 / t as f64).sqrt();
    Ok((sigma2 * (1.0 - r).powi(2), sigma2 * (1.0 + r).powi(2)))
}

/// Marchenko-Pastur density of correlation eigenvalues for noise variance
/// `sigma2` and `T` observations of `N` series.
pub fn mp_pdf(lambda: f64, sigma2: f64, t: usize, n: usize) -> Result<f64> {
    let (lo, hi) = mp_edges(sigma2, t, n)?;
    if lambda <= lo || lambda >= hi {
        return Ok(0.0);
    }
    let q = t as f64 / n as f64;
    Ok(q * ((hi - lambda) * (lambda - lo)).sqrt() / (2.0 * PI * lambda * sigma2))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MpFit {
    pub sigma2: f64,
    pub lambda_minus: f64,
    pub lambda_plus: f64,
    /// `T / N`.
    pub q: f64,
    /// Eigenvalues strictly above `lambda_plus`.
    pub signal_count: usize,
}

impl MpFit {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn silverman_bandwidth(sorted: &[f64]) -> f64 {
    let n = sorted.len() as f64;
    let sd = sample_std(sorted);
    let iqr = quantile_sorted(sorted, 0.75).expect("non-empty") - quantile_sorted(sorted, 0.25).expect("non-empty");
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

fn kde(sorted: &[f64], h: f64, x: f64) -> f64 {
    let norm = 1.0 / (sorted.len() as f64 * h * (2.0 * PI).sqrt());
    sorted
        .iter()
        .map(|&l| (-0.5 * ((x - l) / h).powi(2)).exp())
        .sum::<f64>()
        * norm
}

fn fit_error(sorted: &[f64], h: f64, sigma2: f64, t: usize, n: usize) -> f64 {
    let (lo, hi) = mp_edges(sigma2, t, n).expect("validated shape");
    let step = (hi - lo) / (FIT_POINTS - 1) as f64;
    (0..FIT_POINTS)
        .map(|i| {
            let x = lo + step * i as f64;
            let d = mp_pdf(x, sigma2, t, n).expect("validated shape") - kde(sorted, h, x);
            d * d
        })
        .sum()
}

fn best_sigma2(sorted: &[f64], t: usize, n: usize) -> f64 {
    let h = silverman_bandwidth(sorted);
    let steps = ((SIGMA2_GRID_MAX - SIGMA2_GRID_MIN) / SIGMA2_GRID_STEP).round() as usize;
    let grid: Vec<f64> = (0..=steps)
        .map(|i| SIGMA2_GRID_MIN + SIGMA2_GRID_STEP * i as f64)
        .collect();
    let errs: Vec<f64> = grid.par_iter().map(|&s| fit_error(sorted, h, s, t, n)).collect();
    let best = (0..grid.len())
        .min_by(|&a, &b| errs[a].total_cmp(&errs[b]).then(a.cmp(&b)))
        .expect("non-empty grid");
    let mut lo = (grid[best] - SIGMA2_GRID_STEP).max(SIGMA2_GRID_MIN);
    let mut hi = (grid[best] + SIGMA2_GRID_STEP).min(SIGMA2_GRID_MAX);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let f = |s: f64| fit_error(sorted, h, s, t, n);
    let (mut x1, mut x2) = (hi - g * (hi - lo), lo + g * (hi - lo));
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..40 {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        }
    }
    let refined = 0.5 * (lo + hi);
    if f(refined) <= errs[best] {
        refined
    } else {
        grid[best]
    }
}

/// Fits the noise variance of a correlation spectrum by matching the
/// Marchenko-Pastur density to a Gaussian-kernel density of the bulk
/// eigenvalues. Eigenvalues above the fitted upper edge are removed from
/// the bulk and the fit repeated until the bulk stops changing.
pub fn fit_mp_sigma2(eigenvalues: &[f64], t: usize, n: usize) -> Result<MpFit> {
    if eigenvalues.len() < MIN_FIT_EIGENVALUES {
        return Err(RmtError::Degenerate(format!(
            "{} eigenvalues, need at least {MIN_FIT_EIGENVALUES}",
            eigenvalues.len()
        )));
    }
    if eigenvalues.iter().any(|l| !l.is_finite()) {
        return Err(RmtError::NonFinite);
    }
    mp_edges(1.0, t, n)?;
    let mut all = eigenvalues.to_vec();
    sort_f64(&mut all);
    if all[0] == all[all.len() - 1] {
        return Err(RmtError::Degenerate("all eigenvalues are equal".into()));
    }
    let mut bulk = all.clone();
    let mut sigma2 = SIGMA2_GRID_MAX;
    for _ in 0..10 {
        if bulk.len() < MIN_FIT_EIGENVALUES || bulk[0] == bulk[bulk.len() - 1] {
            return Err(RmtError::Degenerate("bulk collapsed during fitting".into()));
        }
        sigma2 = best_sigma2(&bulk, t, n);
        let (_, hi) = mp_edges(sigma2, t, n)?;
        let next: Vec<f64> = all.iter().copied().filter(|&l| l <= hi).collect();
        if next.len() == bulk.len() {
            break;
        }
        bulk = next;
    }
    let (lambda_minus, lambda_plus) = mp_edges(sigma2, t, n)?;
    Ok(MpFit {
        sigma2,
        lambda_minus,
        lambda_plus,
        q: t as f64 / n as f64,
        signal_count: all.iter().filter(|&&l| l > lambda_plus).count(),
    })
}

/// Share of the total variance of the z-scored panel captured by its
/// projections on the given orthonormal vectors.
pub fn signal_variance_share(data: &Matrix, vectors: &[Vec<f64>]) -> Result<f64> {
    let n = data.cols();
    for (a, va) in vectors.iter().enumerate() {
        if va.len() != n {
            return Err(RmtError::DimensionMismatch(va.len(), n));
        }
        for (b, vb) in vectors.iter().enumerate().skip(a) {
            let d: f64 = va.iter().zip(vb).map(|(x, y)| x * y).sum();
            let want = if a == b { 1.0 } else { 0.0 };
            if (d - want).abs() > ORTHONORMAL_TOL {
                return Err(RmtError::NotOrthonormal);
            }
        }
    }
    if vectors.is_empty() {
        return Ok(0.0);
    }
    let z = zscore(data)?;
    let total: f64 = (0..n).map(|j| crate::stats::sample_variance(&z.col(j))).sum();
    let projected: f64 = vectors
        .iter()
        .map(|v| {
            let p: Vec<f64> = z.iter_rows().map(|row| row.iter().zip(v).map(|(x, w)| x * w).sum()).collect();
            crate::stats::sample_variance(&p)
        })
        .sum();
    Ok(projected / total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    /// `|v_k(A) . v_k(B)|` for ranks `1..=n_max`.
    pub overlaps: Vec<f64>,
    /// Noise reference `1 / sqrt(N)`.
    pub threshold: f64,
}

impl Overlap {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["rank", "overlap", "threshold"])?;
        for (k, o) in self.overlaps.iter().enumerate() {
            out.write_record([(k + 1).to_string(), o.to_string(), self.threshold.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Absolute dot products of same-rank eigenvectors of two reports.
pub fn eigenvector_overlap(a: &EigenReport, b: &EigenReport, n_max: usize) -> Result<Overlap> {
    if a.n != b.n {
        return Err(RmtError::DimensionMismatch(a.n, b.n));
    }
    let k = n_max.min(a.n);
    let overlaps = (0..k)
        .map(|r| {
            let d: f64 = (0..a.n).map(|i| a.eigenvectors[(i, r)] * b.eigenvectors[(i, r)]).sum();
            d.abs().min(1.0)
        })
        .collect();
    Ok(Overlap {
        overlaps,
        threshold: 1.0 / (a.n as f64).sqrt(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HenzeZirkler {
    pub statistic: f64,
    pub p_value: f64,
    pub beta: f64,
}

/// Henze-Zirkler test of multivariate normality on the rows of a `T x N`
/// sample, with the lognormal approximation for the p-value.
pub fn henze_zirkler(data: &Matrix) -> Result<HenzeZirkler> {
    if !data.is_finite() {
        return Err(RmtError::NonFinite);
    }
    let (t, p) = data.shape();
    if t <= p || p == 0 {
        return Err(RmtError::InvalidShape { t, n: p });
    }
    let nf = t as f64;
    let pf = p as f64;
    let means: Vec<f64> = (0..p).map(|j| mean(&data.col(j))).collect();
    let centered = Matrix::from_fn(t, p, |i, j| data[(i, j)] - means[j]);
    let cov = centered.transpose().matmul(&centered);
    let cov = Matrix::from_fn(p, p, |i, j| cov[(i, j)] / nf);
    let l = cov.cholesky().ok_or(RmtError::SingularCovariance)?;
    // Whitened rows y = L^{-1} (x - mean), so Mahalanobis distances are
    // Euclidean in y.
    let mut y = centered;
    for i in 0..t {
        let row = y.row_mut(i);
        for a in 0..p {
            let s: f64 = (0..a).map(|k| l[(a, k)] * row[k]).sum();
            row[a] = (row[a] - s) / l[(a, a)];
        }
    }
    let beta = ((2.0 * pf + 1.0) * nf / 4.0).powf(1.0 / (pf + 4.0)) / 2f64.sqrt();
    let b2 = beta * beta;
    let pair_sums: Vec<f64> = (0..t)
        .into_par_iter()
        .map(|i| {
            let yi = y.row(i);
            let mut s = 0.0;
            for j in (i + 1)..t {
                let d: f64 = yi.iter().zip(y.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                s += (-0.5 * b2 * d).exp();
            }
            s
        })
        .collect();
    let pairs = 2.0 * pair_sums.iter().sum::<f64>() + nf;
    let centre: f64 = y
        .iter_rows()
        .map(|r| {
            let d: f64 = r.iter().map(|x| x * x).sum();
            (-b2 * d / (2.0 * (1.0 + b2))).exp()
        })
        .sum();
    let statistic =
        pairs / nf - 2.0 * (1.0 + b2).powf(-pf / 2.0) * centre + nf * (1.0 + 2.0 * b2).powf(-pf / 2.0);

    let a = 1.0 + 2.0 * b2;
    let b4 = b2 * b2;
    let b8 = b4 * b4;
    let mu = 1.0 - a.powf(-pf / 2.0) * (1.0 + pf * b2 / a + pf * (pf + 2.0) * b4 / (2.0 * a * a));
    let w = (1.0 + b2) * (1.0 + 3.0 * b2);
    let var = 2.0 * (1.0 + 4.0 * b2).powf(-pf / 2.0)
        + 2.0 * a.powf(-pf) * (1.0 + 2.0 * pf * b4 / (a * a) + 3.0 * pf * (pf + 2.0) * b8 / (4.0 * a.powi(4)))
        - 4.0 * w.powf(-pf / 2.0) * (1.0 + 3.0 * pf * b4 / (2.0 * w) + pf * (pf + 2.0) * b8 / (2.0 * w * w));
    let location = (mu.powi(4) / (var + mu * mu)).sqrt().ln();
    let scale = ((var + mu * mu) / (mu * mu)).ln().sqrt();
    let dist = LogNormal::new(location, scale).map_err(|_| RmtError::NonFinite)?;
    let p_value = if statistic > 0.0 { dist.sf(statistic) } else { 1.0 };
    Ok(HenzeZirkler {
        statistic,
        p_value,
        beta,
    })
}

/// Density histogram of eigenvalues over `bins` equal-width bins.
pub fn write_histogram_csv<W: Write>(eigenvalues: &[f64], bins: usize, w: W) -> Result<()> {
    if eigenvalues.is_empty() || bins == 0 {
        return Err(RmtError::Degenerate("empty histogram".into()));
    }
    let lo = eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let width = if hi > lo { (hi - lo) / bins as f64 } else { 1.0 };
    let mut counts = vec![0usize; bins];
    for &l in eigenvalues {
        let k = (((l - lo) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let total = eigenvalues.len() as f64;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["bin_left", "bin_right", "count", "density"])?;
    for (k, &c) in counts.iter().enumerate() {
        let left = lo + width * k as f64;
        out.write_record([
            left.to_string(),
            (left + width).to_string(),
            c.to_string(),
            (c as f64 / (total * width)).to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Fitted Marchenko-Pastur density on `points` evenly spaced values across
/// its support.
pub fn write_mp_curve_csv<W: Write>(fit: &MpFit, t: usize, n: usize, points: usize, w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["lambda", "density"])?;
    let steps = points.max(2) - 1;
    let step = (fit.lambda_plus - fit.lambda_minus) / steps as f64;
    for i in 0..=steps {
        let x = fit.lambda_minus + step * i as f64;
        out.write_record([x.to_string(), mp_pdf(x, fit.sigma2, t, n)?.to_string()])?;
    }
    out.flush()?;
    Ok(())
}
