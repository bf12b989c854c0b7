//! Price panel ingestion, log returns, rolling EWMA standardization and
//! portfolio aggregation.

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;

/// Lower bound applied to every rolling standard deviation.
pub const SIGMA_FLOOR: f64 = 1e-8;
pub const DEFAULT_WINDOW: usize = 250;
pub const DEFAULT_DECAY: f64 = 0.94;
pub const DEFAULT_MISSING_CAP: f64 = 0.10;

const DATE_FORMAT: &str = "%Y-%m-%d";

#[derive(Debug, Error)]
pub enum MarketDataError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("no column named `{0}` in header")]
    MissingDateColumn(String),
    #[error("line {line}: cannot parse date `{value}`")]
    BadDate { line: usize, value: String },
    #[error("line {line}, column `{column}`: cannot parse `{value}` as a price")]
    BadNumber {
        line: usize,
        column: String,
        value: String,
    },
    #[error("line {line}, column `{column}`: price {value} is not positive")]
    NonPositivePrice {
        line: usize,
        column: String,
        value: f64,
    },
    #[error("dates are not strictly increasing at {0}")]
    DatesNotIncreasing(NaiveDate),
    #[error("no parseable rows")]
    NoRows,
    #[error("every asset exceeded the missing-data cap")]
    AllAssetsDropped,
    #[error("invalid window {0}: must be at least 2")]
    InvalidWindow(usize),
    #[error("window {window} is larger than the series length {len}")]
    WindowTooLarge { window: usize, len: usize },
    #[error("decay {0} must lie strictly between 0 and 1")]
    InvalidDecay(f64),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("no rolling statistics for day {0}")]
    MissingStats(usize),
    #[error("portfolio weights sum to {0}, expected 1")]
    WeightsSum(f64),
    #[error("non-finite value encountered")]
    NonFinite,
    #[error("series of length {len} is too short (need at least {min})")]
    TooShort { len: usize, min: usize },
    #[error("series has zero variance")]
    Degenerate,
}

pub type Result<T> = std::result::Result<T, MarketDataError>;

/// Date-indexed matrix of close prices, one column per asset.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    dates: Vec<NaiveDate>,
    assets: Vec<String>,
    prices: Matrix,
}

impl PricePanel {
    pub fn new(dates: Vec<NaiveDate>, assets: Vec<String>, prices: Matrix) -> Result<Self> {
        if prices.shape() != (dates.len(), assets.len()) {
            return Err(MarketDataError::ShapeMismatch(format!(
                "{} dates x {} assets vs prices {:?}",
                dates.len(),
                assets.len(),
                prices.shape()
            )));
        }
        check_increasing(&dates)?;
        for (i, &p) in prices.as_slice().iter().enumerate() {
            if !(p.is_finite() && p > 0.0) {
                let cols = assets.len();
                return Err(MarketDataError::NonPositivePrice {
                    line: i / cols + 2,
                    column: assets[i % cols].clone(),
                    value: p,
                });
            }
        }
        Ok(Self {
            dates,
            assets,
            prices,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn prices(&self) -> &Matrix {
        &self.prices
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_panel_csv(w, &self.dates, &self.assets, &self.prices)
    }
}

fn check_increasing(dates: &[NaiveDate]) -> Result<()> {
    for pair in dates.windows(2) {
        if pair[1] <= pair[0] {
            return Err(MarketDataError::DatesNotIncreasing(pair[1]));
        }
    }
    Ok(())
}

/// Column mapping and cleaning rules for a wide price CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub date_column: String,
    /// Assets with a larger fraction of missing cells are dropped.
    pub missing_cap: f64,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            date_column: "date".to_string(),
            missing_cap: DEFAULT_MISSING_CAP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DroppedAsset {
    pub asset: String,
    pub missing_fraction: f64,
}

/// Result of [`load_price_csv`]: the cleaned panel plus the assets that were
/// removed by the missing-data rule.
#[derive(Debug, Clone)]
pub struct LoadedPrices {
    pub panel: PricePanel,
    pub dropped: Vec<DroppedAsset>,
    /// Leading days discarded because some retained asset had no price yet.
    pub leading_days_dropped: usize,
}

pub fn load_price_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<LoadedPrices> {
    let file = File::open(path.as_ref())?;
    read_price_csv(file, schema)
}

fn is_missing(cell: &str) -> bool {
    matches!(
        cell.trim(),
        "" | "NA" | "N/A" | "NaN" | "nan" | "null" | "NULL"
    )
}

/// Parses a `date,<ticker>,...` CSV, forward-fills interior gaps, drops assets
/// above the missing-data cap and leading days before all retained assets
/// have a price.
pub fn read_price_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<LoadedPrices> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let date_idx = headers
        .iter()
        .position(|h| h == schema.date_column)
        .ok_or_else(|| MarketDataError::MissingDateColumn(schema.date_column.clone()))?;
    let asset_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != date_idx)
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let mut dates = Vec::new();
    let mut cells: Vec<Vec<Option<f64>>> = Vec::new();
    for (row_no, record) in rdr.records().enumerate() {
        let record = record?;
        let line = row_no + 2;
        let raw_date = record.get(date_idx).unwrap_or("");
        if raw_date.is_empty() {
            continue;
        }
        let date = NaiveDate::parse_from_str(raw_date, DATE_FORMAT).map_err(|_| {
            MarketDataError::BadDate {
                line,
                value: raw_date.to_string(),
            }
        })?;
        let mut row = Vec::with_capacity(asset_cols.len());
        for (idx, name) in &asset_cols {
            let cell = record.get(*idx).unwrap_or("");
            if is_missing(cell) {
                row.push(None);
                continue;
            }
            let value: f64 = cell.parse().map_err(|_| MarketDataError::BadNumber {
                line,
                column: name.clone(),
                value: cell.to_string(),
            })?;
            if !(value.is_finite() && value > 0.0) {
                return Err(MarketDataError::NonPositivePrice {
                    line,
                    column: name.clone(),
                    value,
                });
            }
            row.push(Some(value));
        }
        dates.push(date);
        cells.push(row);
    }
    if dates.is_empty() {
        return Err(MarketDataError::NoRows);
    }
    check_increasing(&dates)?;

    let n_rows = dates.len();
    let mut keep = Vec::new();
    let mut dropped = Vec::new();
    for (j, (_, name)) in asset_cols.iter().enumerate() {
        let missing = cells.iter().filter(|r| r[j].is_none()).count();
        let fraction = missing as f64 / n_rows as f64;
        if fraction > schema.missing_cap || missing == n_rows {
            log::warn!(
                "dropping asset {name}: {:.1}% missing exceeds cap",
                100.0 * fraction
            );
            dropped.push(DroppedAsset {
                asset: name.clone(),
                missing_fraction: fraction,
            });
        } else {
            keep.push(j);
        }
    }
    if keep.is_empty() {
        return Err(MarketDataError::AllAssetsDropped);
    }

    // Forward fill, then find the first day on which every kept asset has a price.
    let mut last: Vec<Option<f64>> = vec![None; keep.len()];
    let mut filled: Vec<Vec<Option<f64>>> = Vec::with_capacity(n_rows);
    for row in &cells {
        let out: Vec<Option<f64>> = keep
            .iter()
            .enumerate()
            .map(|(k, &j)| {
                if let Some(v) = row[j] {
                    last[k] = Some(v);
                }
                last[k]
            })
            .collect();
        filled.push(out);
    }
    let first_complete = filled
        .iter()
        .position(|r| r.iter().all(Option::is_some))
        .ok_or(MarketDataError::NoRows)?;

    let kept_dates = dates[first_complete..].to_vec();
    let data: Vec<f64> = filled[first_complete..]
        .iter()
        .flat_map(|r| r.iter().map(|v| v.expect("filled")))
        .collect();
    let assets: Vec<String> = keep.iter().map(|&j| asset_cols[j].1.clone()).collect();
    let prices = Matrix::from_vec(kept_dates.len(), assets.len(), data);
    let panel = PricePanel::new(kept_dates, assets, prices)?;
    Ok(LoadedPrices {
        panel,
        dropped,
        leading_days_dropped: first_complete,
    })
}

/// Writes a `date,<ticker>,...` CSV. Values use the shortest representation
/// that round-trips exactly.
pub fn write_panel_csv<W: Write>(
    w: W,
    dates: &[NaiveDate],
    assets: &[String],
    values: &Matrix,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["date".to_string()];
    header.extend(assets.iter().cloned());
    wtr.write_record(&header)?;
    for (i, d) in dates.iter().enumerate() {
        let mut rec = vec![d.format(DATE_FORMAT).to_string()];
        rec.extend(values.row(i).iter().map(|v| v.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a panel written by [`write_panel_csv`] (no cleaning, no gaps allowed).
pub fn read_panel_csv<R: Read>(r: R) -> Result<(Vec<NaiveDate>, Vec<String>, Matrix)> {
    let mut rdr = csv::Reader::from_reader(r);
    let headers = rdr.headers()?.clone();
    let assets: Vec<String> = headers.iter().skip(1).map(str::to_string).collect();
    let mut dates = Vec::new();
    let mut data = Vec::new();
    for (row_no, record) in rdr.records().enumerate() {
        let record = record?;
        let line = row_no + 2;
        let raw = record.get(0).unwrap_or("");
        dates.push(
            NaiveDate::parse_from_str(raw, DATE_FORMAT).map_err(|_| MarketDataError::BadDate {
                line,
                value: raw.to_string(),
            })?,
        );
        for (j, cell) in record.iter().skip(1).enumerate() {
            data.push(cell.parse::<f64>().map_err(|_| MarketDataError::BadNumber {
                line,
                column: assets.get(j).cloned().unwrap_or_default(),
                value: cell.to_string(),
            })?);
        }
    }
    if data.len() != dates.len() * assets.len() {
        return Err(MarketDataError::ShapeMismatch("ragged panel csv".into()));
    }
    let m = Matrix::from_vec(dates.len(), assets.len(), data);
    Ok((dates, assets, m))
}

/// Daily log returns; row `t` holds `ln(P[t+1] / P[t])` dated at `t + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    dates: Vec<NaiveDate>,
    assets: Vec<String>,
    returns: Matrix,
}

impl ReturnPanel {
    pub fn new(dates: Vec<NaiveDate>, assets: Vec<String>, returns: Matrix) -> Result<Self> {
        if returns.shape() != (dates.len(), assets.len()) {
            return Err(MarketDataError::ShapeMismatch(format!(
                "{} dates x {} assets vs returns {:?}",
                dates.len(),
                assets.len(),
                returns.shape()
            )));
        }
        if !returns.is_finite() {
            return Err(MarketDataError::NonFinite);
        }
        Ok(Self {
            dates,
            assets,
            returns,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn returns(&self) -> &Matrix {
        &self.returns
    }

    pub fn n_days(&self) -> usize {
        self.dates.len()
    }

    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    /// Rows `start..end` as a new panel.
    pub fn slice_days(&self, start: usize, end: usize) -> Self {
        Self {
            dates: self.dates[start..end].to_vec(),
            assets: self.assets.clone(),
            returns: self.returns.slice_rows(start, end),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_panel_csv(w, &self.dates, &self.assets, &self.returns)
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let (dates, assets, returns) = read_panel_csv(r)?;
        Self::new(dates, assets, returns)
    }
}

pub fn log_returns(panel: &PricePanel) -> ReturnPanel {
    let t = panel.n_days().saturating_sub(1);
    let p = panel.prices();
    let returns = Matrix::from_fn(t, panel.n_assets(), |i, j| (p[(i + 1, j)] / p[(i, j)]).ln());
    ReturnPanel {
        dates: panel.dates()[1..].to_vec(),
        assets: panel.assets().to_vec(),
        returns,
    }
}

/// Per-asset exponentially weighted mean and standard deviation over the
/// trailing window `[t - window, t - 1]`.
///
/// Row `k` holds the statistics for day `window + k`; the last row
/// (day `n_days`) is the forecast for the day after the panel ends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingStats {
    pub window: usize,
    pub decay: f64,
    pub sigma_floor: f64,
    mu: Matrix,
    sigma: Matrix,
}

impl RollingStats {
    pub fn from_parts(window: usize, decay: f64, mu: Matrix, sigma: Matrix) -> Result<Self> {
        if mu.shape() != sigma.shape() {
            return Err(MarketDataError::ShapeMismatch("mu vs sigma".into()));
        }
        Ok(Self {
            window,
            decay,
            sigma_floor: SIGMA_FLOOR,
            mu,
            sigma,
        })
    }

    /// First day index that has statistics.
    pub fn first_day(&self) -> usize {
        self.window
    }

    /// One past the last day index that has statistics.
    pub fn end_day(&self) -> usize {
        self.window + self.mu.rows()
    }

    pub fn n_assets(&self) -> usize {
        self.mu.cols()
    }

    pub fn mu(&self) -> &Matrix {
        &self.mu
    }

    pub fn sigma(&self) -> &Matrix {
        &self.sigma
    }

    fn row_index(&self, day: usize) -> Result<usize> {
        if day < self.first_day() || day >= self.end_day() {
            Err(MarketDataError::MissingStats(day))
        } else {
            Ok(day - self.window)
        }
    }

    pub fn mu_at(&self, day: usize) -> Result<&[f64]> {
        Ok(self.mu.row(self.row_index(day)?))
    }

    pub fn sigma_at(&self, day: usize) -> Result<&[f64]> {
        Ok(self.sigma.row(self.row_index(day)?))
    }

    /// In-place `sigma * x + mu` with the statistics of `day`.
    pub fn destandardize_row(&self, day: usize, row: &mut [f64]) -> Result<()> {
        let k = self.row_index(day)?;
        if row.len() != self.n_assets() {
            return Err(MarketDataError::ShapeMismatch(format!(
                "row of {} vs {} assets",
                row.len(),
                self.n_assets()
            )));
        }
        for ((x, m), s) in row.iter_mut().zip(self.mu.row(k)).zip(self.sigma.row(k)) {
            *x = s * *x + m;
        }
        Ok(())
    }
}

pub fn ewma_stats(panel: &ReturnPanel, window: usize, decay: f64) -> Result<RollingStats> {
    if window < 2 {
        return Err(MarketDataError::InvalidWindow(window));
    }
    if !(decay > 0.0 && decay < 1.0) {
        return Err(MarketDataError::InvalidDecay(decay));
    }
    let t_len = panel.n_days();
    if window > t_len {
        return Err(MarketDataError::WindowTooLarge {
            window,
            len: t_len,
        });
    }
    let n = panel.n_assets();
    let x = panel.returns();
    // weights[age], age 0 = most recent day
    let weights: Vec<f64> = (0..window).map(|age| decay.powi(age as i32)).collect();
    let w_sum: f64 = weights.iter().sum();

    let rows = t_len - window + 1;
    let mut mu = Matrix::zeros(rows, n);
    let mut sigma = Matrix::zeros(rows, n);
    for k in 0..rows {
        let day = window + k;
        for j in 0..n {
            let mut m = 0.0;
            for (age, w) in weights.iter().enumerate() {
                m += w * x[(day - 1 - age, j)];
            }
            m /= w_sum;
            let mut v = 0.0;
            for (age, w) in weights.iter().enumerate() {
                let d = x[(day - 1 - age, j)] - m;
                v += w * d * d;
            }
            v /= w_sum;
            mu[(k, j)] = m;
            sigma[(k, j)] = v.sqrt().max(SIGMA_FLOOR);
        }
    }
    RollingStats::from_parts(window, decay, mu, sigma)
}

/// Standardized returns `(x - mu) / sigma` for days `first_day..`.
#[derive(Debug, Clone, PartialEq)]
pub struct StandardizedPanel {
    dates: Vec<NaiveDate>,
    assets: Vec<String>,
    first_day: usize,
    values: Matrix,
}

impl StandardizedPanel {
    pub fn new(
        dates: Vec<NaiveDate>,
        assets: Vec<String>,
        first_day: usize,
        values: Matrix,
    ) -> Result<Self> {
        if values.shape() != (dates.len(), assets.len()) {
            return Err(MarketDataError::ShapeMismatch("standardized panel".into()));
        }
        if !values.is_finite() {
            return Err(MarketDataError::NonFinite);
        }
        Ok(Self {
            dates,
            assets,
            first_day,
            values,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    /// Day index (in the source return panel) of the first row.
    pub fn first_day(&self) -> usize {
        self.first_day
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.values.rows()
    }

    /// Rows whose source day index lies in `start..end`.
    pub fn days(&self, start: usize, end: usize) -> Self {
        let lo = start.max(self.first_day).min(self.first_day + self.n_rows()) - self.first_day;
        let hi = end.max(self.first_day).min(self.first_day + self.n_rows()) - self.first_day;
        let hi = hi.max(lo);
        Self {
            dates: self.dates[lo..hi].to_vec(),
            assets: self.assets.clone(),
            first_day: self.first_day + lo,
            values: self.values.slice_rows(lo, hi),
        }
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        write_panel_csv(w, &self.dates, &self.assets, &self.values)
    }
}

pub fn standardize(panel: &ReturnPanel, stats: &RollingStats) -> Result<StandardizedPanel> {
    if stats.n_assets() != panel.n_assets() {
        return Err(MarketDataError::ShapeMismatch(format!(
            "stats for {} assets, panel has {}",
            stats.n_assets(),
            panel.n_assets()
        )));
    }
    let first = stats.first_day();
    let end = panel.n_days().min(stats.end_day());
    if first > end {
        return Err(MarketDataError::ShapeMismatch(
            "statistics start after the panel ends".into(),
        ));
    }
    let n = panel.n_assets();
    let x = panel.returns();
    let mut values = Matrix::zeros(end - first, n);
    for day in first..end {
        let mu = stats.mu_at(day)?;
        let sigma = stats.sigma_at(day)?;
        for j in 0..n {
            values[(day - first, j)] = (x[(day, j)] - mu[j]) / sigma[j];
        }
    }
    StandardizedPanel::new(
        panel.dates()[first..end].to_vec(),
        panel.assets().to_vec(),
        first,
        values,
    )
}

pub fn destandardize(panel: &StandardizedPanel, stats: &RollingStats) -> Result<ReturnPanel> {
    if stats.n_assets() != panel.assets.len() {
        return Err(MarketDataError::ShapeMismatch("asset count".into()));
    }
    let mut values = panel.values.clone();
    for k in 0..values.rows() {
        stats.destandardize_row(panel.first_day + k, values.row_mut(k))?;
    }
    ReturnPanel::new(panel.dates.clone(), panel.assets.clone(), values)
}

/// Portfolio weights, summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Weights(Vec<f64>);

impl Weights {
    pub fn new(omega: Vec<f64>) -> Result<Self> {
        if omega.is_empty() || omega.iter().any(|w| !w.is_finite()) {
            return Err(MarketDataError::NonFinite);
        }
        let sum: f64 = omega.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(MarketDataError::WeightsSum(sum));
        }
        Ok(Self(omega))
    }

    pub fn equal(n: usize) -> Self {
        assert!(n > 0, "equal weights need at least one asset");
        Self(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn dot(&self, row: &[f64]) -> f64 {
        self.0.iter().zip(row).map(|(w, x)| w * x).sum()
    }
}

impl TryFrom<Vec<f64>> for Weights {
    type Error = MarketDataError;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<Weights> for Vec<f64> {
    fn from(w: Weights) -> Self {
        w.0
    }
}

/// Resolves a ticker -> weight map against a panel's asset order.
pub fn weights_from_map(assets: &[String], map: &HashMap<String, f64>) -> Result<Weights> {
    let omega = assets
        .iter()
        .map(|a| map.get(a).copied().unwrap_or(0.0))
        .collect();
    Weights::new(omega)
}

pub fn portfolio_return(panel: &ReturnPanel, weights: &Weights) -> Result<Vec<f64>> {
    if weights.len() != panel.n_assets() {
        return Err(MarketDataError::ShapeMismatch(format!(
            "{} weights for {} assets",
            weights.len(),
            panel.n_assets()
        )));
    }
    Ok(panel.returns().iter_rows().map(|r| weights.dot(r)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub jarque_bera: f64,
}

/// Mean, sample standard deviation, moment skewness and excess kurtosis, and
/// the Jarque-Bera statistic `n/6 (S^2 + K^2/4)`.
pub fn describe(series: &[f64]) -> Result<Summary> {
    const MIN_LEN: usize = 8;
    let n = series.len();
    if n < MIN_LEN {
        return Err(MarketDataError::TooShort { len: n, min: MIN_LEN });
    }
    if series.iter().any(|x| !x.is_finite()) {
        return Err(MarketDataError::NonFinite);
    }
    let nf = n as f64;
    let mean = series.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for x in series {
        let d = x - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    let scale = series.iter().fold(0.0_f64, |a, x| a.max(x.abs()));
    if m2.sqrt() <= 1e-14 * scale || m2 == 0.0 {
        return Err(MarketDataError::Degenerate);
    }
    let skewness = m3 / m2.powf(1.5);
    let excess_kurtosis = m4 / (m2 * m2) - 3.0;
    Ok(Summary {
        n,
        mean,
        std: (m2 * nf / (nf - 1.0)).sqrt(),
        skewness,
        excess_kurtosis,
        jarque_bera: nf / 6.0 * (skewness * skewness + excess_kurtosis * excess_kurtosis / 4.0),
    })
}
