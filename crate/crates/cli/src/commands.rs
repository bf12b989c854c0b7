//! Pipeline stages. Each stage reads the artifacts of the previous ones
//! from the output directory and writes its own, plus a manifest.

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use encvar_core::backtest::{AlignedSeries, BacktestReport};
use encvar_core::market_data::{
    ewma_stats, load_price_csv, log_returns, portfolio_return, standardize, weights_from_map,
    DroppedAsset, ReturnPanel, RollingStats, StandardizedPanel, Weights,
};
use encvar_core::rmt::{
    correlation_spectrum, eigenvector_overlap, fit_mp_sigma2, henze_zirkler, signal_variance_share,
    write_histogram_csv, write_mp_curve_csv, EigenReport, HenzeZirkler, MpFit, RmtError, MIN_FIT_EIGENVALUES,
};
use encvar_core::vae::{encode, init_params, sample_standardized, train_split, VaeParams};
use encvar_core::var_models::{benchmark_forecasts, encoded_var_multi, ModelKind, VarSeries};
use encvar_core::Matrix;

use crate::config::{alpha_tag, RunConfig};

pub const PREPARED_DIR: &str = "prepared";
pub const MODEL_DIR: &str = "model";
pub const FORECAST_DIR: &str = "forecasts";
pub const BACKTEST_DIR: &str = "backtest";
pub const RMT_DIR: &str = "rmt";

/// Day-index boundaries of the return panel: training days are
/// `0..train_end`, validation `train_end..val_end`, test `val_end..n_days`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub n_days: usize,
    pub train_end: usize,
    pub val_end: usize,
}

impl SplitIndices {
    pub fn new(cfg: &RunConfig, n_days: usize) -> Result<Self> {
        let train_end = (n_days as f64 * cfg.split.train).floor() as usize;
        let val_end = (n_days as f64 * (cfg.split.train + cfg.split.validation)).floor() as usize;
        ensure!(
            train_end > cfg.window,
            "training split ends at day {train_end}, before the {}-day statistics window",
            cfg.window
        );
        ensure!(val_end < n_days, "test split is empty");
        Ok(Self {
            n_days,
            train_end,
            val_end,
        })
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PrepareSummary {
    split: SplitIndices,
    assets: usize,
    dropped: Vec<DroppedRecord>,
    leading_days_dropped: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct DroppedRecord {
    asset: String,
    missing_fraction: f64,
}

impl From<&DroppedAsset> for DroppedRecord {
    fn from(d: &DroppedAsset) -> Self {
        Self {
            asset: d.asset.clone(),
            missing_fraction: d.missing_fraction,
        }
    }
}

/// Artifacts produced by `prepare`, reloaded by later stages.
pub struct Prepared {
    pub returns: ReturnPanel,
    pub stats: RollingStats,
    pub split: SplitIndices,
    pub weights: Weights,
}

impl Prepared {
    pub fn load(cfg: &RunConfig) -> Result<Self> {
        let dir = cfg.out_dir.join(PREPARED_DIR);
        let returns = ReturnPanel::read_csv(open(&dir.join("returns.csv"))?)?;
        let stats: RollingStats = serde_json::from_reader(open(&dir.join("stats.json"))?)?;
        let summary: PrepareSummary = serde_json::from_reader(open(&dir.join("summary.json"))?)?;
        let weights = portfolio_weights(cfg, returns.assets())?;
        Ok(Self {
            returns,
            stats,
            split: summary.split,
            weights,
        })
    }

    pub fn standardized(&self) -> Result<StandardizedPanel> {
        Ok(standardize(&self.returns, &self.stats)?)
    }

    /// Standardized rows of the training days.
    pub fn train_rows(&self) -> Result<Matrix> {
        Ok(self.standardized()?.days(0, self.split.train_end).values().clone())
    }

    pub fn portfolio(&self) -> Result<Vec<f64>> {
        Ok(portfolio_return(&self.returns, &self.weights)?)
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    ))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn portfolio_weights(cfg: &RunConfig, assets: &[String]) -> Result<Weights> {
    match &cfg.weights {
        None => Ok(Weights::equal(assets.len())),
        Some(map) => {
            let map: HashMap<String, f64> = map.iter().map(|(k, v)| (k.clone(), *v)).collect();
            Ok(weights_from_map(assets, &map)?)
        }
    }
}

/// Files written by one stage, relative to the output directory.
pub type Written = Vec<PathBuf>;

/// Loads prices, computes log returns and rolling statistics, fixes the split.
pub fn prepare(cfg: &RunConfig) -> Result<Written> {
    let loaded = load_price_csv(&cfg.prices, &cfg.csv)
        .with_context(|| format!("loading prices from {}", cfg.prices.display()))?;
    for d in &loaded.dropped {
        log::warn!("dropped {} ({:.1}% missing)", d.asset, 100.0 * d.missing_fraction);
    }
    let returns = log_returns(&loaded.panel);
    let split = SplitIndices::new(cfg, returns.n_days())?;
    let stats = ewma_stats(&returns, cfg.window, cfg.decay)?;
    let weights = portfolio_weights(cfg, returns.assets())?;
    let portfolio = portfolio_return(&returns, &weights)?;

    let dir = cfg.out_dir.join(PREPARED_DIR);
    let mut w = create(&dir.join("returns.csv"))?;
    returns.write_csv(&mut w)?;
    w.flush()?;
    write_json(&dir.join("stats.json"), &stats)?;
    let mut w = create(&dir.join("standardized.csv"))?;
    standardize(&returns, &stats)?.write_csv(&mut w)?;
    w.flush()?;
    let mut w = create(&dir.join("portfolio.csv"))?;
    writeln!(w, "date,return")?;
    for (d, r) in returns.dates().iter().zip(&portfolio) {
        writeln!(w, "{},{}", d.format("%Y-%m-%d"), r)?;
    }
    w.flush()?;
    let summary = PrepareSummary {
        split,
        assets: returns.n_assets(),
        dropped: loaded.dropped.iter().map(DroppedRecord::from).collect(),
        leading_days_dropped: loaded.leading_days_dropped,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    log::info!(
        "prepared {} days x {} assets (train to {}, validation to {})",
        split.n_days,
        returns.n_assets(),
        split.train_end,
        split.val_end
    );
    Ok(["returns.csv", "stats.json", "standardized.csv", "portfolio.csv", "summary.json"]
        .iter()
        .map(|f| Path::new(PREPARED_DIR).join(f))
        .collect())
}

/// Trains the network on the standardized training days, validating on the
/// validation days.
pub fn train(cfg: &RunConfig) -> Result<Written> {
    let prep = Prepared::load(cfg)?;
    let std = prep.standardized()?;
    let train_rows = std.days(0, prep.split.train_end).values().clone();
    let val = std.days(prep.split.train_end, prep.split.val_end);
    let val_rows = (val.n_rows() > 0).then(|| val.values().clone());
    let arch = cfg.vae.arch(prep.returns.n_assets())?;
    let init = init_params(&arch, cfg.seeds.init)?;
    log::info!(
        "training on {} rows ({} validation) for {} epochs",
        train_rows.rows(),
        val_rows.as_ref().map_or(0, |m| m.rows()),
        cfg.train.epochs
    );
    let (params, history) = train_split(&init, &train_rows, val_rows.as_ref(), &cfg.train)?;
    let dir = cfg.out_dir.join(MODEL_DIR);
    let mut w = create(&dir.join("params.json"))?;
    w.write_all(params.to_json().as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    let mut w = create(&dir.join("history.csv"))?;
    history.write_csv(&mut w)?;
    w.flush()?;
    Ok(vec![
        Path::new(MODEL_DIR).join("params.json"),
        Path::new(MODEL_DIR).join("history.csv"),
    ])
}

pub fn load_params(cfg: &RunConfig) -> Result<VaeParams> {
    let path = cfg.out_dir.join(MODEL_DIR).join("params.json");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {} (run `train` first)", path.display()))?;
    Ok(VaeParams::from_json(&text)?)
}

pub fn forecast_path(kind: ModelKind, alpha: f64) -> PathBuf {
    Path::new(FORECAST_DIR).join(format!("{}_{}.csv", kind.tag(), alpha_tag(alpha)))
}

/// One VaR series per model and level over the test days.
pub fn forecast(cfg: &RunConfig) -> Result<Written> {
    let prep = Prepared::load(cfg)?;
    let r = prep.portfolio()?;
    let SplitIndices {
        n_days,
        train_end,
        val_end,
    } = prep.split;
    let dates = prep.returns.dates()[val_end..n_days].to_vec();
    let realized = r[val_end..n_days].to_vec();
    let params = if cfg.has_model(ModelKind::Encoded) {
        Some(load_params(cfg)?)
    } else {
        None
    };
    let days: Vec<usize> = (val_end..n_days).collect();
    let results: Vec<(ModelKind, Vec<Vec<f64>>)> = cfg
        .models
        .par_iter()
        .map(|&kind| {
            let started = std::time::Instant::now();
            let values = if kind == ModelKind::Encoded {
                let params = params.as_ref().expect("loaded above");
                encoded_var_multi(
                    params,
                    &prep.stats,
                    &prep.weights,
                    &days,
                    &cfg.alphas,
                    cfg.n_samples,
                    cfg.seeds.scenarios,
                )
            } else {
                benchmark_forecasts(kind, &r, train_end, val_end, &cfg.alphas, &cfg.benchmarks)
            }
            .with_context(|| format!("forecasting with {kind}"))?;
            log::info!("{kind}: {:.1}s", started.elapsed().as_secs_f64());
            Ok((kind, values))
        })
        .collect::<Result<_>>()?;
    let mut written = Vec::new();
    for (kind, per_alpha) in results {
        for (&alpha, values) in cfg.alphas.iter().zip(per_alpha) {
            let series = VarSeries::new(kind.tag(), alpha, dates.clone(), values, realized.clone())?;
            let rel = forecast_path(kind, alpha);
            let mut w = create(&cfg.out_dir.join(&rel))?;
            series.write_csv(&mut w)?;
            w.flush()?;
            written.push(rel);
        }
    }
    Ok(written)
}

/// Loss tables and PM ratios per level from the forecast files.
pub fn backtest(cfg: &RunConfig) -> Result<Written> {
    let mut written = Vec::new();
    for &alpha in &cfg.alphas {
        let mut series = Vec::with_capacity(cfg.models.len());
        for &kind in &cfg.models {
            let path = cfg.out_dir.join(forecast_path(kind, alpha));
            let s = VarSeries::read_csv(open(&path).context("run `forecast` first")?)?;
            ensure!(
                s.model == kind.tag() && s.alpha == alpha,
                "{} holds `{}` at alpha {}",
                path.display(),
                s.model,
                s.alpha
            );
            series.push((kind.tag().to_string(), AlignedSeries::try_from(&s)?));
        }
        let report = BacktestReport::score(&series, cfg.sarma_beta)?;
        let stem = format!("report_{}", alpha_tag(alpha));
        let csv_rel = Path::new(BACKTEST_DIR).join(format!("{stem}.csv"));
        let json_rel = Path::new(BACKTEST_DIR).join(format!("{stem}.json"));
        let mut w = create(&cfg.out_dir.join(&csv_rel))?;
        report.write_csv(&mut w)?;
        w.flush()?;
        let mut w = create(&cfg.out_dir.join(&json_rel))?;
        w.write_all(report.to_json()?.as_bytes())?;
        w.write_all(b"\n")?;
        w.flush()?;
        written.push(csv_rel);
        written.push(json_rel);
    }
    Ok(written)
}

#[derive(Debug, Serialize)]
struct PanelSummary {
    rows: usize,
    sigma2: Option<f64>,
    lambda_plus: Option<f64>,
    signal_count: Option<usize>,
    top_eigenvalue: f64,
    /// Variance share of the panel on its own signal eigenvectors.
    own_signal_share: f64,
}

#[derive(Debug, Serialize)]
struct RmtSummary {
    n_assets: usize,
    real: PanelSummary,
    generated: PanelSummary,
    /// Generated-panel variance on the real panel's signal eigenvectors.
    generated_on_real_signal_share: f64,
    overlap_threshold: f64,
    /// Multivariate normality of the encoder means of the training rows.
    latent_normality: Option<HenzeZirkler>,
}

fn signal_vectors(report: &EigenReport, fit: Option<&MpFit>) -> Vec<Vec<f64>> {
    let k = fit.map_or(0, |f| f.signal_count);
    (0..k).map(|i| report.vector(i)).collect()
}

fn panel_outputs(
    cfg: &RunConfig,
    name: &str,
    data: &Matrix,
    written: &mut Written,
) -> Result<(EigenReport, Option<MpFit>, PanelSummary)> {
    let (t, n) = data.shape();
    ensure!(t > n, "{name} panel has {t} rows for {n} assets; need more rows than assets");
    let report = correlation_spectrum(data)?;
    let fit = if n >= MIN_FIT_EIGENVALUES {
        match fit_mp_sigma2(&report.eigenvalues, t, n) {
            Ok(fit) => Some(fit),
            Err(RmtError::Degenerate(why)) => {
                log::warn!("{name}: Marchenko-Pastur fit skipped ({why})");
                None
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        log::warn!("{name}: {n} assets are too few for a Marchenko-Pastur fit");
        None
    };
    let rel = |f: &str| Path::new(RMT_DIR).join(format!("{name}_{f}"));
    write_json(&cfg.out_dir.join(rel("eigen.json")), &report)?;
    written.push(rel("eigen.json"));
    let mut w = create(&cfg.out_dir.join(rel("histogram.csv")))?;
    write_histogram_csv(&report.eigenvalues, cfg.rmt.histogram_bins, &mut w)?;
    w.flush()?;
    written.push(rel("histogram.csv"));
    if let Some(fit) = &fit {
        write_json(&cfg.out_dir.join(rel("mp_fit.json")), fit)?;
        written.push(rel("mp_fit.json"));
        let mut w = create(&cfg.out_dir.join(rel("mp_curve.csv")))?;
        write_mp_curve_csv(fit, t, n, cfg.rmt.curve_points, &mut w)?;
        w.flush()?;
        written.push(rel("mp_curve.csv"));
    }
    let own = signal_variance_share(data, &signal_vectors(&report, fit.as_ref()))?;
    let summary = PanelSummary {
        rows: t,
        sigma2: fit.map(|f| f.sigma2),
        lambda_plus: fit.map(|f| f.lambda_plus),
        signal_count: fit.map(|f| f.signal_count),
        top_eigenvalue: report.eigenvalues[0],
        own_signal_share: own,
    };
    Ok((report, fit, summary))
}

/// Spectra, Marchenko-Pastur fits and eigenvector overlaps of the real
/// training panel and an equally long panel generated by the decoder.
pub fn rmt(cfg: &RunConfig) -> Result<Written> {
    let prep = Prepared::load(cfg)?;
    let params = load_params(cfg)?;
    let real = prep.train_rows()?;
    let generated = sample_standardized(&params, real.rows(), cfg.seeds.rmt)?;
    let mut written = Vec::new();
    let (real_report, real_fit, real_summary) = panel_outputs(cfg, "real", &real, &mut written)?;
    let (gen_report, _, gen_summary) = panel_outputs(cfg, "generated", &generated, &mut written)?;

    let overlap = eigenvector_overlap(&real_report, &gen_report, cfg.rmt.overlap_ranks)?;
    let rel = Path::new(RMT_DIR).join("overlap.csv");
    let mut w = create(&cfg.out_dir.join(&rel))?;
    overlap.write_csv(&mut w)?;
    w.flush()?;
    written.push(rel);

    let cross = signal_variance_share(&generated, &signal_vectors(&real_report, real_fit.as_ref()))?;
    let latent = Matrix::from_rows(
        &real
            .iter_rows()
            .map(|row| encode(&params, row).map(|l| l.mu().to_vec()))
            .collect::<std::result::Result<Vec<_>, _>>()?,
    );
    let latent_normality = if latent.rows() > latent.cols() {
        match henze_zirkler(&latent) {
            Ok(hz) => Some(hz),
            Err(e) => {
                log::warn!("latent normality test skipped: {e}");
                None
            }
        }
    } else {
        None
    };
    let summary = RmtSummary {
        n_assets: real.cols(),
        real: real_summary,
        generated: gen_summary,
        generated_on_real_signal_share: cross,
        overlap_threshold: overlap.threshold,
        latent_normality,
    };
    let rel = Path::new(RMT_DIR).join("summary.json");
    write_json(&cfg.out_dir.join(&rel), &summary)?;
    written.push(rel);
    Ok(written)
}

#[derive(Debug, Serialize)]
struct ManifestEntry {
    path: String,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    command: &'a str,
    version: &'a str,
    config_sha256: String,
    config: &'a RunConfig,
    files: Vec<ManifestEntry>,
}

/// Writes `manifest_<command>.json` listing every artifact with its hash.
pub fn write_manifest(cfg: &RunConfig, command: &str, written: &[PathBuf]) -> Result<PathBuf> {
    let mut files = Vec::with_capacity(written.len());
    let mut sorted = written.to_vec();
    sorted.sort();
    for rel in sorted {
        let bytes = fs::read(cfg.out_dir.join(&rel))?;
        files.push(ManifestEntry {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: hex::encode(Sha256::digest(&bytes)),
        });
    }
    let mut config = cfg.clone();
    config.out_dir = PathBuf::new();
    let manifest = Manifest {
        command,
        version: env!("CARGO_PKG_VERSION"),
        config_sha256: cfg.hash(),
        config: &config,
        files,
    };
    let rel = PathBuf::from(format!("manifest_{command}.json"));
    write_json(&cfg.out_dir.join(&rel), &manifest)?;
    Ok(rel)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Prepare,
    Train,
    Forecast,
    Backtest,
    Rmt,
    All,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Prepare => "prepare",
            Stage::Train => "train",
            Stage::Forecast => "forecast",
            Stage::Backtest => "backtest",
            Stage::Rmt => "rmt",
            Stage::All => "all",
        }
    }
}

/// Validates the config, runs the stage (all stages in order for `All`)
/// and writes the manifests.
pub fn run(stage: Stage, cfg: &RunConfig) -> Result<Written> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let single = |s: Stage| -> Result<Written> {
        let started = std::time::Instant::now();
        let written = match s {
            Stage::Prepare => prepare(cfg)?,
            Stage::Train => train(cfg)?,
            Stage::Forecast => forecast(cfg)?,
            Stage::Backtest => backtest(cfg)?,
            Stage::Rmt => rmt(cfg)?,
            Stage::All => bail!("nested pipeline"),
        };
        write_manifest(cfg, s.name(), &written)?;
        log::info!("{} finished in {:.1}s", s.name(), started.elapsed().as_secs_f64());
        Ok(written)
    };
    match stage {
        Stage::All => {
            let mut all = Vec::new();
            for s in [Stage::Prepare, Stage::Train, Stage::Forecast, Stage::Backtest, Stage::Rmt] {
                all.extend(single(s)?);
            }
            write_manifest(cfg, Stage::All.name(), &all)?;
            Ok(all)
        }
        s => single(s),
    }
}
