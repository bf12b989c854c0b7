//! Pipeline commands behind the `encvar` binary: data preparation, network
//! training, VaR forecasting, backtesting and random-matrix diagnostics.
//!
//! Artifacts land in the configured output directory:
//!
//! - `prepared/`: returns, rolling statistics, standardized panel, portfolio series, split
//! - `model/`: trained parameters and the loss history
//! - `forecasts/<model>_a<alpha>.csv`: one VaR series per model and level
//! - `backtest/report_a<alpha>.{csv,json}`: loss tables and PM ratios
//! - `rmt/`: spectra, Marchenko-Pastur fits, histograms, overlaps
//! - `manifest_<command>.json`: config hash and artifact hashes

pub mod commands;
pub mod config;

use std::path::Path;

use anyhow::Result;

use encvar_core::sim::factor_price_panel;

pub use commands::{run, Stage};
pub use config::{Overrides, RunConfig};

/// Writes a synthetic one-factor price panel to `path`.
pub fn simulate(n_assets: usize, n_days: usize, seed: u64, path: &Path) -> Result<()> {
    anyhow::ensure!(n_assets >= 1 && n_days >= 2, "need at least 1 asset and 2 days");
    let panel = factor_price_panel(n_assets, n_days, seed);
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    panel.write_csv(&mut w)?;
    std::io::Write::flush(&mut w)?;
    Ok(())
}

/// Caps the global thread pool from `ENCVAR_THREADS` when it is set.
pub fn configure_threads() -> Result<()> {
    if let Ok(v) = std::env::var("ENCVAR_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| anyhow::anyhow!("ENCVAR_THREADS must be a positive integer, got `{v}`"))?;
        anyhow::ensure!(n > 0, "ENCVAR_THREADS must be positive");
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}
