//! Run configuration: a JSON file whose missing fields take defaults, plus
//! command-line overrides.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use encvar_core::market_data::CsvSchema;
use encvar_core::stats::derive_seed;
use encvar_core::vae::{TrainConfig, VaeArch};
use encvar_core::var_models::{BenchmarkConfig, ModelKind};

/// Chronological split of the return days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Split {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for Split {
    fn default() -> Self {
        Self {
            train: 0.75,
            validation: 0.125,
            test: 0.125,
        }
    }
}

/// Hidden layer sizes (mirrored in the decoder) and latent dimension; the
/// input dimension comes from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeSettings {
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
}

impl Default for VaeSettings {
    fn default() -> Self {
        Self {
            hidden: vec![64],
            latent_dim: 10,
        }
    }
}

impl VaeSettings {
    pub fn arch(&self, input_dim: usize) -> Result<VaeArch> {
        Ok(VaeArch::mirrored(input_dim, &self.hidden, self.latent_dim)?)
    }
}

/// Named random streams. `train.seed` and `benchmarks.seed` live in their
/// own sections.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Seeds {
    /// Network weight initialization.
    pub init: u64,
    /// Decoder scenarios for Encoded VaR.
    pub scenarios: u64,
    /// Generated panel for the random-matrix diagnostics.
    pub rmt: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Self {
            init: 1,
            scenarios: 2,
            rmt: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RmtSettings {
    /// Eigenvector ranks compared between real and generated panels.
    pub overlap_ranks: usize,
    pub histogram_bins: usize,
    pub curve_points: usize,
}

impl Default for RmtSettings {
    fn default() -> Self {
        Self {
            overlap_ranks: 20,
            histogram_bins: 60,
            curve_points: 200,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Wide price CSV (`date,<ticker>,...`).
    pub prices: PathBuf,
    pub out_dir: PathBuf,
    pub csv: CsvSchema,
    pub split: Split,
    /// Rolling window for the standardization statistics.
    pub window: usize,
    /// EWMA decay for the standardization statistics.
    pub decay: f64,
    pub vae: VaeSettings,
    pub train: TrainConfig,
    pub models: Vec<ModelKind>,
    pub alphas: Vec<f64>,
    /// Portfolio weights by ticker; equal weights when absent.
    pub weights: Option<BTreeMap<String, f64>>,
    /// Decoder scenarios per forecast day.
    pub n_samples: usize,
    pub benchmarks: BenchmarkConfig,
    pub seeds: Seeds,
    pub sarma_beta: f64,
    pub rmt: RmtSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            prices: PathBuf::from("prices.csv"),
            out_dir: PathBuf::from("out"),
            csv: CsvSchema::default(),
            split: Split::default(),
            window: 250,
            decay: 0.94,
            vae: VaeSettings::default(),
            train: TrainConfig::default(),
            models: ModelKind::ALL.to_vec(),
            alphas: vec![0.05, 0.01],
            weights: None,
            n_samples: 10_000,
            benchmarks: BenchmarkConfig::default(),
            seeds: Seeds::default(),
            sarma_beta: encvar_core::backtest::DEFAULT_SARMA_BETA,
            rmt: RmtSettings::default(),
        }
    }
}

/// Command-line values that replace config entries when present.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub prices: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub alphas: Vec<f64>,
    pub models: Vec<ModelKind>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// Applies overrides. A master seed fans out to every named stream.
    pub fn apply(&mut self, o: &Overrides) {
        if let Some(p) = &o.prices {
            self.prices = p.clone();
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
        if !o.alphas.is_empty() {
            self.alphas = o.alphas.clone();
        }
        if !o.models.is_empty() {
            self.models = o.models.clone();
        }
        if let Some(s) = o.seed {
            self.seeds.init = derive_seed(s, 0);
            self.train.seed = derive_seed(s, 1);
            self.seeds.scenarios = derive_seed(s, 2);
            self.benchmarks.seed = derive_seed(s, 3);
            self.seeds.rmt = derive_seed(s, 4);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.split;
        ensure!(
            s.train > 0.0 && s.validation >= 0.0 && s.test > 0.0,
            "split fractions must be positive (validation may be 0)"
        );
        ensure!(
            (s.train + s.validation + s.test - 1.0).abs() < 1e-9,
            "split fractions must sum to 1, got {}",
            s.train + s.validation + s.test
        );
        ensure!(!self.alphas.is_empty(), "at least one alpha level is required");
        for &a in &self.alphas {
            ensure!(a > 0.0 && a < 0.5, "alpha {a} must lie in (0, 0.5)");
        }
        ensure!(!self.models.is_empty(), "at least one model is required");
        let mut seen = self.models.clone();
        seen.sort();
        seen.dedup();
        ensure!(seen.len() == self.models.len(), "model list contains duplicates");
        let mut alphas = self.alphas.clone();
        alphas.sort_by(f64::total_cmp);
        alphas.dedup();
        ensure!(alphas.len() == self.alphas.len(), "alpha list contains duplicates");
        ensure!(self.window >= 2, "window must be at least 2");
        ensure!(self.decay > 0.0 && self.decay <= 1.0, "decay must lie in (0, 1]");
        ensure!(self.n_samples > 0, "n_samples must be positive");
        ensure!(self.sarma_beta >= 0.0, "sarma_beta must be non-negative");
        self.train.validate()?;
        if self.vae.latent_dim == 0 {
            bail!("latent_dim must be positive");
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON with the output directory blanked, so
    /// identical runs into different directories share a hash.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        let json = serde_json::to_string(&c).expect("config serializes");
        hex::encode(Sha256::digest(json.as_bytes()))
    }

    pub fn has_model(&self, kind: ModelKind) -> bool {
        self.models.contains(&kind)
    }
}

/// `0.05` -> `a0.05`, used in artifact file names.
pub fn alpha_tag(alpha: f64) -> String {
    format!("a{alpha}")
}
