//! Versioned JSON format for trained parameters:
//!
//! ```json
//! { "format_version": 1,
//!   "arch": { "input_dim": 4, "encoder_hidden": [8], ... },
//!   "layers": [ { "name": "encoder.0", "rows": 4, "cols": 8,
//!                 "weights": [...row-major...], "bias": [...] }, ... ] }
//! ```
//!
//! Layers appear in flat parameter order: encoder trunk, `mu_head`,
//! `log_sigma_head`, decoder.

use serde::{Deserialize, Serialize};

use super::{Dense, VaeArch, VaeError, VaeParams};
use crate::matrix::Matrix;

pub const PARAMS_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct LayerRecord {
    name: String,
    rows: usize,
    cols: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParamsFile {
    format_version: u32,
    arch: VaeArch,
    layers: Vec<LayerRecord>,
}

impl VaeParams {
    pub fn to_json(&self) -> String {
        let file = ParamsFile {
            format_version: PARAMS_FORMAT_VERSION,
            arch: self.arch.clone(),
            layers: self
                .layers()
                .map(|(name, l)| LayerRecord {
                    name,
                    rows: l.weights.rows(),
                    cols: l.weights.cols(),
                    weights: l.weights.as_slice().to_vec(),
                    bias: l.bias.clone(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("parameters serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, VaeError> {
        let file: ParamsFile = serde_json::from_str(s)?;
        if file.format_version != PARAMS_FORMAT_VERSION {
            return Err(VaeError::UnsupportedVersion(file.format_version));
        }
        let mut params = VaeParams::zeros(&file.arch)?;
        let expected: Vec<String> = params.layers().map(|(n, _)| n).collect();
        if expected.len() != file.layers.len() {
            return Err(VaeError::ShapeMismatch(format!(
                "{} layers in file, architecture needs {}",
                file.layers.len(),
                expected.len()
            )));
        }
        let mut dense: Vec<Dense> = Vec::with_capacity(file.layers.len());
        for (rec, name) in file.layers.into_iter().zip(&expected) {
            if &rec.name != name || rec.weights.len() != rec.rows * rec.cols || rec.bias.len() != rec.cols {
                return Err(VaeError::ShapeMismatch(format!("layer {}", rec.name)));
            }
            dense.push(Dense {
                weights: Matrix::from_vec(rec.rows, rec.cols, rec.weights),
                bias: rec.bias,
            });
        }
        let n_enc = params.encoder.len();
        let mut it = dense.into_iter();
        params.encoder = it.by_ref().take(n_enc).collect();
        params.mu_head = it.next().expect("counted");
        params.log_sigma_head = it.next().expect("counted");
        params.decoder = it.collect();
        params.check_shapes()?;
        if !params.is_finite() {
            return Err(VaeError::NonFinite);
        }
        Ok(params)
    }
}
