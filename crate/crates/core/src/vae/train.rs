use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::loss::accumulate_grad;
use super::{elbo_loss, VaeError, VaeParams};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Optimizer {
    /// Plain stochastic gradient descent.
    Sgd,
    /// Adaptive moment estimation (beta1 0.9, beta2 0.999).
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Weight `C` of the reconstruction term.
    pub recon_coefficient: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Trailing fraction of rows held out for the validation curve.
    pub validation_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            recon_coefficient: 100.0,
            batch_size: 64,
            epochs: 300,
            learning_rate: 1e-3,
            optimizer: Optimizer::Adam,
            seed: 7,
            validation_fraction: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), VaeError> {
        if !(self.recon_coefficient > 0.0) {
            return Err(VaeError::InvalidConfig("recon_coefficient must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(VaeError::InvalidConfig("learning_rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(VaeError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return Err(VaeError::InvalidConfig("validation_fraction must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean mini-batch loss over the epoch.
    pub train_loss: f64,
    /// Loss on the held-out rows at the end of the epoch, if any.
    pub val_loss: Option<f64>,
    pub kl: f64,
    pub recon: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    /// `epoch,train_loss,val_loss,kl,recon`; an empty `val_loss` cell when no
    /// validation rows were held out.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch,train_loss,val_loss,kl,recon")?;
        for e in &self.epochs {
            let val = e.val_loss.map(|v| v.to_string()).unwrap_or_default();
            writeln!(w, "{},{},{},{},{}", e.epoch, e.train_loss, val, e.kl, e.recon)?;
        }
        Ok(())
    }
}

fn draw_normals(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

enum Stepper {
    Sgd,
    Adam { m: Vec<f64>, v: Vec<f64>, t: i32 },
}

impl Stepper {
    fn new(kind: Optimizer, n: usize) -> Self {
        match kind {
            Optimizer::Sgd => Stepper::Sgd,
            Optimizer::Adam => Stepper::Adam {
                m: vec![0.0; n],
                v: vec![0.0; n],
                t: 0,
            },
        }
    }

    fn step(&mut self, params: &mut VaeParams, grads: &VaeParams, lr: f64) {
        const B1: f64 = 0.9;
        const B2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        let gblocks = grads.blocks();
        match self {
            Stepper::Sgd => {
                for (p, g) in params.blocks_mut().into_iter().zip(gblocks) {
                    for (pi, gi) in p.iter_mut().zip(g) {
                        *pi -= lr * gi;
                    }
                }
            }
            Stepper::Adam { m, v, t } => {
                *t += 1;
                let c1 = 1.0 - B1.powi(*t);
                let c2 = 1.0 - B2.powi(*t);
                let mut offset = 0;
                for (p, g) in params.blocks_mut().into_iter().zip(gblocks) {
                    for (k, (pi, gi)) in p.iter_mut().zip(g).enumerate() {
                        let mi = &mut m[offset + k];
                        let vi = &mut v[offset + k];
                        *mi = B1 * *mi + (1.0 - B1) * gi;
                        *vi = B2 * *vi + (1.0 - B2) * gi * gi;
                        *pi -= lr * (*mi / c1) / ((*vi / c2).sqrt() + EPS);
                    }
                    offset += p.len();
                }
            }
        }
    }
}

/// Trains on the rows of `data`, holding out the trailing
/// `config.validation_fraction` of rows for the validation curve.
pub fn train(
    params: &VaeParams,
    data: &Matrix,
    config: &TrainConfig,
) -> Result<(VaeParams, TrainHistory), VaeError> {
    config.validate()?;
    let n_val = (data.rows() as f64 * config.validation_fraction).floor() as usize;
    let split = data.rows() - n_val;
    let train_rows = data.slice_rows(0, split);
    let val_rows = (n_val > 0).then(|| data.slice_rows(split, data.rows()));
    train_split(params, &train_rows, val_rows.as_ref(), config)
}

/// Mini-batch training with an explicit validation set. One fresh latent
/// draw per sample per step; deterministic given `config.seed`.
pub fn train_split(
    params: &VaeParams,
    train_rows: &Matrix,
    val_rows: Option<&Matrix>,
    config: &TrainConfig,
) -> Result<(VaeParams, TrainHistory), VaeError> {
    config.validate()?;
    params.check_shapes()?;
    let arch = &params.arch;
    if train_rows.rows() == 0 {
        return Err(VaeError::EmptyData);
    }
    if train_rows.cols() != arch.input_dim {
        return Err(VaeError::ShapeMismatch(format!(
            "data has {} columns, network expects {}",
            train_rows.cols(),
            arch.input_dim
        )));
    }
    if train_rows.rows() < config.batch_size {
        return Err(VaeError::NotEnoughRows {
            rows: train_rows.rows(),
            batch: config.batch_size,
        });
    }
    if !train_rows.is_finite() {
        return Err(VaeError::NonFinite);
    }

    let mut current = params.clone();
    let mut history = TrainHistory::default();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut val_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x5EED_0F_7A11);
    let mut stepper = Stepper::new(config.optimizer, current.n_params());
    let mut order: Vec<usize> = (0..train_rows.rows()).collect();
    let q = arch.latent_dim;
    let n = arch.input_dim;
    let mut grads = current.zeros_like();

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let (mut loss_sum, mut kl_sum, mut recon_sum, mut batches) = (0.0, 0.0, 0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let batch = Matrix::from_fn(chunk.len(), n, |i, j| train_rows[(chunk[i], j)]);
            let eps = draw_normals(&mut rng, chunk.len(), q);
            for block in grads.blocks_mut() {
                block.fill(0.0);
            }
            let loss = accumulate_grad(&current, &batch, &eps, config.recon_coefficient, &mut grads);
            if !loss.total.is_finite() {
                return Err(VaeError::Diverged { epoch, loss: loss.total });
            }
            stepper.step(&mut current, &grads, config.learning_rate);
            loss_sum += loss.total;
            kl_sum += loss.kl;
            recon_sum += loss.recon;
            batches += 1;
        }
        if !current.is_finite() {
            return Err(VaeError::Diverged {
                epoch,
                loss: f64::NAN,
            });
        }
        let val_loss = match val_rows {
            Some(v) if v.rows() > 0 => {
                let eps = draw_normals(&mut val_rng, v.rows(), q);
                Some(elbo_loss(&current, v, &eps, config.recon_coefficient)?.total)
            }
            _ => None,
        };
        let b = batches as f64;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss: loss_sum / b,
            val_loss,
            kl: kl_sum / b,
            recon: recon_sum / b,
        });
    }
    Ok((current, history))
}

/// Decodes every row of `z` (rows decoded in parallel, each independently).
pub fn decode_batch(params: &VaeParams, z: &Matrix) -> Result<Matrix, VaeError> {
    if z.cols() != params.arch.latent_dim {
        return Err(VaeError::ShapeMismatch(format!(
            "latent batch has {} columns, expected {}",
            z.cols(),
            params.arch.latent_dim
        )));
    }
    if !z.is_finite() {
        return Err(VaeError::NonFinite);
    }
    let n = params.arch.input_dim;
    let rows: Vec<Vec<f64>> = (0..z.rows())
        .into_par_iter()
        .map(|i| params.decode_trace(z.row(i)).layers.pop().expect("output"))
        .collect();
    let mut out = Matrix::zeros(z.rows(), n);
    for (i, r) in rows.into_iter().enumerate() {
        out.row_mut(i).copy_from_slice(&r);
    }
    Ok(out)
}

/// Draws `n` latent vectors from the standard normal prior and decodes each.
/// Deterministic given `seed`.
pub fn sample_standardized(params: &VaeParams, n: usize, seed: u64) -> Result<Matrix, VaeError> {
    if n == 0 {
        return Err(VaeError::ZeroSamples);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = draw_normals(&mut rng, n, params.arch.latent_dim);
    decode_batch(params, &z)
}
