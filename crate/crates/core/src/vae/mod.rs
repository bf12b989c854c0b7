//! Dense variational auto-encoder.
//!
//! The encoder maps a cross-sectional return vector `x` (length `N`) to a
//! diagonal Gaussian posterior over a `Q`-dimensional latent space; the
//! decoder deterministically maps a latent vector back to `N` returns.
//! Training minimizes `C * |x - x_hat|^2 + KL(q(z|x) || N(0, I))` averaged
//! over mini-batches, with gradients obtained by hand-written
//! backpropagation through the reparameterization `z = mu + sigma * eps`.

mod arch;
mod io;
mod loss;
mod params;
mod train;

use thiserror::Error;

pub use arch::{Activation, VaeArch};
pub use io::PARAMS_FORMAT_VERSION;
pub use loss::{elbo_loss, grad, kl_gaussian, reparameterize, LatentGaussian, LossParts};
pub use params::{decode, encode, init_params, Dense, VaeParams};
pub use train::{
    decode_batch, sample_standardized, train, train_split, EpochRecord, Optimizer, TrainConfig,
    TrainHistory,
};

#[derive(Debug, Error)]
pub enum VaeError {
    #[error("invalid architecture: {0}")]
    InvalidArch(String),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite input")]
    NonFinite,
    #[error("standard deviations must be positive")]
    NonPositiveSigma,
    #[error("no training data")]
    EmptyData,
    #[error("{rows} rows is fewer than one batch of {batch}")]
    NotEnoughRows { rows: usize, batch: usize },
    #[error("training diverged in epoch {epoch} (loss {loss})")]
    Diverged { epoch: usize, loss: f64 },
    #[error("requested zero samples")]
    ZeroSamples,
    #[error("unsupported parameter file version {0}")]
    UnsupportedVersion(u32),
    #[error("malformed parameter file: {0}")]
    Json(#[from] serde_json::Error),
}
