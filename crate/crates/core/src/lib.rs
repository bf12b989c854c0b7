//! Encoded VaR: a market-risk engine that learns the joint distribution of
//! cross-sectional returns with a variational auto-encoder, generates return
//! scenarios to forecast Value-at-Risk, and scores the forecasts against
//! classical benchmark models.
//!
//! Modules:
//! - [`market_data`]: price ingestion, log returns, EWMA standardization.
//! - [`vae`]: dense VAE with analytic backpropagation and scenario sampling.
//! - [`var_models`]: Encoded VaR plus eleven benchmark VaR models.
//! - [`backtest`]: regulatory and firm loss functions, Sener ranking.
//! - [`rmt`]: correlation spectra, Marchenko-Pastur fits, eigenvector overlap
//!   and the Henze-Zirkler normality test.
//! - [`sim`]: synthetic return and price generators.

pub mod backtest;
pub mod market_data;
pub mod matrix;
pub mod optim;
pub mod rmt;
pub mod sim;
pub mod stats;
pub mod vae;
pub mod var_models;

pub use matrix::Matrix;
