use serde::Serialize;

use super::{VaeError, VaeParams};
use crate::matrix::Matrix;

/// Diagonal Gaussian `N(mu, diag(sigma^2))`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentGaussian {
    mu: Vec<f64>,
    sigma: Vec<f64>,
}

impl LatentGaussian {
    pub fn new(mu: Vec<f64>, sigma: Vec<f64>) -> Result<Self, VaeError> {
        if mu.len() != sigma.len() {
            return Err(VaeError::ShapeMismatch(format!(
                "mu has {} entries, sigma {}",
                mu.len(),
                sigma.len()
            )));
        }
        if sigma.iter().any(|s| !(*s > 0.0) || !s.is_finite()) {
            return Err(VaeError::NonPositiveSigma);
        }
        Ok(Self { mu, sigma })
    }

    pub fn standard(dim: usize) -> Self {
        Self {
            mu: vec![0.0; dim],
            sigma: vec![1.0; dim],
        }
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// `z = mu + sigma * eps`, elementwise.
pub fn reparameterize(lat: &LatentGaussian, eps: &[f64]) -> Result<Vec<f64>, VaeError> {
    if eps.len() != lat.dim() {
        return Err(VaeError::ShapeMismatch(format!(
            "eps has {} entries, latent dimension is {}",
            eps.len(),
            lat.dim()
        )));
    }
    Ok(lat
        .mu
        .iter()
        .zip(&lat.sigma)
        .zip(eps)
        .map(|((m, s), e)| m + s * e)
        .collect())
}

/// `KL(N(mu, diag sigma^2) || N(0, I)) = 1/2 sum(-ln sigma^2 + sigma^2 + mu^2 - 1)`.
pub fn kl_gaussian(lat: &LatentGaussian) -> f64 {
    lat.mu
        .iter()
        .zip(&lat.sigma)
        .map(|(m, s)| kl_term(*m, s.ln()))
        .sum()
}

#[inline]
fn kl_term(mu: f64, log_sigma: f64) -> f64 {
    0.5 * (-2.0 * log_sigma + (2.0 * log_sigma).exp() + mu * mu - 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossParts {
    pub total: f64,
    /// `C` times the batch mean of the summed squared reconstruction error.
    pub recon: f64,
    /// Batch mean of the KL term.
    pub kl: f64,
}

fn check_batch(params: &VaeParams, batch: &Matrix, eps: &Matrix) -> Result<(), VaeError> {
    let arch = &params.arch;
    if batch.cols() != arch.input_dim || eps.cols() != arch.latent_dim || batch.rows() != eps.rows() {
        return Err(VaeError::ShapeMismatch(format!(
            "batch {:?} and eps {:?} for input {} / latent {}",
            batch.shape(),
            eps.shape(),
            arch.input_dim,
            arch.latent_dim
        )));
    }
    if batch.rows() == 0 {
        return Err(VaeError::EmptyData);
    }
    Ok(())
}

/// Negative evidence lower bound over a batch, with one latent draw per row.
pub fn elbo_loss(
    params: &VaeParams,
    batch: &Matrix,
    eps_batch: &Matrix,
    recon_coefficient: f64,
) -> Result<LossParts, VaeError> {
    check_batch(params, batch, eps_batch)?;
    let m = batch.rows() as f64;
    let (mut sq, mut kl) = (0.0, 0.0);
    for (x, eps) in batch.iter_rows().zip(eps_batch.iter_rows()) {
        let (s, k) = sample_loss(params, x, eps);
        sq += s;
        kl += k;
    }
    let recon = recon_coefficient * sq / m;
    let kl = kl / m;
    Ok(LossParts {
        total: recon + kl,
        recon,
        kl,
    })
}

fn sample_loss(params: &VaeParams, x: &[f64], eps: &[f64]) -> (f64, f64) {
    let enc = params.encode_trace(x);
    let z: Vec<f64> = enc
        .mu
        .iter()
        .zip(&enc.log_sigma)
        .zip(eps)
        .map(|((m, s), e)| m + s.exp() * e)
        .collect();
    let dec = params.decode_trace(&z);
    let sq = x
        .iter()
        .zip(dec.output())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>();
    let kl = enc.mu.iter().zip(&enc.log_sigma).map(|(m, s)| kl_term(*m, *s)).sum();
    (sq, kl)
}

/// Analytic gradient of [`elbo_loss`] with respect to every parameter, by
/// backpropagation through the decoder, the reparameterization and both
/// encoder heads. Returns the gradient (shaped like `params`) and the loss.
pub fn grad(
    params: &VaeParams,
    batch: &Matrix,
    eps_batch: &Matrix,
    recon_coefficient: f64,
) -> Result<(VaeParams, LossParts), VaeError> {
    check_batch(params, batch, eps_batch)?;
    let mut g = params.zeros_like();
    let loss = accumulate_grad(params, batch, eps_batch, recon_coefficient, &mut g);
    Ok((g, loss))
}

pub(crate) fn accumulate_grad(
    params: &VaeParams,
    batch: &Matrix,
    eps_batch: &Matrix,
    c: f64,
    g: &mut VaeParams,
) -> LossParts {
    let inv_m = 1.0 / batch.rows() as f64;
    let hidden_act = params.arch.hidden_activation;
    let out_act = params.arch.output_activation;
    let (mut sq_total, mut kl_total) = (0.0, 0.0);
    let mut d = Vec::new();
    let mut d_prev = Vec::new();

    for (x, eps) in batch.iter_rows().zip(eps_batch.iter_rows()) {
        let enc = params.encode_trace(x);
        let sigma: Vec<f64> = enc.log_sigma.iter().map(|s| s.exp()).collect();
        let z: Vec<f64> = enc
            .mu
            .iter()
            .zip(&sigma)
            .zip(eps)
            .map(|((m, s), e)| m + s * e)
            .collect();
        let dec = params.decode_trace(&z);

        let x_hat = dec.output();
        d.clear();
        for (xh, xi) in x_hat.iter().zip(x) {
            let r = xh - xi;
            sq_total += r * r;
            d.push(inv_m * 2.0 * c * r);
        }
        for (m, s) in enc.mu.iter().zip(&enc.log_sigma) {
            kl_total += kl_term(*m, *s);
        }

        // Decoder, output layer first.
        let n_dec = params.decoder.len();
        for (di, y) in d.iter_mut().zip(x_hat) {
            *di *= out_act.derivative_from_output(*y);
        }
        for l in (0..n_dec).rev() {
            let input = &dec.layers[l];
            params.decoder[l].backward(input, &d, &mut g.decoder[l], Some(&mut d_prev));
            if l > 0 {
                for (dp, y) in d_prev.iter_mut().zip(input) {
                    *dp *= hidden_act.derivative_from_output(*y);
                }
            }
            std::mem::swap(&mut d, &mut d_prev);
        }
        // `d` now holds dL/dz.
        let d_mu: Vec<f64> = d
            .iter()
            .zip(&enc.mu)
            .map(|(dz, m)| dz + inv_m * m)
            .collect();
        let d_log_sigma: Vec<f64> = d
            .iter()
            .zip(&sigma)
            .zip(eps)
            .map(|((dz, s), e)| dz * s * e + inv_m * (s * s - 1.0))
            .collect();

        let top = enc.hidden.last().expect("non-empty");
        let mut d_top_mu = Vec::new();
        let mut d_top_sigma = Vec::new();
        params.mu_head.backward(top, &d_mu, &mut g.mu_head, Some(&mut d_top_mu));
        params
            .log_sigma_head
            .backward(top, &d_log_sigma, &mut g.log_sigma_head, Some(&mut d_top_sigma));
        d.clear();
        d.extend(d_top_mu.iter().zip(&d_top_sigma).map(|(a, b)| a + b));

        for l in (0..params.encoder.len()).rev() {
            let output = &enc.hidden[l + 1];
            for (di, y) in d.iter_mut().zip(output) {
                *di *= hidden_act.derivative_from_output(*y);
            }
            let input = &enc.hidden[l];
            let want_input = l > 0;
            params.encoder[l].backward(
                input,
                &d,
                &mut g.encoder[l],
                if want_input { Some(&mut d_prev) } else { None },
            );
            if want_input {
                std::mem::swap(&mut d, &mut d_prev);
            }
        }
    }

    let recon = c * sq_total * inv_m;
    let kl = kl_total * inv_m;
    LossParts {
        total: recon + kl,
        recon,
        kl,
    }
}
