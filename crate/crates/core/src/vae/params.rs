use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Activation, LatentGaussian, VaeArch, VaeError};
use crate::matrix::Matrix;

/// Fully connected layer `y = x W + b` with `W` stored `fan_in x fan_out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: Matrix::zeros(fan_in, fan_out),
            bias: vec![0.0; fan_out],
        }
    }

    fn uniform<R: Rng>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let a = (3.0 / fan_in as f64).sqrt();
        let weights = Matrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-a..a));
        Self {
            weights,
            bias: vec![0.0; fan_out],
        }
    }

    pub fn fan_in(&self) -> usize {
        self.weights.rows()
    }

    pub fn fan_out(&self) -> usize {
        self.weights.cols()
    }

    /// Writes `act(x W + b)` into `out`.
    #[inline]
    pub(crate) fn forward_into(&self, x: &[f64], act: Activation, out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.bias);
        for (k, &xk) in x.iter().enumerate() {
            if xk == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(self.weights.row(k)) {
                *o += xk * w;
            }
        }
        if act != Activation::Linear {
            for o in out.iter_mut() {
                *o = act.apply(*o);
            }
        }
    }

    /// Accumulates `dW += x^T d`, `db += d` into `grad`; returns `d W^T` when
    /// requested.
    #[inline]
    pub(crate) fn backward(
        &self,
        x: &[f64],
        d: &[f64],
        grad: &mut Dense,
        d_input: Option<&mut Vec<f64>>,
    ) {
        for (gb, di) in grad.bias.iter_mut().zip(d) {
            *gb += di;
        }
        for (k, &xk) in x.iter().enumerate() {
            if xk == 0.0 {
                continue;
            }
            for (g, di) in grad.weights.row_mut(k).iter_mut().zip(d) {
                *g += xk * di;
            }
        }
        if let Some(dx) = d_input {
            dx.clear();
            dx.extend(
                (0..self.fan_in()).map(|k| self.weights.row(k).iter().zip(d).map(|(w, di)| w * di).sum::<f64>()),
            );
        }
    }

    fn is_finite(&self) -> bool {
        self.weights.is_finite() && self.bias.iter().all(|b| b.is_finite())
    }
}

/// Encoder trunk, the two latent heads and the decoder.
///
/// Flat parameter order (used by serialization and the optimizers): encoder
/// layers, mu head, log-sigma head, decoder layers; within a layer the
/// row-major weights come before the bias.
#[derive(Debug, Clone, PartialEq)]
pub struct VaeParams {
    pub arch: VaeArch,
    pub encoder: Vec<Dense>,
    pub mu_head: Dense,
    pub log_sigma_head: Dense,
    pub decoder: Vec<Dense>,
}

impl VaeParams {
    pub fn zeros(arch: &VaeArch) -> Result<Self, VaeError> {
        arch.validate()?;
        let h = arch.head_input();
        Ok(Self {
            arch: arch.clone(),
            encoder: arch.encoder_shapes().into_iter().map(|(i, o)| Dense::zeros(i, o)).collect(),
            mu_head: Dense::zeros(h, arch.latent_dim),
            log_sigma_head: Dense::zeros(h, arch.latent_dim),
            decoder: arch.decoder_shapes().into_iter().map(|(i, o)| Dense::zeros(i, o)).collect(),
        })
    }

    /// Zero-shaped copy, used as a gradient accumulator.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.arch).expect("arch already validated")
    }

    pub fn layers(&self) -> impl Iterator<Item = (String, &Dense)> {
        let enc = self.encoder.iter().enumerate().map(|(i, l)| (format!("encoder.{i}"), l));
        let heads = [("mu_head".to_string(), &self.mu_head), ("log_sigma_head".to_string(), &self.log_sigma_head)];
        let dec = self.decoder.iter().enumerate().map(|(i, l)| (format!("decoder.{i}"), l));
        enc.chain(heads).chain(dec)
    }

    fn layers_mut(&mut self) -> Vec<&mut Dense> {
        let mut out: Vec<&mut Dense> = self.encoder.iter_mut().collect();
        out.push(&mut self.mu_head);
        out.push(&mut self.log_sigma_head);
        out.extend(self.decoder.iter_mut());
        out
    }

    /// Parameter blocks in flat order.
    pub fn blocks(&self) -> Vec<&[f64]> {
        self.layers()
            .flat_map(|(_, l)| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers_mut()
            .into_iter()
            .flat_map(|l| {
                let Dense { weights, bias } = l;
                [weights.as_mut_slice(), bias.as_mut_slice()]
            })
            .collect()
    }

    pub fn n_params(&self) -> usize {
        self.blocks().iter().map(|b| b.len()).sum()
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.blocks().concat()
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<(), VaeError> {
        if flat.len() != self.n_params() {
            return Err(VaeError::ShapeMismatch(format!(
                "{} values for {} parameters",
                flat.len(),
                self.n_params()
            )));
        }
        let mut offset = 0;
        for block in self.blocks_mut() {
            let len = block.len();
            block.copy_from_slice(&flat[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.layers().all(|(_, l)| l.is_finite())
    }

    pub(crate) fn check_shapes(&self) -> Result<(), VaeError> {
        let reference = Self::zeros(&self.arch)?;
        for ((name, a), (_, b)) in self.layers().zip(reference.layers()) {
            if a.weights.shape() != b.weights.shape() || a.bias.len() != b.bias.len() {
                return Err(VaeError::ShapeMismatch(format!("layer {name}")));
            }
        }
        if self.encoder.len() != reference.encoder.len() || self.decoder.len() != reference.decoder.len() {
            return Err(VaeError::ShapeMismatch("layer count".into()));
        }
        Ok(())
    }
}

/// Weights uniform on `(-sqrt(3/fan_in), sqrt(3/fan_in))`, biases zero.
/// Deterministic given `seed`.
pub fn init_params(arch: &VaeArch, seed: u64) -> Result<VaeParams, VaeError> {
    arch.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = arch.head_input();
    let encoder = arch
        .encoder_shapes()
        .into_iter()
        .map(|(i, o)| Dense::uniform(i, o, &mut rng))
        .collect();
    let mu_head = Dense::uniform(h, arch.latent_dim, &mut rng);
    let log_sigma_head = Dense::uniform(h, arch.latent_dim, &mut rng);
    let decoder = arch
        .decoder_shapes()
        .into_iter()
        .map(|(i, o)| Dense::uniform(i, o, &mut rng))
        .collect();
    Ok(VaeParams {
        arch: arch.clone(),
        encoder,
        mu_head,
        log_sigma_head,
        decoder,
    })
}

/// Activations of one encoder pass, kept for backpropagation.
pub(crate) struct EncoderTrace {
    /// `hidden[0]` is the input, `hidden[l]` the output of trunk layer `l`.
    pub hidden: Vec<Vec<f64>>,
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
}

/// Activations of one decoder pass; `layers[0]` is `z`, the last entry the output.
pub(crate) struct DecoderTrace {
    pub layers: Vec<Vec<f64>>,
}

impl DecoderTrace {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("decoder has an output layer")
    }
}

impl VaeParams {
    pub(crate) fn encode_trace(&self, x: &[f64]) -> EncoderTrace {
        let act = self.arch.hidden_activation;
        let mut hidden = Vec::with_capacity(self.encoder.len() + 1);
        hidden.push(x.to_vec());
        for layer in &self.encoder {
            let mut out = Vec::with_capacity(layer.fan_out());
            layer.forward_into(hidden.last().expect("non-empty"), act, &mut out);
            hidden.push(out);
        }
        let top = hidden.last().expect("non-empty");
        let mut mu = Vec::with_capacity(self.arch.latent_dim);
        let mut log_sigma = Vec::with_capacity(self.arch.latent_dim);
        self.mu_head.forward_into(top, Activation::Linear, &mut mu);
        self.log_sigma_head.forward_into(top, Activation::Linear, &mut log_sigma);
        EncoderTrace { hidden, mu, log_sigma }
    }

    pub(crate) fn decode_trace(&self, z: &[f64]) -> DecoderTrace {
        let mut layers = Vec::with_capacity(self.decoder.len() + 1);
        layers.push(z.to_vec());
        let last = self.decoder.len() - 1;
        for (i, layer) in self.decoder.iter().enumerate() {
            let act = if i == last {
                self.arch.output_activation
            } else {
                self.arch.hidden_activation
            };
            let mut out = Vec::with_capacity(layer.fan_out());
            layer.forward_into(layers.last().expect("non-empty"), act, &mut out);
            layers.push(out);
        }
        DecoderTrace { layers }
    }
}

fn check_input(x: &[f64], expected: usize) -> Result<(), VaeError> {
    if x.len() != expected {
        return Err(VaeError::ShapeMismatch(format!("vector of {} vs expected {expected}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(VaeError::NonFinite);
    }
    Ok(())
}

/// Posterior `q(z|x)`: mu-head output and `exp` of the log-sigma head.
pub fn encode(params: &VaeParams, x: &[f64]) -> Result<LatentGaussian, VaeError> {
    check_input(x, params.arch.input_dim)?;
    let t = params.encode_trace(x);
    LatentGaussian::new(t.mu, t.log_sigma.iter().map(|s| s.exp()).collect())
}

pub fn decode(params: &VaeParams, z: &[f64]) -> Result<Vec<f64>, VaeError> {
    check_input(z, params.arch.latent_dim)?;
    let mut t = params.decode_trace(z);
    Ok(t.layers.pop().expect("output layer"))
}
