use serde::{Deserialize, Serialize};

use super::VaeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation's output `y = f(x)`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

/// Layer sizes and activations of the encoder/decoder pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VaeArch {
    pub input_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub latent_dim: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl VaeArch {
    /// Encoder `N -> hidden... -> (mu, log sigma)` and a mirrored decoder
    /// `Q -> reversed hidden... -> N` with tanh hidden units and linear output.
    pub fn mirrored(input_dim: usize, hidden: &[usize], latent_dim: usize) -> Result<Self, VaeError> {
        let arch = Self {
            input_dim,
            encoder_hidden: hidden.to_vec(),
            decoder_hidden: hidden.iter().rev().copied().collect(),
            latent_dim,
            hidden_activation: Activation::Tanh,
            output_activation: Activation::Linear,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<(), VaeError> {
        if self.input_dim == 0 || self.latent_dim == 0 {
            return Err(VaeError::InvalidArch("dimensions must be at least 1".into()));
        }
        if self.latent_dim >= self.input_dim {
            return Err(VaeError::InvalidArch(format!(
                "latent dimension {} must be smaller than input dimension {}",
                self.latent_dim, self.input_dim
            )));
        }
        if self
            .encoder_hidden
            .iter()
            .chain(&self.decoder_hidden)
            .any(|&s| s == 0)
        {
            return Err(VaeError::InvalidArch("hidden layers must have at least 1 unit".into()));
        }
        Ok(())
    }

    /// `(fan_in, fan_out)` of every encoder trunk layer.
    pub(crate) fn encoder_shapes(&self) -> Vec<(usize, usize)> {
        chain_shapes(self.input_dim, &self.encoder_hidden, None)
    }

    /// Input size of the two latent heads.
    pub(crate) fn head_input(&self) -> usize {
        self.encoder_hidden.last().copied().unwrap_or(self.input_dim)
    }

    /// `(fan_in, fan_out)` of every decoder layer, output layer included.
    pub(crate) fn decoder_shapes(&self) -> Vec<(usize, usize)> {
        chain_shapes(self.latent_dim, &self.decoder_hidden, Some(self.input_dim))
    }
}

fn chain_shapes(input: usize, hidden: &[usize], output: Option<usize>) -> Vec<(usize, usize)> {
    let mut sizes = vec![input];
    sizes.extend_from_slice(hidden);
    sizes.extend(output);
    sizes.windows(2).map(|w| (w[0], w[1])).collect()
}
