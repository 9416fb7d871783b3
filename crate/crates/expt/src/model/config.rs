//! Model hyperparameters.

use serde::{Deserialize, Serialize};

use super::ModelError;

/// Transformer encoder shape.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    /// Number of pre-norm blocks.
    pub layers: usize,
    /// Token width D; must be divisible by `heads`.
    pub dim: usize,
    /// Attention heads per block.
    pub heads: usize,
    /// Dropout on attention weights and feedforward output during training.
    pub dropout: f64,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig { layers: 4, dim: 128, heads: 4, dropout: 0.1 }
    }
}

/// Conditional-VAE head shape. Encoder and decoder are dense stacks with
/// `hidden`-wide interior layers; `enc_layers`/`dec_layers` count linear maps,
/// so a 1-layer stack is a single affine map.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaeConfig {
    pub enc_layers: usize,
    pub dec_layers: usize,
    pub hidden: usize,
    /// Latent width k.
    pub latent: usize,
}

impl Default for VaeConfig {
    fn default() -> Self {
        VaeConfig { enc_layers: 4, dec_layers: 4, hidden: 512, latent: 32 }
    }
}

/// Full model shape plus loss weights.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExPTConfig {
    /// Input dimensionality d_x of the functions being modeled.
    pub input_dim: usize,
    pub encoder: EncoderConfig,
    pub vae: VaeConfig,
    /// β weight on the KL term of the ELBO.
    pub kl_weight: f64,
    /// Fixed decoder output variance; 1.0 makes the reconstruction term a
    /// plain half squared error.
    pub recon_variance: f64,
    /// Layer-norm stabilizer.
    pub ln_eps: f64,
}

impl Default for ExPTConfig {
    fn default() -> Self {
        ExPTConfig {
            input_dim: 32,
            encoder: EncoderConfig::default(),
            vae: VaeConfig::default(),
            kl_weight: 1.0,
            recon_variance: 1.0,
            ln_eps: 1e-5,
        }
    }
}

impl ExPTConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        let fail = |msg: String| Err(ModelError::InvalidConfig(msg));
        if self.input_dim == 0 {
            return fail("input_dim must be at least 1".into());
        }
        if self.encoder.layers == 0 {
            return fail("encoder.layers must be at least 1".into());
        }
        if self.encoder.heads == 0 || self.encoder.dim == 0 {
            return fail("encoder.dim and encoder.heads must be at least 1".into());
        }
        if self.encoder.dim % self.encoder.heads != 0 {
            return fail(format!(
                "encoder.dim ({}) must be divisible by encoder.heads ({})",
                self.encoder.dim, self.encoder.heads
            ));
        }
        if !(0.0..1.0).contains(&self.encoder.dropout) {
            return fail(format!(
                "encoder.dropout must be in [0, 1), got {}",
                self.encoder.dropout
            ));
        }
        if self.vae.enc_layers == 0 || self.vae.dec_layers == 0 {
            return fail("vae.enc_layers and vae.dec_layers must be at least 1".into());
        }
        if self.vae.hidden == 0 {
            return fail("vae.hidden must be at least 1".into());
        }
        if self.vae.latent == 0 {
            return fail("vae.latent must be at least 1".into());
        }
        if !(self.kl_weight.is_finite() && self.kl_weight >= 0.0) {
            return fail(format!("kl_weight must be finite and >= 0, got {}", self.kl_weight));
        }
        if !(self.recon_variance.is_finite() && self.recon_variance > 0.0) {
            return fail(format!(
                "recon_variance must be finite and positive, got {}",
                self.recon_variance
            ));
        }
        if !(self.ln_eps.is_finite() && self.ln_eps >= 0.0) {
            return fail(format!("ln_eps must be finite and >= 0, got {}", self.ln_eps));
        }
        Ok(())
    }

    /// Dense dims for the posterior head: concat(x, h) in, (μ, logvar) out.
    pub(crate) fn vae_encoder_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim + self.encoder.dim];
        dims.extend(std::iter::repeat(self.vae.hidden).take(self.vae.enc_layers - 1));
        dims.push(2 * self.vae.latent);
        dims
    }

    /// Dense dims for the decoder: concat(z, h) in, x̂ out.
    pub(crate) fn vae_decoder_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.vae.latent + self.encoder.dim];
        dims.extend(std::iter::repeat(self.vae.hidden).take(self.vae.dec_layers - 1));
        dims.push(self.input_dim);
        dims
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ExPTConfig::default().validate().unwrap();
    }

    #[test]
    fn head_divisibility_is_enforced() {
        let mut cfg = ExPTConfig::default();
        cfg.encoder.dim = 130;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn zero_latent_is_rejected() {
        let mut cfg = ExPTConfig::default();
        cfg.vae.latent = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn vae_dims_shape_up() {
        let cfg = ExPTConfig::default();
        assert_eq!(cfg.vae_encoder_dims(), vec![32 + 128, 512, 512, 512, 64]);
        assert_eq!(cfg.vae_decoder_dims(), vec![32 + 128, 512, 512, 512, 32]);
        let mut one = cfg;
        one.vae.enc_layers = 1;
        assert_eq!(one.vae_encoder_dims(), vec![160, 64]);
    }
}
