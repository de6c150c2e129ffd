use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use super::mlp::{Activation, Mlp};
use super::train::{train, TrainConfig, TrainReport};
use crate::error::{Error, Result};

/// Encoder/decoder pair trained end to end as one network with a linear bottleneck.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    pub encoder: Mlp,
    pub decoder: Mlp,
}

impl Autoencoder {
    /// Untrained chain `input → hidden… → bottleneck → reversed hidden… → input`.
    fn chain(input_dim: usize, hidden: &[usize], bottleneck: usize, seed: u64) -> Result<Mlp> {
        if bottleneck == 0 || bottleneck > input_dim {
            return Err(Error::InvalidInput(format!(
                "bottleneck width {bottleneck} must be in 1..={input_dim}"
            )));
        }
        let mut sizes = vec![input_dim];
        sizes.extend_from_slice(hidden);
        sizes.push(bottleneck);
        sizes.extend(hidden.iter().rev());
        sizes.push(input_dim);
        let mut acts = Vec::new();
        acts.extend(std::iter::repeat(Activation::Tanh).take(hidden.len()));
        acts.push(Activation::Identity);
        acts.extend(std::iter::repeat(Activation::Tanh).take(hidden.len()));
        acts.push(Activation::Identity);
        Mlp::with_activations(&sizes, &acts, seed)
    }

    /// Trains on reconstructing the rows of `x`.
    pub fn fit(x: ArrayView2<f64>, hidden: &[usize], bottleneck: usize, cfg: &TrainConfig) -> Result<(Self, TrainReport)> {
        let chain = Self::chain(x.ncols(), hidden, bottleneck, cfg.seed)?;
        let (trained, report) = train(&chain, x, x, cfg)?;
        let (encoder, decoder) = trained.split(hidden.len() + 1);
        Ok((Self { encoder, decoder }, report))
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.output_dim()
    }

    pub fn encode(&self, x: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.encoder.forward(x)
    }

    pub fn decode(&self, z: ArrayView1<f64>) -> Result<Array1<f64>> {
        self.decoder.forward(z)
    }

    pub fn reconstruct_batch(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let z = self.encoder.forward_batch(x)?;
        self.decoder.forward_batch(z.view())
    }
}
