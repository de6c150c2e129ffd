//! Feed-forward networks written from scratch: batched forward passes,
//! reverse-mode gradients, Adam training, autoencoders, input-output
//! Jacobians and the local-invertibility diagnostic built on them.

mod autoencoder;
mod inverse;
mod mlp;
mod train;

pub use autoencoder::Autoencoder;
pub use inverse::{decoder_invert, ift_check, FnJacobian, IftReport, InversionResult, JacobianMap, LeadingOutputs};
pub use mlp::{gradient, jacobian, Activation, Gradients, Mlp, MlpDocument, Standardizer, MLP_SCHEMA};
pub use train::{train, TrainConfig, TrainReport};
