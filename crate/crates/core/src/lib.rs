//! Data-driven reduced-order modeling of dissipative PDEs through approximate
//! inertial manifolds.
//!
//! The crate covers the whole workflow: spectral Galerkin simulators that act
//! as ground truth, analytic and learned closures for the slaved high modes,
//! latent-space discovery (diffusion maps, autoencoders, POD), and the
//! post-processing step that appends closure output to an integrated low-mode
//! state, together with the error metrics used to judge it.

pub mod aim;
pub mod dmaps;
pub mod error;
pub mod eval;
pub mod integrate;
pub mod io;
pub mod linalg;
pub mod models;
pub mod nn;
pub mod pod;
pub mod rom;
pub mod spectral;

pub use error::{Error, Result};
