//! Variational recurrent neural machine translation.
//!
//! A from-scratch attentional encoder-decoder whose decoder carries a
//! per-timestep Gaussian latent variable, trained by maximizing a
//! reparameterized evidence lower bound, together with beam decoding,
//! attention-based alignment extraction and the usual translation metrics.

pub mod data;
pub mod decoding;
pub mod error;
pub mod layers;
pub mod metrics;
pub mod models;
pub mod params;
pub mod rng;
pub mod tensor;
pub mod training;
pub mod variational;

pub use error::{Error, Result};
