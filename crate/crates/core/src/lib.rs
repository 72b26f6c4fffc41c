//! Desk-scale diffusion toolkit: Gaussian-radius probes of the latent chain,
//! automatic mixing-step search, linear semantic boundaries and single-step
//! boundary-guided editing on a small trainable noise predictor.

pub mod binio;
pub mod boundary;
pub mod checkpoint;
pub mod editor;
pub mod error;
pub mod geometry;
pub mod markov_tv;
pub mod mixing;
pub mod model;
pub mod rng;
pub mod schedule;
pub mod synth;
pub mod toy;
pub mod trajectory;
pub mod verify;

pub use error::{Error, ErrorFamily, Result};
