//! Self-separated conditional VAE (SepaCVAE) for single-turn dialogue
//! generation, built on a small reverse-mode autodiff engine.
//!
//! Modules, bottom-up:
//!
//! * [`tensor`]: dense `f64` arrays and a tape-based gradient graph.
//! * [`corpus`]: dialogue extraction, filtering, vocabulary, embeddings and a
//!   synthetic corpus generator with controlled one-to-many structure.
//! * [`model`]: GRU encoders/decoder, recognition and prior networks, ELBO.
//! * [`separation`]: group vectors, gradient blocking, relationship
//!   enhancement and the combined training objective.
//! * [`theory`]: closed-form and numeric analysis of the prior that
//!   minimizes a sum of Gaussian KL terms.
//! * [`metrics`]: distinct-n, BLEU, embedding cosine metrics, perplexity and
//!   latent-geometry analysis.
//! * [`runner`]: configuration, training, evaluation protocols, checkpoints.

pub mod corpus;
pub mod error;
pub mod metrics;
pub mod model;
pub mod par;
pub mod runner;
pub mod separation;
pub mod tensor;
pub mod theory;

pub use error::{Error, Result};
