//! Shared-information guided extreme multimodal summarization.
//!
//! A video/document pair, given as frame and word embeddings, is condensed
//! into one cover frame and one short extractive sentence. Salient rows shared
//! by both modalities are picked with a Gumbel-perturbed top-k, pooled, and
//! used to gate the raw features before transformer fusion and decoding.
//! Training is unsupervised, driven by optimal-transport distances between
//! feature distributions plus a fluency score.

pub mod diffcore;
pub mod embed;
pub mod cli;
pub mod decode;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod layers;
pub mod loss;
pub mod model;
pub mod nfdt;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
