//! Zero-shot voice conversion with D-sequence driven style-token speaker
//! embeddings.
//!
//! The crate bundles the DSP front end, a GE2E speaker-verification model,
//! the four speaker-embedding variants (D, G, DG, DGC), an AUTOVC-style
//! bottleneck autoencoder, the joint training loop and the objective
//! evaluation pipeline (DTW mel-cepstral distortion, F0 error, embedding
//! projections).

pub mod error;
pub mod nn;

pub use error::{Error, Result};
pub mod audio;
pub mod features;
pub mod corpus;
pub mod eval;
pub mod checkpoint;
pub mod data;
pub mod asv;
pub mod speaker;
pub mod conversion;
pub mod training;
pub mod config;
