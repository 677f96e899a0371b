//! Paralinguistic speech analysis: feature extraction (phonation,
//! articulation, prosody, Interspeech 2010 paralinguistic set), GMM-UBM
//! i-vectors and x-vector embeddings, Gaussian-kernel SVMs, and
//! leakage-safe nested cross-validation.

pub mod classifier;
pub mod container;
pub mod dsp;
pub mod embeddings;
pub mod error;
pub mod eval;
pub mod features;
pub mod signal;

pub use error::{Error, Result};
