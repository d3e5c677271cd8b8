//! Triplet-network speaker embeddings for blacklist detection and
//! identification over i-vectors.
//!
//! The crate covers data ingestion, a one-layer shared embedding network
//! trained with triplet loss, cosine / k-NN / RBF-SVM classifiers, EER and
//! confusion metrics, and the experiment pipeline that ties them together.

pub mod classifiers;
pub mod config;
pub mod dataset;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod net;
pub mod pipeline;
pub mod projection;
pub mod rng;
pub mod synth;
mod textio;
pub mod trainer;

pub use error::{Error, ErrorKind, Result};
