//! Speech emotion recognition toolkit.
//!
//! The crate covers the full classical pipeline: corpus handling and noise
//! injection, frame-level acoustic descriptors, a fixed 481-dimension global
//! statistics feature vector, normalization/selection/projection pipelines,
//! GMM emotion models trained with EM, a pairwise two-class decomposition with
//! codeword correlation decoding, fuzzy-entropy open-set rejection, spring
//! model context smoothing over utterance chains, speaker-cluster feature
//! normalization, two spectral enhancement front ends and bimodal fusion.

pub mod context;
pub mod corpus;
pub mod dsp;
pub mod enhance;
pub mod error;
pub mod features;
pub mod fuse;
pub mod gmm;
pub mod io;
pub mod pairwise;
pub mod reduce;
pub mod reject;
pub mod speakers;

pub use error::{Error, Result};
