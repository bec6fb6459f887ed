//! End-to-end sequence labeling from raw sampled signals.
//!
//! A 1D convolutional network turns each classification window of raw
//! samples into class scores, a linear-chain CRF scores whole label paths,
//! and both are trained jointly by gradient ascent on the exact sequence
//! log-likelihood. Decoding is Viterbi over the CRF.
//!
//! * [`numkernels`]: layer primitives and their gradients
//! * [`network`]: the stacked classifier and its flat parameter store
//! * [`crf`]: path scores, log-partition, gradients and Viterbi
//! * [`data`]: framing, dataset files, synthetic corpus, edit distance
//! * [`trainer`]: training loop and evaluation
//! * [`model`]: recognizer bundle and model file

pub mod crf;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod network;
pub mod numkernels;
pub mod presets;
pub mod trainer;

pub use error::{Error, Result};
