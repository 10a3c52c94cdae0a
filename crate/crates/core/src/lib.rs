//! Single-channel speech dereverberation in the log-magnitude STFT domain.
//!
//! A reverberant spectrogram is mapped to an estimate of the dry spectrogram
//! and of the room impulse response magnitude, and the pair can be recombined
//! by per-bin convolution along time to reproduce the reverberant input.
//!
//! - [`dsp`]: audio I/O, resampling, convolution, STFT and alignment.
//! - [`corpus`]: RIR ingestion, group-aware splitting, pairing, example
//!   synthesis and the binary example cache.
//! - [`nn`]: tensors, a reverse-mode tape with convolution and GRU layers,
//!   Adam and finite-difference gradient checks.
//! - [`models`]: the RIR estimator, two dry estimators and the joint model.
//! - [`trainer`]: epochs, logging and checkpoints.
//! - [`eval`]: spectral and decay metrics, reports and audition.
//! - [`cli`]: the `dereverb` command line.

pub mod cli;
pub mod corpus;
pub mod dsp;
pub mod eval;
pub mod models;
pub mod nn;
pub mod rng;
pub mod synthetic;
pub mod trainer;
