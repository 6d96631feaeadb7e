//! Model-based speech dereverberation.
//!
//! The crate couples a stochastic room impulse response model with an exact
//! STFT-domain convolution operator, and uses both to fit a dry spectrogram
//! to a reverberant observation:
//!
//! - [`signal`]: signals, the STFT pair and WAV I/O
//! - [`rir`]: acoustic parameters, Polack sampling, EDC analysis
//! - [`tfconv`]: cross-band convolution kernels and their adjoint
//! - [`loss`]: reverberation-matching losses, gradient balancing, Monte-Carlo variants
//! - [`blind`]: blind RT60 / DRR estimation from a reverberant spectrogram
//! - [`dereverb`]: the per-sample solver and the end-to-end pipeline
//! - [`metrics`]: SI-SDR and parameter errors
//! - [`synth`]: speech-shaped noise and reverberant examples for testing

pub mod blind;
pub mod dereverb;
pub mod error;
pub mod kv;
pub mod loss;
pub mod metrics;
pub mod rir;
pub mod seed;
pub mod signal;
pub mod synth;
pub mod tfconv;

pub use error::{Error, Result};
pub use num_complex::Complex64;
