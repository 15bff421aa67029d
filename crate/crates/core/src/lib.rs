//! Instrument-aware automatic equalization.
//!
//! The crate is organized bottom-up:
//!
//! * [`spectrum`] and [`audio`]: STFT analysis on a 256-bin log-frequency grid,
//!   spectral difference curves, WAV I/O and resampling.
//! * [`eq`]: 4-band parametric EQ design, cascade responses, parameter
//!   normalization and time-domain processing.
//! * [`nn`]: a small dense/conv1d network substrate with explicit backward
//!   passes, Adam, and a differentiable cascade response.
//! * [`model`]: the MLP and CNN matching models, their losses and the two-stage
//!   training procedure.
//! * [`datagen`], [`targets`], [`pipeline`]: training data synthesis, ideal
//!   instrument spectra, and the end-to-end auto-EQ chain.

pub mod audio;
pub mod corpus;
pub mod datagen;
pub mod demo;
pub mod eq;
pub mod error;
pub mod model;
pub mod nn;
pub mod pipeline;
pub mod scalar;
pub mod spectrum;
pub mod targets;

mod binio;

pub use error::{Error, ErrorKind, Result};
