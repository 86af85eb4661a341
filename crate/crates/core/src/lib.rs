//! Contact-free ISTI estimation and stress detection from thermal video.
//!
//! The crate covers the whole pipeline at desk scale:
//!
//! - [`signal`]: uniform time-series primitives (peaks, splines, filters).
//! - [`isti`]: ground-truth ISTI from ECG and dZ/dt, plus HR, HRV and breathing.
//! - [`emission`]: thermal clip preprocessing into network input frames.
//! - [`neural`]: a small convolutional + LSTM network with binned ISTI decoding.
//! - [`stress`]: the fully connected stress classifier and breathing fusion.
//! - [`metrics`]: MSE, Pearson correlation and average precision.
//! - [`synth`]: a seeded forward model producing cardiac signals and thermal clips.
//! - [`io`]: file formats (signal CSV, TVF, FVF, SNW) and configuration.
//! - [`cli`]: the `stressnet` command-line front end.

pub mod cli;
pub mod emission;
pub mod io;
pub mod error;
pub mod isti;
pub mod metrics;
pub mod neural;
pub mod signal;
pub mod stress;
pub mod synth;

pub use error::{Error, Result};
