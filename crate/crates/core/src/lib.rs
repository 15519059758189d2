//! Multi-band channel sounding and multipath analysis.
//!
//! The crate covers the whole chain from a 2×1 MISO sounding pair to
//! target-induced delay regions:
//!
//! * [`sequence`]: QPSK sounding spectra and their time sequences.
//! * [`simulator`]: multipath channels with shared geometric delays,
//!   target overlays and noisy received frames.
//! * [`estimator`]: per-antenna channel estimates from received frames.
//! * [`subspace`]: smoothed covariance, model order, MUSIC delay spectrum
//!   and gain inversion.
//! * [`clustering`]: 1-D K-means on relative delays with silhouette-based K.
//! * [`analysis`]: PDP traces, multipath-count histograms, P/N regions.
//! * [`io`] and [`pipeline`]: dataset files and the end-to-end workflow
//!   behind the `chansound` binary.

pub mod analysis;
pub mod clustering;
pub mod dsp;
pub mod error;
pub mod estimator;
pub mod io;
pub mod pipeline;
pub mod rng;
pub mod sequence;
pub mod simulator;
pub mod subspace;

pub use error::{Error, Result};

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
