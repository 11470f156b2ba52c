//! Numerical core for explicit prosody transfer in emotional voice conversion.
//!
//! The crate covers the signal front end (WAV ingestion, mel spectrogram,
//! frame energy), F0 estimation with voiced/unvoiced decisions,
//! Savitzky-Golay contour smoothing, prosody augmentation (random shifting
//! and piecewise time warping), discrete content units (K-means codebooks,
//! run-length deduplication), the pure-math neural building blocks and loss
//! functions with analytic gradients, and the objective evaluation metrics.
//!
//! Everything here is a pure function of its inputs. Randomness is always
//! drawn from an explicitly passed [`rng::Rng`].

pub mod augment;
pub mod checks;
pub mod contour;
pub mod error;
pub mod f0;
pub mod formats;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod savgol;
pub mod signal;
pub mod units;

pub use contour::{Contour, ContourKind, VuvMask};
pub use error::{Error, Result};
