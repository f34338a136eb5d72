//! Per-application network behavior modeling and deviation detection.
//!
//! The crate covers the full host-side loop at desk scale:
//!
//! * [`sim`] — deterministic synthetic traffic generation for benign,
//!   version-updated, and beacon-injected application profiles;
//! * [`features`] — extraction of periodic measurements and their
//!   aggregation into fixed-width feature vectors;
//! * [`learn`] — the base learners (regression tree, classification tree,
//!   decision table) and their text serialization;
//! * [`crossfeat`] — per-feature predictor ensembles scoring instance
//!   normality, with threshold calibration;
//! * [`detect`] — windowed alarm rules over verdict streams and
//!   dataset-level deviation decisions;
//! * [`eval`] — the evaluation harness: dataset sweeps, metrics,
//!   training-size curves, and timing benchmarks.

pub mod crossfeat;
pub mod detect;
pub mod error;
pub mod eval;
pub mod features;
pub mod learn;
pub mod sim;

pub use error::{Error, Result};
