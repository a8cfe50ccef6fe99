//! Periocular verification toolkit.
//!
//! The pipeline runs image normalization and CLAHE ([`imaging`]), dense and
//! key-point feature extraction ([`descriptors`], [`keypoints`]), template
//! comparison ([`comparison`]), trial enumeration ([`protocol`]), score fusion
//! with log-likelihood-ratio calibration ([`fusion`]) and DET evaluation
//! ([`metrics`]). [`synth`] generates Gaussian score sets for self-checks.

pub mod comparison;
pub mod descriptors;
pub mod error;
pub mod fusion;
pub mod imaging;
pub mod keypoints;
pub mod metrics;
pub mod model;
pub mod protocol;
pub mod synth;

pub use error::{Error, Result};
