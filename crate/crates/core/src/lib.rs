//! Masked mesh network (MMN) for unsupervised anomaly detection on spherical
//! cortical-surface features.
//!
//! The pipeline: resample per-vertex features onto an icosphere ([`mesh`]),
//! learn a masked-reconstruction model built from spherical-harmonics mesh
//! convolutions ([`spharm`], [`conv`], [`net`]), score each atlas ROI by
//! masking it and measuring the reconstruction residual ([`anomaly`]), and
//! compare groups with ANOVA and Benjamini-Hochberg correction ([`stats`]).

pub mod anomaly;
pub mod conv;
pub mod error;
pub mod io;
pub mod mesh;
pub mod net;
pub mod spharm;
pub mod stats;

pub use error::{Error, Result};
