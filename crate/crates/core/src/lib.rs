//! Vibration-based damage detection for riveted stiffened panels.
//!
//! A lumped-mass surrogate of the panel produces frequency response
//! functions under random excitation. Their log magnitudes are compressed
//! by principal component analysis into a fixed-length fingerprint, and
//! feed-forward networks map that fingerprint to damaged-rivet locations
//! and damage severity.

// Checks written as `!(x > 0.0)` also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod config;
pub mod container;
pub mod damage;
pub mod error;
pub mod linalg;
pub mod mlp;
pub mod panel;
pub mod pca;
pub mod pipeline;
pub mod seeds;
pub mod signal;

pub use error::{Error, Result};
