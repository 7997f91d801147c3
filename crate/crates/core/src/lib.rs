//! Exact and statistical tools for an alternating-shear map of the torus.

pub mod complexity;
pub mod dynamics;
pub mod error;
pub mod geometry;
pub mod grid;
pub mod markov;
pub mod mixing;
pub mod rng;
pub mod singularity;
pub mod spectral;
pub mod stats;
pub mod tables;
pub mod torus;

pub use error::{Error, Result};
