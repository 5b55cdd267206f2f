//! Simulation and verification toolkit for critical Galton-Watson trees
//! conditioned on their number of leaves, the vertex cut-trees built by
//! fragmenting them at branch points, and the Brownian-CRT reference laws
//! their rescaled statistics converge to.
//!
//! The crate is organised around the pipeline
//! `offspring law -> conditioned tree -> hat transform -> cut-trees ->
//! rescaled observables`, with exact combinatorial kernels (enumeration,
//! convolution DPs, cyclic-lemma identities) acting as oracles for the
//! samplers, and a line-breaking CRT sampler acting as the independent
//! reference for the distributional limit checks.

pub mod coding;
pub mod crt;
pub mod cut;
pub mod error;
pub mod experiments;
pub mod metric;
pub mod offspring;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod tree;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
