//! Dephasing-induced mobility edges in one-dimensional quasicrystals.
//!
//! Tight-binding chains with quasiperiodic hopping or potential, their
//! coherent, Lindblad and classical Markov dynamics, the incoherent photonic
//! quantum walk, and localization diagnostics (IPR, fractal exponents,
//! Lyapunov exponents, level statistics, mobility-edge detection).

pub mod dynamics;
pub mod error;
pub mod harness;
pub mod lattice;
pub mod liouvillian;
pub mod linalg;
pub mod spectra;
pub mod walk;

pub use error::{Error, Result};
