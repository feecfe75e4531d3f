//! Forward simulation and analysis of Type-II polarization-sensitive quantum
//! optical coherence tomography (PS-QOCT).
//!
//! The crate is organised along the signal path:
//!
//! - [`materials`]: Sellmeier dispersion database, group index, GVD and
//!   Taylor expansions of the propagation constant.
//! - [`biphoton`]: pulsed-pump Type-II joint spectral amplitude on a
//!   discrete frequency grid.
//! - [`sample`]: layered birefringent samples and their round-trip Jones
//!   response, projected onto a reference polarization.
//! - [`interferometer`]: coincidence (fourth-order) and classical
//!   (second-order) scans, plus Poisson counting noise.
//! - [`analysis`]: feature detection, Gaussian fitting, layer extraction,
//!   dither classification, GVD estimation and the polarization procedure.
//! - [`scenario`]: configuration files, experiment presets and the runner
//!   used by the command-line tool.

// `!(x > 0.0)` deliberately rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod biphoton;
pub mod interferometer;
pub mod materials;
pub mod sample;
pub mod scenario;
pub mod units;

pub use num_complex::Complex64;
