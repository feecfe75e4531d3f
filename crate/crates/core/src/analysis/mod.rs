//! Feature extraction and inversion from simulated or measured scans.

pub mod dither;
pub mod features;
pub mod fit;
pub mod gvd;
pub mod polarization;

use thiserror::Error;

use crate::biphoton::BiphotonError;
use crate::interferometer::InterferometerError;
use crate::materials::MaterialError;
use crate::sample::SampleError;

pub use dither::{adaptive_dither, classify_by_dither, dither_schedule, DitherResult, DitherSweep};
pub use features::{detect_features, extract_layers, Feature, FeatureClass, LayerEstimate};
pub use fit::{fit_feature, fit_gaussian, half_max_width, DipFit, FeatureModel, Polarity};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("too few points: {0}")]
    TooShort(String),
    #[error("fit did not converge: {0}")]
    NonConvergence(String),
    #[error("ill-conditioned fit: {0}")]
    IllConditioned(String),
    #[error("inconsistent inputs: {0}")]
    Mismatch(String),
    #[error("no surface features found")]
    NoSurfaces,
    #[error("insufficient span: {0}")]
    InsufficientSpan(String),
    #[error("out of range: {0}")]
    OutOfRange(String),
    #[error("not identifiable: {0}")]
    NotIdentifiable(String),
    #[error(transparent)]
    Interferometer(#[from] InterferometerError),
    #[error(transparent)]
    Biphoton(#[from] BiphotonError),
    #[error(transparent)]
    Sample(#[from] SampleError),
    #[error(transparent)]
    Material(#[from] MaterialError),
}

pub type Result<T> = std::result::Result<T, AnalysisError>;
