//! Feature detection and layer extraction.

use super::fit::{DipFit, Polarity};
use super::{AnalysisError, Result};
use crate::interferometer::Interferogram;
use crate::units::FWHM_PER_SIGMA;

/// Fraction of the scan at each end used to estimate the baseline.
pub const BASELINE_EDGE_FRACTION: f64 = 0.075;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Feature {
    pub center: f64,
    pub polarity: Polarity,
    /// Fitting window, +-3 estimated standard deviations.
    pub window: (f64, f64),
    pub prominence: f64,
    pub width_estimate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureClass {
    /// Tied to a single surface; invariant under pump dithering.
    Surface,
    /// Cross-interference between a pair of surfaces.
    Cross,
}

impl FeatureClass {
    pub fn label(self) -> &'static str {
        match self {
            FeatureClass::Surface => "class1",
            FeatureClass::Cross => "class2",
        }
    }
}

/// Baseline level and noise estimated from both ends of a trace.
pub fn baseline_stats(y: &[f64]) -> Result<(f64, f64)> {
    let edge = ((y.len() as f64 * BASELINE_EDGE_FRACTION).round() as usize).max(1);
    if y.len() < 20 || 2 * edge >= y.len() {
        return Err(AnalysisError::TooShort(format!(
            "{} points cannot fix a baseline",
            y.len()
        )));
    }
    let wings: Vec<f64> = y[..edge].iter().chain(&y[y.len() - edge..]).cloned().collect();
    let mean = wings.iter().sum::<f64>() / wings.len() as f64;
    let var = wings.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (wings.len() - 1).max(1) as f64;
    Ok((mean, var.sqrt()))
}

/// Finds extrema of `y` departing from its baseline by more than
/// `max(min_prominence, 5 noise)`.
pub fn detect_features_xy(x: &[f64], y: &[f64], min_prominence: f64) -> Result<Vec<Feature>> {
    let (base, noise) = baseline_stats(y)?;
    let threshold = min_prominence.max(5.0 * noise);
    let n = y.len();
    let d: Vec<f64> = y.iter().map(|v| v - base).collect();
    // three-point smoothing for region finding only
    let s: Vec<f64> = (0..n)
        .map(|k| {
            let lo = k.saturating_sub(1);
            let hi = (k + 1).min(n - 1);
            d[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    let step = (x[n - 1] - x[0]) / (n - 1) as f64;
    let mut regions: Vec<(usize, usize, f64)> = Vec::new();
    let mut k = 0;
    while k < n {
        if s[k].abs() > threshold {
            let sign = s[k].signum();
            let start = k;
            while k < n && s[k].abs() > threshold && s[k].signum() == sign {
                k += 1;
            }
            // merge with a same-sign region separated by a short gap
            if let Some(last) = regions.last_mut() {
                if last.2 == sign && start - last.1 <= 3 {
                    last.1 = k;
                    continue;
                }
            }
            regions.push((start, k, sign));
        } else {
            k += 1;
        }
    }
    let mut out = Vec::new();
    for (start, end, sign) in regions {
        let (peak_k, peak) = (start..end)
            .map(|k| (k, d[k] * sign))
            .fold((start, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        if peak < threshold || end - start < 2 {
            continue;
        }
        let half = 0.5 * peak;
        let mut lo = peak_k;
        while lo > 0 && d[lo] * sign > half {
            lo -= 1;
        }
        let mut hi = peak_k;
        while hi + 1 < n && d[hi] * sign > half {
            hi += 1;
        }
        let fwhm = ((hi - lo) as f64 * step).max(2.0 * step);
        let sigma = fwhm / FWHM_PER_SIGMA;
        let center = x[peak_k];
        out.push(Feature {
            center,
            polarity: if sign < 0.0 { Polarity::Dip } else { Polarity::Peak },
            window: ((center - 3.0 * sigma).max(x[0]), (center + 3.0 * sigma).min(x[n - 1])),
            prominence: peak,
            width_estimate: fwhm,
        });
    }
    Ok(out)
}

pub fn detect_features(ig: &Interferogram, min_prominence: f64) -> Result<Vec<Feature>> {
    detect_features_xy(&ig.delays_um, &ig.rate, min_prominence)
}

/// Layer structure read from class-1 features.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerEstimate {
    pub surface_delays: Vec<f64>,
    pub optical_path_lengths: Vec<f64>,
    /// Visibility of each surface relative to the first.
    pub relative_reflectances: Vec<f64>,
    /// One-sigma uncertainty of each ratio from the fit covariances.
    pub reflectance_sigmas: Vec<f64>,
}

pub fn extract_layers(fits: &[DipFit], classes: &[FeatureClass]) -> Result<LayerEstimate> {
    if fits.len() != classes.len() {
        return Err(AnalysisError::Mismatch("one class label per fit".into()));
    }
    let mut surfaces: Vec<&DipFit> = fits
        .iter()
        .zip(classes)
        .filter(|(_, c)| **c == FeatureClass::Surface)
        .map(|(f, _)| f)
        .collect();
    if surfaces.is_empty() {
        return Err(AnalysisError::NoSurfaces);
    }
    surfaces.sort_by(|a, b| a.center.total_cmp(&b.center));
    let surface_delays: Vec<f64> = surfaces.iter().map(|f| f.center).collect();
    let optical_path_lengths = surface_delays.windows(2).map(|w| w[1] - w[0]).collect();
    let v0 = surfaces[0].visibility;
    let s0 = surfaces[0].visibility_sigma();
    let relative_reflectances = surfaces.iter().map(|f| f.visibility / v0).collect();
    let reflectance_sigmas = surfaces
        .iter()
        .map(|f| {
            let r = f.visibility / v0;
            r * ((f.visibility_sigma() / f.visibility).powi(2) + (s0 / v0).powi(2)).sqrt()
        })
        .collect();
    Ok(LayerEstimate {
        surface_delays,
        optical_path_lengths,
        relative_reflectances,
        reflectance_sigmas,
    })
}
