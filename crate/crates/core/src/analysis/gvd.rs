//! GVD of the medium between two surfaces from the broadening of their
//! cross-interference feature.
//!
//! Surface features are immune to even-order dispersion, while the feature
//! midway between two surfaces is broadened by the round-trip quadratic phase
//! `phi = beta2 * L` of the interstitial medium. The width ratio
//! `rho = w2 / sqrt((wa^2 + wb^2) / 2)` is inverted through the same
//! simulate, dither, demodulate and fit pipeline applied to a synthetic
//! two-surface channel.

use num_complex::Complex64;

use super::dither::{detuned_scan, dither_schedule, dither_statistics, DitherSweep, DITHER_POINTS};
use super::features::{detect_features_xy, FeatureClass};
use super::fit::{fit_feature, DipFit, FeatureModel, Polarity};
use super::{AnalysisError, Result};
use crate::biphoton::{CrystalSpec, FrequencyGrid, GridSpec, PumpSpec};
use crate::interferometer::{Interferogram, ScanConfig};
use crate::sample::Channel;
use crate::units::delay_um_to_fs;

/// Fit window half-width in units of the fitted FWHM.
const WINDOW_FWHM: f64 = 1.5;
const REFIT_PASSES: usize = 3;

/// Fits a feature, then refits twice on a window tied to the previous fit so
/// the window follows the fit smoothly instead of the sampling grid.
pub fn refined_fit(x: &[f64], y: &[f64], window: (f64, f64), model: FeatureModel) -> Result<DipFit> {
    let mut fit = fit_feature(x, y, window, model)?;
    for _ in 1..REFIT_PASSES {
        let half = WINDOW_FWHM * fit.fwhm;
        let w = ((fit.center - half).max(x[0]), (fit.center + half).min(x[x.len() - 1]));
        fit = fit_feature(x, y, w, model)?;
    }
    Ok(fit)
}

/// Surface fits and the cross-feature fit read from one dither sweep.
#[derive(Debug, Clone)]
pub struct CrossMeasurement {
    pub dip_fits: [DipFit; 2],
    pub cross_fit: DipFit,
}

impl CrossMeasurement {
    pub fn separation_um(&self) -> f64 {
        self.dip_fits[1].center - self.dip_fits[0].center
    }

    /// Width ratio and its one-sigma uncertainty.
    pub fn ratio(&self) -> (f64, f64) {
        width_ratio(&self.dip_fits, &self.cross_fit)
    }
}

fn width_ratio(dips: &[DipFit; 2], cross: &DipFit) -> (f64, f64) {
    let (wa, wb, w2) = (dips[0].fwhm, dips[1].fwhm, cross.fwhm);
    let q = ((wa * wa + wb * wb) / 2.0).sqrt();
    let sq = ((wa * dips[0].fwhm_sigma()).powi(2) + (wb * dips[1].fwhm_sigma()).powi(2)).sqrt() / (2.0 * q);
    let rho = w2 / q;
    let sigma = ((cross.fwhm_sigma() / q).powi(2) + (w2 * sq / (q * q)).powi(2)).sqrt();
    (rho, sigma)
}

/// Fits the two strongest surface dips on the dither mean and the class-2
/// envelope peak nearest their midpoint.
pub fn measure_cross_features(sweep: &DitherSweep, min_prominence: f64) -> Result<CrossMeasurement> {
    let r = &sweep.result;
    let x = &r.class1.delays_um;
    let mut surfaces: Vec<_> = r
        .features
        .iter()
        .filter(|(f, c)| *c == FeatureClass::Surface && f.polarity == Polarity::Dip)
        .map(|(f, _)| *f)
        .collect();
    if surfaces.len() < 2 {
        return Err(AnalysisError::NoSurfaces);
    }
    surfaces.sort_by(|a, b| b.prominence.total_cmp(&a.prominence));
    surfaces.truncate(2);
    surfaces.sort_by(|a, b| a.center.total_cmp(&b.center));
    let fa = refined_fit(x, &r.class1.rate, surfaces[0].window, FeatureModel::Gaussian)?;
    let fb = refined_fit(x, &r.class1.rate, surfaces[1].window, FeatureModel::Gaussian)?;
    let mid = 0.5 * (fa.center + fb.center);
    let cross_fit = fit_envelope(x, &r.class2_envelope, mid, min_prominence)?;
    Ok(CrossMeasurement {
        dip_fits: [fa, fb],
        cross_fit,
    })
}

fn fit_envelope(x: &[f64], env: &[f64], mid: f64, min_prominence: f64) -> Result<DipFit> {
    let peak = detect_features_xy(x, env, min_prominence)?
        .into_iter()
        .filter(|f| f.polarity == Polarity::Peak)
        .min_by(|a, b| (a.center - mid).abs().total_cmp(&(b.center - mid).abs()))
        .ok_or_else(|| AnalysisError::NotIdentifiable("no cross feature in the demodulated envelope".into()))?;
    // offset so the fitted baseline stays positive
    let lifted: Vec<f64> = env.iter().map(|v| 1.0 + v).collect();
    refined_fit(x, &lifted, peak.window, FeatureModel::Gaussian)
}

/// Source, crystal and dither settings shared by the measurement and the
/// forward model.
#[derive(Debug, Clone)]
pub struct GvdModel {
    pub pump: PumpSpec,
    pub crystal: CrystalSpec,
    pub grid: GridSpec,
    pub scan: ScanConfig,
    /// Dither span used for the measurement.
    pub dither_span_nm: f64,
    pub min_prominence: f64,
}

/// Unit-free channel `r0 + r1 exp(i (omega tau + phi Omega^2))`.
pub fn two_surface_channel(grid: &FrequencyGrid, tau_fs: f64, phi_fs2: f64) -> Channel {
    let amp = (0..grid.size)
        .map(|k| {
            let w = grid.frequency(k);
            let om = w - grid.reference_frequency;
            Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0)
                + Complex64::from_polar(std::f64::consts::FRAC_1_SQRT_2, w * tau_fs + phi_fs2 * om * om)
        })
        .collect();
    let mut ch = Channel::from_amplitude(*grid, amp, 0.0);
    ch.total_power = vec![1.0; grid.size];
    ch.label = "two_surface_model".into();
    ch
}

impl GvdModel {
    /// Demodulated cross-feature width (FWHM, um) for a gap of optical
    /// thickness `separation_um` and round-trip quadratic phase `phi_fs2`.
    pub fn cross_width(&self, separation_um: f64, window_half_um: f64, phi_fs2: f64) -> Result<DipFit> {
        let mid = 0.5 * separation_um;
        let mut scan = self.scan.clone();
        scan.delay_start_um = mid - window_half_um;
        scan.delay_end_um = mid + window_half_um;
        let tau = delay_um_to_fs(separation_um);
        let scans = dither_schedule(self.dither_span_nm, DITHER_POINTS)
            .into_iter()
            .map(|d| {
                detuned_scan(&self.pump, &self.crystal, &self.grid, &scan, d, |g| {
                    Ok(two_surface_channel(g, tau, phi_fs2))
                })
            })
            .collect::<Result<Vec<Interferogram>>>()?;
        let centre = DITHER_POINTS / 2;
        let stats = dither_statistics(&scans[centre], &scans, 0.0)?;
        fit_envelope(&scans[0].delays_um, &stats.class2_envelope, mid, self.min_prominence)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GvdEstimate {
    pub beta2_fs2_per_mm: f64,
    /// Half-width of the one-sigma interval, fs^2/mm.
    pub beta2_sigma: f64,
    /// One-sigma interval, fs^2/mm.
    pub interval: (f64, f64),
    pub ratio: f64,
    pub ratio_sigma: f64,
    /// Ratio the forward model predicts for a nondispersive gap.
    pub ratio_at_zero: f64,
    pub consistent_with_zero: bool,
}

/// Quadratic phase (fs^2) at which the forward ratio reaches `target`.
fn invert_ratio(rho: &dyn Fn(f64) -> Result<f64>, target: f64, rho0: f64, scale: f64) -> Result<f64> {
    if target <= rho0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = scale;
    let mut found = false;
    for _ in 0..40 {
        match rho(hi) {
            Ok(r) if r < target => {
                lo = hi;
                hi *= 2.0;
            }
            // a feature too broad to fit lies beyond the target
            Ok(_) | Err(AnalysisError::NonConvergence(_) | AnalysisError::NotIdentifiable(_)) => {
                found = true;
                break;
            }
            Err(e) => return Err(e),
        }
    }
    if !found {
        return Err(AnalysisError::OutOfRange(format!(
            "width ratio {target:.4} beyond the forward model"
        )));
    }
    while hi - lo > 1e-4 * hi.max(1.0) {
        let m = 0.5 * (lo + hi);
        match rho(m) {
            Ok(r) if r < target => lo = m,
            Ok(_) | Err(AnalysisError::NonConvergence(_) | AnalysisError::NotIdentifiable(_)) => hi = m,
            Err(e) => return Err(e),
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Inverts the width ratio of `dip_fits` and `cross_fit` into the GVD of an
/// interstitial medium of physical thickness `length_mm`. Only |beta2| is
/// identifiable; the estimate is reported as non-negative.
pub fn estimate_gvd(
    dip_fits: &[DipFit; 2],
    cross_fit: &DipFit,
    length_mm: f64,
    model: &GvdModel,
) -> Result<GvdEstimate> {
    if !(length_mm > 0.0) {
        return Err(AnalysisError::OutOfRange(format!("interstitial length {length_mm} mm")));
    }
    let separation = dip_fits[1].center - dip_fits[0].center;
    if !(separation > 0.0) {
        return Err(AnalysisError::Mismatch("surface dips must be ordered by depth".into()));
    }
    let (ratio, ratio_sigma) = width_ratio(dip_fits, cross_fit);
    let q = ((dip_fits[0].fwhm.powi(2) + dip_fits[1].fwhm.powi(2)) / 2.0).sqrt();
    let half = (4.0 * cross_fit.fwhm).max(4.0 * q);
    let forward = |phi: f64| -> Result<f64> {
        let f = model.cross_width(separation, half, phi)?;
        let dips = [dip_fits[0].clone(), dip_fits[1].clone()];
        Ok(width_ratio(&dips, &f).0)
    };
    let rho0 = forward(0.0)?;
    // quadratic phase that doubles a transform-limited feature width
    let tau_c = delay_um_to_fs(q);
    let scale = (tau_c * tau_c / (4.0 * std::f64::consts::LN_2)).max(1.0) / 8.0;
    let phi = invert_ratio(&forward, ratio, rho0, scale)?;
    let phi_lo = invert_ratio(&forward, ratio - ratio_sigma, rho0, scale)?;
    let phi_hi = invert_ratio(&forward, ratio + ratio_sigma, rho0, scale)?;
    let interval = (phi_lo / length_mm, phi_hi / length_mm);
    Ok(GvdEstimate {
        beta2_fs2_per_mm: phi / length_mm,
        beta2_sigma: 0.5 * (interval.1 - interval.0),
        interval,
        ratio,
        ratio_sigma,
        ratio_at_zero: rho0,
        consistent_with_zero: ratio <= rho0 + ratio_sigma,
    })
}
