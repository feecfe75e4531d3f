//! Separation of surface and cross-interference features by pump dithering.
//!
//! Surface (class-1) features do not move when the pump frequency is varied,
//! while cross-interference (class-2) features change polarity with the pump
//! frequency. Averaging scans over one polarity period washes out the class-2
//! features; the difference from the undithered scan isolates them.

use super::features::{detect_features, Feature, FeatureClass};
use super::{AnalysisError, Result};
use crate::biphoton::{joint_spectral_amplitude, CrystalSpec, FrequencyGrid, GridSpec, PumpSpec};
use crate::interferometer::{qoct_scan, Interferogram, ScanConfig};
use crate::sample::Channel;

/// Number of pump detunings per dither sweep.
pub const DITHER_POINTS: usize = 9;
/// Required class-2 suppression of the averaged scan.
pub const SUPPRESSION_TARGET: f64 = 10.0;

/// Evenly spaced detunings covering `span_nm` without repeating the end
/// point, so a sweep over one period samples each phase once.
pub fn dither_schedule(span_nm: f64, count: usize) -> Vec<f64> {
    let mid = (count as f64 - 1.0) / 2.0;
    (0..count).map(|k| (k as f64 - mid) * span_nm / count as f64).collect()
}

/// Pump detuning (nm) that advances the phase of a cross feature between
/// surfaces `separation_um` apart by one full cycle.
pub fn polarity_period_nm(pump_wavelength_nm: f64, separation_um: f64) -> f64 {
    pump_wavelength_nm * pump_wavelength_nm / (separation_um * 1e3)
}

/// Coincidence scan with the pump shifted by `detuning_nm`; `channel`
/// evaluates the sample on the shifted grid.
pub fn detuned_scan<F>(
    pump: &PumpSpec,
    crystal: &CrystalSpec,
    grid: &GridSpec,
    scan: &ScanConfig,
    detuning_nm: f64,
    channel: F,
) -> Result<Interferogram>
where
    F: Fn(&FrequencyGrid) -> Result<Channel>,
{
    let js = joint_spectral_amplitude(&pump.with_detuning(detuning_nm), crystal, grid)?;
    let ch = channel(&js.grid)?;
    Ok(qoct_scan(&js, &ch, scan)?)
}

#[derive(Debug, Clone)]
pub struct DitherResult {
    /// Pointwise mean over the sweep.
    pub class1: Interferogram,
    /// Undithered scan minus the mean.
    pub residual: Vec<f64>,
    /// Amplitude of the first harmonic across the sweep.
    pub class2_envelope: Vec<f64>,
    /// Ratio of class-2 excursion before and after averaging.
    pub suppression: f64,
    pub features: Vec<(Feature, FeatureClass)>,
}

fn check_axes(reference: &Interferogram, scans: &[Interferogram]) -> Result<()> {
    for s in scans {
        if s.len() != reference.len()
            || s.delays_um
                .iter()
                .zip(&reference.delays_um)
                .any(|(a, b)| (a - b).abs() > 1e-9)
        {
            return Err(AnalysisError::Mismatch(
                "dithered scans must share one delay axis".into(),
            ));
        }
    }
    Ok(())
}

/// Mean, residual and suppression without enforcing the suppression target.
pub fn dither_statistics(
    undithered: &Interferogram,
    scans: &[Interferogram],
    min_prominence: f64,
) -> Result<DitherResult> {
    if scans.len() < 5 {
        return Err(AnalysisError::InsufficientSpan(format!(
            "{} scans in the sweep, need at least 5",
            scans.len()
        )));
    }
    check_axes(undithered, scans)?;
    let n = undithered.len();
    let k = scans.len() as f64;
    let mean: Vec<f64> = (0..n)
        .map(|j| scans.iter().map(|s| s.rate[j]).sum::<f64>() / k)
        .collect();
    let residual: Vec<f64> = undithered.rate.iter().zip(&mean).map(|(u, m)| u - m).collect();
    let spread: Vec<f64> = (0..n)
        .map(|j| (scans.iter().map(|s| (s.rate[j] - mean[j]).powi(2)).sum::<f64>() / k).sqrt())
        .collect();
    let envelope: Vec<f64> = (0..n)
        .map(|j| {
            let (mut re, mut im) = (0.0, 0.0);
            for (q, s) in scans.iter().enumerate() {
                let ph = -2.0 * std::f64::consts::PI * q as f64 / k;
                let v = s.rate[j] - mean[j];
                re += v * ph.cos();
                im += v * ph.sin();
            }
            2.0 / k * (re * re + im * im).sqrt()
        })
        .collect();
    let max_spread = spread.iter().cloned().fold(0.0, f64::max);
    let suppression = if max_spread < 1e-9 {
        f64::INFINITY
    } else {
        let mask = |j: &usize| spread[*j] >= 0.5 * max_spread;
        let before = (0..n)
            .filter(mask)
            .map(|j| (undithered.rate[j] - 1.0).abs())
            .fold(0.0, f64::max);
        let after = (0..n).filter(mask).map(|j| (mean[j] - 1.0).abs()).fold(0.0, f64::max);
        if after == 0.0 {
            f64::INFINITY
        } else {
            before / after
        }
    };
    let mut class1 = undithered.clone();
    class1.rate = mean;
    class1.counts = None;
    class1.metadata.insert("kind".into(), "dither_mean".into());
    let features = detect_features(undithered, min_prominence)?
        .into_iter()
        .map(|f| {
            let j = nearest(&undithered.delays_um, f.center);
            let kept = (class1.rate[j] - 1.0).abs() >= 0.5 * (undithered.rate[j] - 1.0).abs();
            (
                f,
                if kept {
                    FeatureClass::Surface
                } else {
                    FeatureClass::Cross
                },
            )
        })
        .collect();
    Ok(DitherResult {
        class1,
        residual,
        class2_envelope: envelope,
        suppression,
        features,
    })
}

fn nearest(x: &[f64], v: f64) -> usize {
    x.iter()
        .enumerate()
        .min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs()))
        .map(|(k, _)| k)
        .unwrap_or(0)
}

/// Splits features into classes; fails if the sweep leaves class-2
/// structure less than [`SUPPRESSION_TARGET`] times weaker.
pub fn classify_by_dither(
    undithered: &Interferogram,
    scans: &[Interferogram],
    min_prominence: f64,
) -> Result<DitherResult> {
    let r = dither_statistics(undithered, scans, min_prominence)?;
    if r.suppression < SUPPRESSION_TARGET {
        return Err(AnalysisError::InsufficientSpan(format!(
            "class-2 suppression {:.2} below {SUPPRESSION_TARGET}",
            r.suppression
        )));
    }
    Ok(r)
}

/// Outcome of the span search.
#[derive(Debug, Clone)]
pub struct DitherSweep {
    pub span_nm: f64,
    pub detunings_nm: Vec<f64>,
    pub scans: Vec<Interferogram>,
    pub result: DitherResult,
}

/// Runs sweeps of [`DITHER_POINTS`] detunings, doubling the span from
/// `initial_span_nm` until the suppression target is met.
pub fn adaptive_dither<F>(
    undithered: &Interferogram,
    initial_span_nm: f64,
    max_doublings: usize,
    min_prominence: f64,
    mut simulate: F,
) -> Result<DitherSweep>
where
    F: FnMut(f64) -> Result<Interferogram>,
{
    if !(initial_span_nm > 0.0) {
        return Err(AnalysisError::InsufficientSpan(format!(
            "initial span {initial_span_nm} nm"
        )));
    }
    let mut span = initial_span_nm;
    let mut best: Option<DitherSweep> = None;
    for _ in 0..=max_doublings {
        let detunings = dither_schedule(span, DITHER_POINTS);
        let scans = detunings.iter().map(|&d| simulate(d)).collect::<Result<Vec<_>>>()?;
        let result = dither_statistics(undithered, &scans, min_prominence)?;
        let done = result.suppression >= SUPPRESSION_TARGET;
        let sweep = DitherSweep {
            span_nm: span,
            detunings_nm: detunings,
            scans,
            result,
        };
        if done {
            return Ok(sweep);
        }
        if best
            .as_ref()
            .is_none_or(|b| sweep.result.suppression > b.result.suppression)
        {
            best = Some(sweep);
        }
        span *= 2.0;
    }
    let s = best.map_or(0.0, |b| b.result.suppression);
    Err(AnalysisError::InsufficientSpan(format!(
        "best class-2 suppression {s:.2} after {max_doublings} doublings"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn scan(rate: Vec<f64>) -> Interferogram {
        Interferogram {
            delays_um: (0..rate.len()).map(|k| k as f64).collect(),
            rate,
            counts: None,
            envelope: None,
            baseline: 1.0,
            reference_polarization: crate::sample::Polarization::H,
            clamped: false,
            metadata: BTreeMap::new(),
        }
    }

    fn synthetic(phase: f64) -> Interferogram {
        scan(
            (0..200)
                .map(|k| {
                    let x = k as f64;
                    1.0 - 0.4 * (-(x - 40.0f64).powi(2) / 50.0).exp() - 0.4 * (-(x - 160.0f64).powi(2) / 50.0).exp()
                        + 0.2 * phase.cos() * (-(x - 100.0f64).powi(2) / 50.0).exp()
                })
                .collect(),
        )
    }

    #[test]
    fn schedule_is_symmetric_and_end_exclusive() {
        let d = dither_schedule(0.9, 9);
        assert_eq!(d.len(), 9);
        assert_eq!(d[4], 0.0);
        assert!((d[8] - 0.4).abs() < 1e-15 && (d[0] + 0.4).abs() < 1e-15);
    }

    #[test]
    fn full_period_sweep_washes_out_cross_feature() {
        let scans: Vec<_> = (0..9)
            .map(|k| synthetic(2.0 * std::f64::consts::PI * (k as f64 - 4.0) / 9.0))
            .collect();
        let u = synthetic(0.0);
        let r = classify_by_dither(&u, &scans, 0.05).unwrap();
        assert!(r.suppression > 1e6);
        let classes: Vec<_> = r.features.iter().map(|f| f.1).collect();
        assert_eq!(
            classes,
            vec![FeatureClass::Surface, FeatureClass::Cross, FeatureClass::Surface]
        );
        for j in 0..u.len() {
            assert!((r.class1.rate[j] + r.residual[j] - u.rate[j]).abs() < 1e-12);
        }
        assert!((r.class2_envelope[100] - 0.2).abs() < 1e-9);
    }

    #[test]
    fn invariant_scans_leave_no_residual() {
        let scans: Vec<_> = (0..9).map(|_| synthetic(0.3)).collect();
        let r = classify_by_dither(&scans[4], &scans, 0.05).unwrap();
        assert!(r.residual.iter().all(|v| v.abs() < 1e-15));
        assert!(r.suppression.is_infinite());
    }

    #[test]
    fn too_few_scans_or_short_span_are_errors() {
        let u = synthetic(0.0);
        assert!(matches!(
            classify_by_dither(&u, std::slice::from_ref(&u), 0.05),
            Err(AnalysisError::InsufficientSpan(_))
        ));
        let narrow: Vec<_> = (0..9).map(|k| synthetic(0.05 * (k as f64 - 4.0))).collect();
        assert!(matches!(
            classify_by_dither(&u, &narrow, 0.05),
            Err(AnalysisError::InsufficientSpan(_))
        ));
        let mut short = synthetic(0.0);
        short.rate.pop();
        short.delays_um.pop();
        assert!(classify_by_dither(
            &u,
            &[short.clone(), short.clone(), short.clone(), short.clone(), short],
            0.05
        )
        .is_err());
    }

    #[test]
    fn adaptive_sweep_finds_the_period() {
        let period = 1.1;
        let u = synthetic(0.0);
        let sweep = adaptive_dither(&u, period / 4.0, 6, 0.05, |d| {
            Ok(synthetic(2.0 * std::f64::consts::PI * d / period))
        })
        .unwrap();
        assert!((sweep.span_nm - period).abs() < 1e-12);
        assert!(sweep.result.suppression >= SUPPRESSION_TARGET);
    }
}
