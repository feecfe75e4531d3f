//! Peak and dip fitting.

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::storage::Owned;
use nalgebra::{Dyn, Matrix4, OMatrix, OVector, Vector4, U4};

use super::{AnalysisError, Result};
use crate::interferometer::Interferogram;
use crate::units::FWHM_PER_SIGMA;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureModel {
    Gaussian,
    /// Symmetric triangle; its width parameter is the FWHM.
    Triangular,
}

impl FeatureModel {
    pub fn label(self) -> &'static str {
        match self {
            FeatureModel::Gaussian => "gaussian",
            FeatureModel::Triangular => "triangular",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Dip,
    Peak,
}

impl Polarity {
    pub fn label(self) -> &'static str {
        match self {
            Polarity::Dip => "dip",
            Polarity::Peak => "peak",
        }
    }
}

/// Fitted feature. Parameters are ordered (baseline, amplitude, center, width).
#[derive(Debug, Clone, PartialEq)]
pub struct DipFit {
    pub center: f64,
    pub fwhm: f64,
    pub visibility: f64,
    pub amplitude: f64,
    pub baseline: f64,
    pub polarity: Polarity,
    pub residual_rms: f64,
    pub covariance: Matrix4<f64>,
    pub model: FeatureModel,
    /// Visibility above 1 (possible under noise).
    pub visibility_flag: bool,
}

impl DipFit {
    pub fn center_sigma(&self) -> f64 {
        self.covariance[(2, 2)].max(0.0).sqrt()
    }

    pub fn fwhm_sigma(&self) -> f64 {
        let scale = match self.model {
            FeatureModel::Gaussian => FWHM_PER_SIGMA,
            FeatureModel::Triangular => 1.0,
        };
        scale * self.covariance[(3, 3)].max(0.0).sqrt()
    }

    pub fn visibility_sigma(&self) -> f64 {
        let (b, a) = (self.baseline, self.amplitude);
        let c = &self.covariance;
        let var = c[(1, 1)] / (b * b) + a * a * c[(0, 0)] / b.powi(4) - 2.0 * a * c[(0, 1)] / b.powi(3);
        var.max(0.0).sqrt()
    }
}

/// Model value and gradient for parameters `p`.
fn evaluate(model: FeatureModel, p: &Vector4<f64>, x: f64) -> (f64, [f64; 4]) {
    let (b, a, c, w) = (p[0], p[1], p[2], p[3]);
    match model {
        FeatureModel::Gaussian => {
            let u = (x - c) / w;
            let e = (-0.5 * u * u).exp();
            (b + a * e, [1.0, e, a * e * u / w, a * e * u * u / w])
        }
        FeatureModel::Triangular => {
            let d = x - c;
            let t = 1.0 - d.abs() / w;
            if t > 0.0 {
                (b + a * t, [1.0, t, a * d.signum() / w, a * d.abs() / (w * w)])
            } else {
                (b, [1.0, 0.0, 0.0, 0.0])
            }
        }
    }
}

struct Problem<'a> {
    x: &'a [f64],
    y: &'a [f64],
    model: FeatureModel,
    p: Vector4<f64>,
}

impl LeastSquaresProblem<f64, Dyn, U4> for Problem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U4>;
    type ParameterStorage = Owned<f64, U4>;

    fn set_params(&mut self, p: &Vector4<f64>) {
        self.p = *p;
    }

    fn params(&self) -> Vector4<f64> {
        self.p
    }

    fn residuals(&self) -> Option<OVector<f64, Dyn>> {
        Some(OVector::<f64, Dyn>::from_iterator(
            self.x.len(),
            self.x
                .iter()
                .zip(self.y)
                .map(|(&x, &y)| evaluate(self.model, &self.p, x).0 - y),
        ))
    }

    fn jacobian(&self) -> Option<OMatrix<f64, Dyn, U4>> {
        let mut j = OMatrix::<f64, Dyn, U4>::zeros(self.x.len());
        for (r, &x) in self.x.iter().enumerate() {
            let (_, g) = evaluate(self.model, &self.p, x);
            for c in 0..4 {
                j[(r, c)] = g[c];
            }
        }
        Some(j)
    }
}

/// Initial guess from the raw data: baseline from the window edges, signed
/// amplitude and center from the largest excursion, width from half maximum.
fn initial_guess(x: &[f64], y: &[f64], model: FeatureModel) -> Vector4<f64> {
    let n = x.len();
    let edge = (n / 10).max(1);
    let b = (y[..edge].iter().sum::<f64>() + y[n - edge..].iter().sum::<f64>()) / (2 * edge) as f64;
    let (k, _) = y
        .iter()
        .enumerate()
        .map(|(k, v)| (k, (v - b).abs()))
        .fold((0, f64::NEG_INFINITY), |acc, v| if v.1 > acc.1 { v } else { acc });
    let a = y[k] - b;
    let half = 0.5 * a.abs();
    let mut lo = k;
    while lo > 0 && (y[lo] - b).abs() > half {
        lo -= 1;
    }
    let mut hi = k;
    while hi + 1 < n && (y[hi] - b).abs() > half {
        hi += 1;
    }
    let fwhm = (x[hi] - x[lo]).max((x[n - 1] - x[0]) / n as f64 * 2.0);
    let w = match model {
        FeatureModel::Gaussian => fwhm / FWHM_PER_SIGMA,
        FeatureModel::Triangular => fwhm,
    };
    Vector4::new(b, a, x[k], w)
}

/// Least-squares fit of `model` to the samples with `x` in `[lo, hi]`.
pub fn fit_feature(x: &[f64], y: &[f64], window: (f64, f64), model: FeatureModel) -> Result<DipFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = x
        .iter()
        .zip(y)
        .filter(|(x, _)| **x >= window.0 && **x <= window.1)
        .map(|(a, b)| (*a, *b))
        .unzip();
    if xs.len() < 6 {
        return Err(AnalysisError::TooShort(format!("{} points in fit window", xs.len())));
    }
    let problem = Problem {
        x: &xs,
        y: &ys,
        model,
        p: initial_guess(&xs, &ys, model),
    };
    let (problem, report) = LevenbergMarquardt::new()
        .with_patience(400)
        .with_tol(1e-15)
        .minimize(problem);
    if !report.termination.was_successful() {
        return Err(AnalysisError::NonConvergence(format!("{:?}", report.termination)));
    }
    let p = problem.p;
    if !p.iter().all(|v| v.is_finite()) || p[3] == 0.0 {
        return Err(AnalysisError::NonConvergence("non-finite parameters".into()));
    }
    let r = problem.residuals().expect("residuals");
    let j = problem.jacobian().expect("jacobian");
    let m = xs.len();
    let ssr = r.norm_squared();
    let jtj: Matrix4<f64> = j.transpose() * &j;
    let inv = jtj
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| AnalysisError::IllConditioned("singular normal matrix".into()))?;
    let s2 = if m > 4 { ssr / (m - 4) as f64 } else { 0.0 };
    let covariance = inv * s2;

    let (b, a, c, w) = (p[0], p[1], p[2], p[3].abs());
    let fwhm = match model {
        FeatureModel::Gaussian => FWHM_PER_SIGMA * w,
        FeatureModel::Triangular => w,
    };
    if !(fwhm > 0.0) || b <= 0.0 {
        return Err(AnalysisError::NonConvergence(format!(
            "degenerate fit (baseline {b}, fwhm {fwhm})"
        )));
    }
    let visibility = a.abs() / b;
    Ok(DipFit {
        center: c,
        fwhm,
        visibility,
        amplitude: a,
        baseline: b,
        polarity: if a < 0.0 { Polarity::Dip } else { Polarity::Peak },
        residual_rms: (ssr / m as f64).sqrt(),
        covariance,
        model,
        visibility_flag: visibility > 1.0,
    })
}

/// Gaussian fit of an interferogram over a window.
pub fn fit_gaussian(ig: &Interferogram, window: (f64, f64)) -> Result<DipFit> {
    fit_feature(&ig.delays_um, &ig.rate, window, FeatureModel::Gaussian)
}

/// Width of a single peak of `y` above `baseline` at half its height,
/// linearly interpolated.
pub fn half_max_width(x: &[f64], y: &[f64], baseline: f64) -> Option<f64> {
    let (k, peak) = y
        .iter()
        .enumerate()
        .map(|(k, v)| (k, (v - baseline).abs()))
        .fold((0, 0.0), |acc, v| if v.1 > acc.1 { v } else { acc });
    if peak == 0.0 {
        return None;
    }
    let h = 0.5 * peak;
    let level = |i: usize| (y[i] - baseline).abs();
    let mut lo = k;
    while lo > 0 && level(lo) > h {
        lo -= 1;
    }
    let mut hi = k;
    while hi + 1 < y.len() && level(hi) > h {
        hi += 1;
    }
    if level(lo) > h || level(hi) > h {
        return None;
    }
    let interp = |i: usize, j: usize| x[i] + (h - level(i)) / (level(j) - level(i)) * (x[j] - x[i]);
    Some(interp(hi, hi - 1) - interp(lo, lo + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn gaussian(x: &[f64], b: f64, a: f64, c: f64, s: f64) -> Vec<f64> {
        x.iter()
            .map(|&x| b + a * (-(x - c).powi(2) / (2.0 * s * s)).exp())
            .collect()
    }

    fn axis(lo: f64, hi: f64, step: f64) -> Vec<f64> {
        let n = ((hi - lo) / step).round() as usize + 1;
        (0..n).map(|k| lo + k as f64 * step).collect()
    }

    #[test]
    fn exact_gaussian_is_recovered() {
        let x = axis(-50.0, 50.0, 0.5);
        let y = gaussian(&x, 1.0, -0.8, 3.3, 6.0);
        let f = fit_feature(&x, &y, (-50.0, 50.0), FeatureModel::Gaussian).unwrap();
        assert!((f.center - 3.3).abs() < 1e-9 * 3.3);
        assert!((f.fwhm - 6.0 * FWHM_PER_SIGMA).abs() < 1e-9 * f.fwhm);
        assert!((f.visibility - 0.8).abs() < 1e-9);
        assert!((f.baseline - 1.0).abs() < 1e-9);
        assert_eq!(f.polarity, Polarity::Dip);
        assert!(!f.visibility_flag);
    }

    #[test]
    fn peaks_fit_with_positive_amplitude() {
        let x = axis(-30.0, 30.0, 0.25);
        let y = gaussian(&x, 1.0, 0.2, -4.0, 3.0);
        let f = fit_gaussian_xy(&x, &y);
        assert_eq!(f.polarity, Polarity::Peak);
        assert!((f.amplitude - 0.2).abs() < 1e-9);
    }

    fn fit_gaussian_xy(x: &[f64], y: &[f64]) -> DipFit {
        fit_feature(x, y, (x[0], x[x.len() - 1]), FeatureModel::Gaussian).unwrap()
    }

    #[test]
    fn gaussian_fit_agrees_with_moments() {
        let x = axis(-80.0, 80.0, 0.1);
        let y = gaussian(&x, 1.0, -0.6, 1.7, 5.0);
        let f = fit_gaussian_xy(&x, &y);
        let w: Vec<f64> = y.iter().map(|v| 1.0 - v).collect();
        let m0: f64 = w.iter().sum();
        let m1: f64 = x.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / m0;
        let m2: f64 = x.iter().zip(&w).map(|(x, w)| (x - m1).powi(2) * w).sum::<f64>() / m0;
        assert!((f.center - m1).abs() < 1e-6);
        assert!((f.fwhm / FWHM_PER_SIGMA - m2.sqrt()).abs() < 1e-6);
    }

    #[test]
    fn triangle_fit_recovers_width() {
        let x = axis(-40.0, 40.0, 0.2);
        let y: Vec<f64> = x
            .iter()
            .map(|&x| 1.0 - 0.75 * (1.0 - (x - 2.0).abs() / 10.0).max(0.0))
            .collect();
        let f = fit_feature(&x, &y, (-40.0, 40.0), FeatureModel::Triangular).unwrap();
        assert!((f.fwhm - 10.0).abs() < 1e-6);
        assert!((f.visibility - 0.75).abs() < 1e-6);
        assert!((f.center - 2.0).abs() < 1e-6);
    }

    #[test]
    fn tiny_windows_are_rejected() {
        let x = axis(0.0, 10.0, 1.0);
        let y = vec![1.0; x.len()];
        assert!(matches!(
            fit_feature(&x, &y, (0.0, 3.0), FeatureModel::Gaussian),
            Err(AnalysisError::TooShort(_))
        ));
    }

    #[test]
    fn flat_data_does_not_fit() {
        let x = axis(0.0, 10.0, 0.1);
        let y = vec![1.0; x.len()];
        assert!(fit_feature(&x, &y, (0.0, 10.0), FeatureModel::Gaussian).is_err());
    }

    #[test]
    fn half_max_width_of_triangle() {
        let x = axis(-20.0, 20.0, 0.01);
        let y: Vec<f64> = x.iter().map(|&x| (1.0 - x.abs() / 8.0).max(0.0)).collect();
        assert!((half_max_width(&x, &y, 0.0).unwrap() - 8.0).abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn self_fit_recovers_parameters(a in -0.95f64..-0.05, c in -10.0f64..10.0, s in 2.0f64..8.0) {
            let x = axis(-60.0, 60.0, 0.25);
            let y = gaussian(&x, 1.0, a, c, s);
            let f = fit_gaussian_xy(&x, &y);
            prop_assert!((f.center - c).abs() < 1e-7);
            prop_assert!((f.fwhm - s * FWHM_PER_SIGMA).abs() < 1e-7);
            prop_assert!((f.amplitude - a).abs() < 1e-7);
        }
    }
}
