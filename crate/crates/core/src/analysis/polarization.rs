//! Polarization-resolved measurements: the combined interferogram, the
//! V/H interference ratio at each layer, retardation by forward-model
//! inversion and the optic-axis angle from the rate-maximizing reference.

use std::f64::consts::PI;

use num_complex::Complex64;

use super::features::detect_features;
use super::{AnalysisError, Result};
use crate::biphoton::JointSpectrum;
use crate::interferometer::{qoct_scan, Interferogram, ScanConfig};
use crate::sample::{sample_channel, JonesVector, Polarization, SampleStack};

/// H- and V-referenced scans normalized by one shared baseline.
#[derive(Debug, Clone)]
pub struct PolarizationSet {
    pub r_h: Interferogram,
    pub r_v: Interferogram,
    pub lambda0: f64,
}

impl PolarizationSet {
    pub fn new(r_h: Interferogram, r_v: Interferogram) -> Result<Self> {
        if r_h.len() != r_v.len()
            || r_h
                .delays_um
                .iter()
                .zip(&r_v.delays_um)
                .any(|(a, b)| (a - b).abs() > 1e-9)
        {
            return Err(AnalysisError::Mismatch(
                "H and V scans must share one delay axis".into(),
            ));
        }
        let (a, b) = (r_h.baseline, r_v.baseline);
        if (a - b).abs() > 1e-9 * a.abs().max(b.abs()) {
            return Err(AnalysisError::Mismatch(format!("baselines differ: {a:e} vs {b:e}")));
        }
        Ok(Self { lambda0: a, r_h, r_v })
    }
}

/// Simulates both reference polarizations of `stack`.
pub fn polarization_set(js: &JointSpectrum, stack: &SampleStack, scan: &ScanConfig) -> Result<PolarizationSet> {
    let run = |p: Polarization| -> Result<Interferogram> {
        let ch = sample_channel(stack, &js.grid, &p.vector())?;
        let mut cfg = scan.clone();
        cfg.reference_polarization = p;
        Ok(qoct_scan(js, &ch, &cfg)?)
    };
    PolarizationSet::new(run(Polarization::H)?, run(Polarization::V)?)
}

/// Interference amplitude of a normalized scan near `center`: the largest
/// |rate - 1| within `half_window`, refined by a parabola through the
/// neighbouring samples.
pub fn interference_amplitude(ig: &Interferogram, center: f64, half_window: f64) -> Result<f64> {
    let idx: Vec<usize> = (0..ig.len())
        .filter(|&k| (ig.delays_um[k] - center).abs() <= half_window)
        .collect();
    let &k = idx
        .iter()
        .max_by(|&&a, &&b| (ig.rate[a] - 1.0).abs().total_cmp(&(ig.rate[b] - 1.0).abs()))
        .ok_or_else(|| AnalysisError::TooShort(format!("no samples within {half_window} um of {center}")))?;
    let y = |j: usize| (ig.rate[j] - 1.0).abs();
    if k == 0 || k + 1 >= ig.len() {
        return Ok(y(k));
    }
    let (a, b, c) = (y(k - 1), y(k), y(k + 1));
    let den = a - 2.0 * b + c;
    if den >= 0.0 {
        return Ok(b);
    }
    let t = 0.5 * (a - c) / den;
    Ok(b - 0.25 * (a - c) * t)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerRatio {
    pub center: f64,
    pub lambda_h: f64,
    pub lambda_v: f64,
    /// |Lambda_V| / |Lambda_H|; infinite when the H channel is empty.
    pub ratio: f64,
}

#[derive(Debug, Clone)]
pub struct PolarizationReport {
    pub r_t: Interferogram,
    pub layers: Vec<LayerRatio>,
}

/// `(R_V + R_H - Lambda0) / Lambda0` pointwise.
pub fn combined_interferogram(ps: &PolarizationSet) -> Interferogram {
    let mut r_t = ps.r_h.clone();
    r_t.rate = ps.r_h.rate.iter().zip(&ps.r_v.rate).map(|(h, v)| h + v - 1.0).collect();
    r_t.counts = None;
    r_t.clamped = ps.r_h.clamped || ps.r_v.clamped;
    r_t.metadata.insert("kind".into(), "combined".into());
    r_t.metadata.remove("reference_polarization");
    r_t
}

fn ratio(h: f64, v: f64) -> f64 {
    if h > 0.0 {
        v / h
    } else if v > 0.0 {
        f64::INFINITY
    } else {
        0.0
    }
}

/// Combined interferogram and the V/H ratio at every feature it shows.
pub fn combine_polarization(ps: &PolarizationSet, min_prominence: f64) -> Result<PolarizationReport> {
    let r_t = combined_interferogram(ps);
    let layers = detect_features(&r_t, min_prominence)?
        .into_iter()
        .map(|f| {
            let half = 0.5 * (f.window.1 - f.window.0);
            let lambda_h = interference_amplitude(&ps.r_h, f.center, half)?;
            let lambda_v = interference_amplitude(&ps.r_v, f.center, half)?;
            Ok(LayerRatio {
                center: f.center,
                lambda_h,
                lambda_v,
                ratio: ratio(lambda_h, lambda_v),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PolarizationReport { r_t, layers })
}

/// V/H ratio of `ps` at a layer.
pub fn layer_ratio(ps: &PolarizationSet, position: f64, half_window: f64) -> Result<f64> {
    let h = interference_amplitude(&ps.r_h, position, half_window)?;
    let v = interference_amplitude(&ps.r_v, position, half_window)?;
    Ok(ratio(h, v))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BirefringenceEstimate {
    /// Smallest retardation consistent with the measurement, rad.
    pub delta: f64,
    /// Every retardation in [0, pi] consistent with the measurement.
    pub roots: Vec<f64>,
    pub ambiguous: bool,
    /// The forward curve is stationary at the estimate, so the estimate is
    /// poorly constrained.
    pub flat: bool,
    pub measured_ratio: f64,
}

const SCAN_POINTS: usize = 61;
/// Relative mismatch accepted when the curve only touches the measurement.
const TOUCH_TOLERANCE: f64 = 0.02;

fn golden_extremum(f: &dyn Fn(f64) -> Result<f64>, mut a: f64, mut b: f64, maximize: bool) -> Result<(f64, f64)> {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let s = if maximize { -1.0 } else { 1.0 };
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (s * f(c)?, s * f(d)?);
    while b - a > 1e-6 {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = s * f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = s * f(d)?;
        }
    }
    let x = 0.5 * (a + b);
    Ok((x, f(x)?))
}

/// Retardation values in [0, pi] for which `forward(delta)` equals the
/// ratio measured at `position`.
pub fn extract_birefringence(
    ps: &PolarizationSet,
    position: f64,
    half_window: f64,
    forward: &dyn Fn(f64) -> Result<f64>,
) -> Result<BirefringenceEstimate> {
    let measured = layer_ratio(ps, position, half_window)?;
    invert_retardation(measured, forward)
}

pub fn invert_retardation(measured: f64, forward: &dyn Fn(f64) -> Result<f64>) -> Result<BirefringenceEstimate> {
    if measured.is_nan() {
        return Err(AnalysisError::OutOfRange("measured ratio is not a number".into()));
    }
    let grid: Vec<f64> = (0..SCAN_POINTS)
        .map(|k| PI * k as f64 / (SCAN_POINTS - 1) as f64)
        .collect();
    let vals = grid.iter().map(|&d| forward(d)).collect::<Result<Vec<f64>>>()?;
    let close = |v: f64| {
        if measured.is_infinite() {
            v.is_infinite()
        } else {
            (v - measured).abs() <= TOUCH_TOLERANCE * measured.abs().max(1e-3)
        }
    };
    let g = |v: f64| if measured.is_infinite() { -1.0 } else { v - measured };
    let mut roots: Vec<(f64, bool)> = Vec::new();
    for k in 0..SCAN_POINTS {
        if g(vals[k]).abs() <= 1e-9 * measured.abs() || (vals[k].is_infinite() && measured.is_infinite()) {
            roots.push((grid[k], false));
        }
    }
    for k in 0..SCAN_POINTS - 1 {
        let (ga, gb) = (g(vals[k]), g(vals[k + 1]));
        if ga * gb < 0.0 && g(vals[k]).abs() > 1e-9 * measured.abs() && gb.abs() > 1e-9 * measured.abs() {
            let (mut lo, mut hi, mut glo) = (grid[k], grid[k + 1], ga);
            for _ in 0..50 {
                let m = 0.5 * (lo + hi);
                let gm = g(forward(m)?);
                if gm * glo > 0.0 {
                    lo = m;
                    glo = gm;
                } else {
                    hi = m;
                }
            }
            roots.push((0.5 * (lo + hi), false));
        }
    }
    // extrema that touch the measurement without crossing it
    for k in 1..SCAN_POINTS - 1 {
        let (a, b, c) = (vals[k - 1], vals[k], vals[k + 1]);
        let is_max = b >= a && b >= c;
        let is_min = b <= a && b <= c;
        if !(is_max || is_min) || !b.is_finite() {
            continue;
        }
        let (x, v) = golden_extremum(forward, grid[k - 1], grid[k + 1], is_max)?;
        let beyond = if is_max { measured >= v } else { measured <= v };
        if close(v) || (beyond && close(b)) {
            roots.push((x, true));
        }
    }
    for &k in &[0, SCAN_POINTS - 1] {
        if close(vals[k]) {
            roots.push((grid[k], true));
        }
    }
    roots.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut merged: Vec<(f64, bool)> = Vec::new();
    for r in roots {
        match merged.last_mut() {
            Some(last) if (r.0 - last.0).abs() < 2.0 * PI / (SCAN_POINTS - 1) as f64 && (r.1 || last.1) => {
                // a crossing and a touching extremum at the same place
                if r.1 {
                    *last = r;
                }
            }
            Some(last) if (r.0 - last.0).abs() < 1e-6 => {}
            _ => merged.push(r),
        }
    }
    let first = *merged
        .first()
        .ok_or_else(|| AnalysisError::OutOfRange(format!("ratio {measured:.4} outside the forward curve")))?;
    Ok(BirefringenceEstimate {
        delta: first.0,
        roots: merged.iter().map(|r| r.0).collect(),
        ambiguous: merged.len() > 1,
        flat: first.1,
        measured_ratio: measured,
    })
}

/// Interference amplitudes for H, V, diagonal and right-circular references.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceAmplitudes {
    pub h: f64,
    pub v: f64,
    pub d: f64,
    pub r: f64,
}

/// Reference polarization that maximizes the interference amplitude,
/// treating the amplitude as a Hermitian form in the reference Jones vector.
pub fn optimal_reference(m: &ReferenceAmplitudes) -> (JonesVector, f64) {
    let re = m.d - 0.5 * (m.h + m.v);
    let im = 0.5 * (m.h + m.v) - m.r;
    let b = Complex64::new(re, im);
    let half = 0.5 * (m.h - m.v);
    let lmax = 0.5 * (m.h + m.v) + (half * half + b.norm_sqr()).sqrt();
    let v = if b.norm() > 1e-15 {
        JonesVector::new(b, Complex64::new(lmax - m.h, 0.0))
    } else if m.h >= m.v {
        JonesVector::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0))
    } else {
        JonesVector::new(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0))
    };
    (v / Complex64::new(v.norm(), 0.0), lmax)
}

/// Optic-axis angle in [0, pi) whose predicted optimal reference best
/// overlaps the measured one.
pub fn estimate_axis_angle(measured: &JonesVector, forward: &dyn Fn(f64) -> Result<JonesVector>) -> Result<f64> {
    let overlap = |a: f64| -> Result<f64> { Ok(measured.dotc(&forward(a)?).norm_sqr()) };
    let n = 36;
    let vals = (0..n)
        .map(|k| overlap(PI * k as f64 / n as f64))
        .collect::<Result<Vec<_>>>()?;
    let k = (0..n).max_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap_or(0);
    let step = PI / n as f64;
    let c = k as f64 * step;
    let (a, _) = golden_extremum(&overlap, c - step, c + step, true)?;
    Ok(a.rem_euclid(PI))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::biphoton::{joint_spectral_amplitude, CrystalSpec, GridSpec, PumpSpec};
    use crate::interferometer::CoincidenceKernel;
    use crate::materials::MaterialDatabase;
    use crate::sample::{preset_sample, quarter_wave_thickness_um, PresetParams};

    fn js() -> JointSpectrum {
        joint_spectral_amplitude(
            &PumpSpec::gaussian(400.0, 2.0),
            &CrystalSpec::bbo(0.5).unwrap(),
            &GridSpec::with_size(256),
        )
        .unwrap()
    }

    fn scan() -> ScanConfig {
        ScanConfig::window(-30.0, 30.0, 0.25)
    }

    fn quartz(delta: f64, alpha: f64) -> SampleStack {
        let db = MaterialDatabase::builtin();
        let q = db.get("quartz").unwrap();
        let t = quarter_wave_thickness_um(&q, 800.0).unwrap() * delta / (PI / 2.0);
        let params = PresetParams {
            quartz_thickness_um: Some(t.max(1e-6)),
            quartz_axis_angle_rad: alpha,
            ..PresetParams::default()
        };
        preset_sample("quartz_mirror", &params, &db).unwrap()
    }

    #[test]
    fn combined_scan_matches_summed_interference_terms() {
        let js = js();
        let stack = quartz(1.0, 0.4);
        let ps = polarization_set(&js, &stack, &scan()).unwrap();
        let rt = combined_interferogram(&ps);
        let h = sample_channel(&stack, &js.grid, &Polarization::H.vector()).unwrap();
        let v = sample_channel(&stack, &js.grid, &Polarization::V.vector()).unwrap();
        let kh = CoincidenceKernel::for_channel(&js, &h);
        let kv = CoincidenceKernel::for_channel(&js, &v);
        for (x, r) in rt.delays_um.iter().zip(&rt.rate) {
            let tau = crate::interferometer::internal_delay(&js, &h, *x);
            let expect = 1.0 - (kh.lambda(tau).re + kv.lambda(tau).re) / kh.baseline;
            assert!((r - expect).abs() < 1e-12);
            // unnormalized identity with the shared baseline
            let (rh, rv) = (ps.lambda0 * ps.r_h.rate[0], ps.lambda0 * ps.r_v.rate[0]);
            assert!(((rh + rv - ps.lambda0) / ps.lambda0 - rt.rate[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_baselines_give_unit_combination() {
        let js = js();
        let db = MaterialDatabase::builtin();
        let mirror = preset_sample("mirror", &PresetParams::default(), &db).unwrap();
        let mut ps = polarization_set(&js, &mirror, &scan()).unwrap();
        ps.r_h.rate.iter_mut().for_each(|r| *r = 1.0);
        ps.r_v.rate.iter_mut().for_each(|r| *r = 1.0);
        assert!(combined_interferogram(&ps).rate.iter().all(|r| *r == 1.0));
    }

    #[test]
    fn bare_mirror_has_no_v_interference() {
        let js = js();
        let db = MaterialDatabase::builtin();
        let mirror = preset_sample("mirror", &PresetParams::default(), &db).unwrap();
        let ps = polarization_set(&js, &mirror, &scan()).unwrap();
        let rep = combine_polarization(&ps, 0.05).unwrap();
        assert_eq!(rep.layers.len(), 1);
        assert_eq!(rep.layers[0].ratio, 0.0);
        assert!(rep.layers[0].lambda_h > 0.1);
    }

    #[test]
    fn mismatched_sets_are_rejected() {
        let js = js();
        let db = MaterialDatabase::builtin();
        let mirror = preset_sample("mirror", &PresetParams::default(), &db).unwrap();
        let ps = polarization_set(&js, &mirror, &scan()).unwrap();
        let mut short = ps.r_v.clone();
        short.rate.pop();
        short.delays_um.pop();
        assert!(matches!(
            PolarizationSet::new(ps.r_h.clone(), short),
            Err(AnalysisError::Mismatch(_))
        ));
        let mut other = ps.r_v.clone();
        other.baseline *= 2.0;
        assert!(matches!(
            PolarizationSet::new(ps.r_h, other),
            Err(AnalysisError::Mismatch(_))
        ));
    }

    fn forward(js: &JointSpectrum, alpha: f64) -> impl Fn(f64) -> Result<f64> + '_ {
        move |d| {
            let ps = polarization_set(js, &quartz(d, alpha), &scan())?;
            layer_ratio(&ps, 0.0, 10.0)
        }
    }

    #[test]
    fn retardation_recovered_closed_loop() {
        let js = js();
        let alpha = PI / 6.0;
        let f = forward(&js, alpha);
        for &delta in &[0.6, PI / 2.0] {
            let ps = polarization_set(&js, &quartz(delta, alpha), &scan()).unwrap();
            let est = extract_birefringence(&ps, 0.0, 10.0, &f).unwrap();
            assert!(est.roots.iter().any(|r| (r - delta).abs() < 0.02), "{delta}: {est:?}");
            assert!((est.delta - delta).abs() < 0.05 || est.ambiguous, "{delta}: {est:?}");
        }
    }

    #[test]
    fn mirror_symmetric_roots_are_flagged() {
        // tan-like curve symmetric about pi/2
        let f = |d: f64| -> Result<f64> { Ok(d.sin().abs()) };
        let est = invert_retardation(0.5, &f).unwrap();
        assert!(est.ambiguous);
        assert_eq!(est.roots.len(), 2);
        assert!((est.roots[0] - 0.5f64.asin()).abs() < 1e-9);
        assert!((est.roots[1] - (PI - 0.5f64.asin())).abs() < 1e-9);
        let top = invert_retardation(1.0, &f).unwrap();
        assert!((top.delta - PI / 2.0).abs() < 1e-3 && top.flat);
        assert!(matches!(invert_retardation(2.0, &f), Err(AnalysisError::OutOfRange(_))));
        let zero = invert_retardation(0.0, &f).unwrap();
        assert_eq!(zero.delta, 0.0);
    }

    #[test]
    fn optimal_reference_of_pure_states() {
        let (v, l) = optimal_reference(&ReferenceAmplitudes {
            h: 1.0,
            v: 0.0,
            d: 0.5,
            r: 0.5,
        });
        assert!((v[0].norm() - 1.0).abs() < 1e-12 && l == 1.0);
        // diagonal state: M = [[.5,.5],[.5,.5]]
        let (v, l) = optimal_reference(&ReferenceAmplitudes {
            h: 0.5,
            v: 0.5,
            d: 1.0,
            r: 0.5,
        });
        assert!((l - 1.0).abs() < 1e-12);
        assert!((v[0] - v[1]).norm() < 1e-12);
        // circular state (1, i)/sqrt2: M_HV = -i/2 gives R amplitude 1
        let (v, _) = optimal_reference(&ReferenceAmplitudes {
            h: 0.5,
            v: 0.5,
            d: 0.5,
            r: 1.0,
        });
        let e = JonesVector::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)) / Complex64::new(2f64.sqrt(), 0.0);
        assert!((e.dotc(&v).norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn axis_angle_from_overlap() {
        let target = 0.7;
        let model = |a: f64| -> Result<JonesVector> {
            Ok(JonesVector::new(
                Complex64::new(a.cos(), 0.0),
                Complex64::new(a.sin(), 0.0),
            ))
        };
        let a = estimate_axis_angle(&model(target).unwrap(), &model).unwrap();
        assert!((a - target).abs() < 1e-5);
    }
}
