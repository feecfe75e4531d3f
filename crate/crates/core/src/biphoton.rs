//! Pulsed-pump Type-II SPDC joint spectral amplitude.
//!
//! Signal photons are extraordinary (V) and idler photons ordinary (H) in the
//! crystal. The amplitude is sampled on a square grid of detunings from the
//! half pump frequency; rows index the signal, columns the idler.

use std::io::Write;
use std::sync::Arc;

use num_complex::Complex64;
use thiserror::Error;

use crate::materials::{Axis, Material, MaterialDatabase, MaterialError};
use crate::units::{bandwidth_nm_to_frequency, wavelength_to_frequency, C_MM_PER_FS};

#[derive(Debug, Error)]
pub enum BiphotonError {
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("grid span {span:.4e} rad/fs is below 4x the spectral width {required:.4e} rad/fs")]
    InsufficientSpan { span: f64, required: f64 },
    #[error("{:.2}% of the biphoton density lies in the outer grid border", fraction * 100.0)]
    BorderMass { fraction: f64 },
    #[error("degenerate (zero-variance) joint spectrum")]
    Degenerate,
}

pub type Result<T> = std::result::Result<T, BiphotonError>;

/// sin(x)/x with the removable singularity filled in.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-8 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvelopeShape {
    Gaussian,
    Cw,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PumpSpec {
    pub center_wavelength_nm: f64,
    /// Intensity FWHM of the pump spectrum in nm (ignored for cw).
    pub bandwidth_fwhm_nm: f64,
    pub shape: EnvelopeShape,
    /// Shift of the pump center wavelength, nm.
    pub detuning_nm: f64,
}

impl PumpSpec {
    pub fn cw(center_wavelength_nm: f64) -> Self {
        Self {
            center_wavelength_nm,
            bandwidth_fwhm_nm: 0.0,
            shape: EnvelopeShape::Cw,
            detuning_nm: 0.0,
        }
    }

    pub fn gaussian(center_wavelength_nm: f64, bandwidth_fwhm_nm: f64) -> Self {
        Self {
            center_wavelength_nm,
            bandwidth_fwhm_nm,
            shape: EnvelopeShape::Gaussian,
            detuning_nm: 0.0,
        }
    }

    /// Gaussian pump whose spectrum is transform limited for an intensity
    /// FWHM duration of `duration_fs`.
    pub fn transform_limited(center_wavelength_nm: f64, duration_fs: f64) -> Self {
        let dw = 4.0 * std::f64::consts::LN_2 / duration_fs;
        let dl = crate::units::bandwidth_frequency_to_nm(center_wavelength_nm, dw);
        Self::gaussian(center_wavelength_nm, dl)
    }

    pub fn with_detuning(mut self, detuning_nm: f64) -> Self {
        self.detuning_nm = detuning_nm;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.center_wavelength_nm > 0.0 && self.center_wavelength_nm.is_finite()) {
            return Err(BiphotonError::InvalidParameter(format!(
                "pump wavelength must be positive, got {}",
                self.center_wavelength_nm
            )));
        }
        if self.shape == EnvelopeShape::Gaussian && !(self.bandwidth_fwhm_nm > 0.0) {
            return Err(BiphotonError::InvalidParameter(format!(
                "gaussian pump bandwidth must be positive, got {}",
                self.bandwidth_fwhm_nm
            )));
        }
        if !self.detuning_nm.is_finite() || self.center_wavelength_nm + self.detuning_nm <= 0.0 {
            return Err(BiphotonError::InvalidParameter("pump detuning".into()));
        }
        Ok(())
    }

    /// Nominal (undetuned) pump angular frequency.
    pub fn nominal_frequency(&self) -> f64 {
        wavelength_to_frequency(self.center_wavelength_nm)
    }

    /// Pump angular frequency including the detuning.
    pub fn frequency(&self) -> f64 {
        wavelength_to_frequency(self.center_wavelength_nm + self.detuning_nm)
    }

    /// Intensity FWHM in angular frequency, zero for cw.
    pub fn frequency_fwhm(&self) -> f64 {
        match self.shape {
            EnvelopeShape::Cw => 0.0,
            EnvelopeShape::Gaussian => bandwidth_nm_to_frequency(self.center_wavelength_nm, self.bandwidth_fwhm_nm),
        }
    }

    /// Width parameter of the amplitude envelope exp(-x^2 / (2 sigma^2)).
    pub fn sigma(&self) -> f64 {
        self.frequency_fwhm() / (2.0 * std::f64::consts::LN_2.sqrt())
    }

    /// Envelope amplitude at a total detuning `Omega_s + Omega_i` from the
    /// pump center. Unit peak.
    pub fn envelope(&self, total_detuning: f64) -> Complex64 {
        match self.shape {
            EnvelopeShape::Cw => {
                if total_detuning == 0.0 {
                    Complex64::new(1.0, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
            EnvelopeShape::Gaussian => {
                let s = self.sigma();
                Complex64::new((-total_detuning * total_detuning / (2.0 * s * s)).exp(), 0.0)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseMatching {
    /// Group-velocity-mismatch expansion about the operating point.
    FirstOrder,
    /// Direct Sellmeier evaluation of all three wavenumbers.
    Exact,
}

/// Collinear degenerate Type-II crystal (pump e, signal e, idler o).
#[derive(Debug, Clone)]
pub struct CrystalSpec {
    pub material: Arc<Material>,
    pub length_mm: f64,
    /// Angle between the propagation direction and the optic axis, rad.
    pub cut_angle_rad: f64,
    pub degenerate_wavelength_nm: f64,
    pub phase_matching: PhaseMatching,
    /// k_p' - k_e', fs/mm.
    pub slope_signal: f64,
    /// k_p' - k_o', fs/mm.
    pub slope_idler: f64,
}

/// Type-II collinear phase-matching angle of BBO for 400 nm -> 800 + 800 nm.
pub const BBO_TYPE2_CUT_DEG: f64 = 42.347;

impl CrystalSpec {
    pub fn new(
        material: Arc<Material>,
        length_mm: f64,
        cut_angle_rad: f64,
        degenerate_wavelength_nm: f64,
    ) -> Result<Self> {
        if !(length_mm > 0.0 && length_mm.is_finite()) {
            return Err(BiphotonError::InvalidParameter(format!(
                "crystal length must be positive, got {length_mm}"
            )));
        }
        if !material.is_uniaxial() {
            return Err(BiphotonError::InvalidParameter(format!(
                "Type-II phase matching needs a uniaxial crystal, `{}` is isotropic",
                material.name
            )));
        }
        let ng_p = group_index_at_angle(&material, degenerate_wavelength_nm / 2.0, cut_angle_rad)?;
        let ng_e = group_index_at_angle(&material, degenerate_wavelength_nm, cut_angle_rad)?;
        let ng_o = material.group_index(degenerate_wavelength_nm, Axis::Ordinary)?;
        Ok(Self {
            material,
            length_mm,
            cut_angle_rad,
            degenerate_wavelength_nm,
            phase_matching: PhaseMatching::FirstOrder,
            slope_signal: (ng_p - ng_e) / C_MM_PER_FS,
            slope_idler: (ng_p - ng_o) / C_MM_PER_FS,
        })
    }

    /// BBO at the 800 nm degenerate Type-II operating point.
    pub fn bbo(length_mm: f64) -> Result<Self> {
        let bbo = MaterialDatabase::builtin().get("bbo")?;
        Self::new(bbo, length_mm, BBO_TYPE2_CUT_DEG.to_radians(), 800.0)
    }

    pub fn with_phase_matching(mut self, mode: PhaseMatching) -> Self {
        self.phase_matching = mode;
        self
    }

    /// Degenerate signal/idler frequency.
    pub fn degenerate_frequency(&self) -> f64 {
        wavelength_to_frequency(self.degenerate_wavelength_nm)
    }

    /// Inverse group velocity difference of the idler and signal, fs/mm.
    pub fn group_delay_mismatch(&self) -> f64 {
        self.slope_signal - self.slope_idler
    }

    /// Delay (fs) separating the signal and idler wavepackets at the exit
    /// face; the HOM dip of a bare mirror sits at this offset.
    pub fn walkoff_delay(&self) -> f64 {
        0.5 * self.group_delay_mismatch() * self.length_mm
    }

    fn exact_mismatch(&self, omega_s: f64, omega_i: f64) -> Result<f64> {
        let wl = crate::units::frequency_to_wavelength;
        let m = &self.material;
        let wp = omega_s + omega_i;
        let np = m.index_at_angle(wl(wp), self.cut_angle_rad)?.0;
        let ns = m.index_at_angle(wl(omega_s), self.cut_angle_rad)?.0;
        let ni = m.refractive_index(wl(omega_i), Axis::Ordinary)?;
        Ok((wp * np - omega_s * ns - omega_i * ni) / C_MM_PER_FS)
    }

    /// Phase mismatch (rad/mm) relative to the degenerate point.
    pub fn phase_mismatch(&self, omega_s: f64, omega_i: f64) -> Result<f64> {
        self.phase_mismatch_about(omega_s, omega_i, self.degenerate_frequency())
    }

    /// Phase mismatch (rad/mm) with the constant term removed at
    /// `(reference, reference)`.
    pub fn phase_mismatch_about(&self, omega_s: f64, omega_i: f64, reference: f64) -> Result<f64> {
        match self.phase_matching {
            PhaseMatching::FirstOrder => {
                let wl = crate::units::frequency_to_wavelength;
                for w in [omega_s, omega_i] {
                    self.material.check_wavelength(wl(w))?;
                }
                self.material.check_wavelength(wl(omega_s + omega_i))?;
                Ok(self.slope_signal * (omega_s - reference) + self.slope_idler * (omega_i - reference))
            }
            PhaseMatching::Exact => {
                Ok(self.exact_mismatch(omega_s, omega_i)? - self.exact_mismatch(reference, reference)?)
            }
        }
    }

    /// Intensity FWHM of the signal marginal under a cw pump, rad/fs.
    pub fn phase_matching_fwhm(&self) -> f64 {
        // sinc^2(x) = 1/2 at x = 1.39156
        4.0 * 1.391_557_378_251_1 / (self.group_delay_mismatch().abs() * self.length_mm)
    }
}

fn group_index_at_angle(m: &Material, wavelength_nm: f64, theta: f64) -> Result<f64> {
    let (n, dn) = m.index_at_angle(wavelength_nm, theta)?;
    Ok(n - wavelength_nm * 1e-3 * dn)
}

/// Square frequency grid shared by the signal and idler axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    /// Grid center (half the actual pump frequency), rad/fs.
    pub center: f64,
    /// Nominal degenerate frequency used as the delay reference, rad/fs.
    pub reference_frequency: f64,
    pub step: f64,
    pub size: usize,
}

impl FrequencyGrid {
    pub fn new(center: f64, half_span: f64, size: usize) -> Self {
        Self {
            center,
            reference_frequency: center,
            step: 2.0 * half_span / size as f64,
            size,
        }
    }

    pub fn detuning(&self, k: usize) -> f64 {
        (k as f64 - (self.size as f64 - 1.0) / 2.0) * self.step
    }

    pub fn frequency(&self, k: usize) -> f64 {
        self.center + self.detuning(k)
    }

    pub fn frequencies(&self) -> Vec<f64> {
        (0..self.size).map(|k| self.frequency(k)).collect()
    }

    pub fn half_span(&self) -> f64 {
        0.5 * self.step * self.size as f64
    }
}

/// Grid sizing and optional detection filtering.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub size: usize,
    /// Half-width of the detuning axis, rad/fs; chosen automatically if unset.
    pub half_span: Option<f64>,
    /// Intensity FWHM (nm, about the degenerate wavelength) of a Gaussian
    /// filter applied to both detection arms.
    pub detection_filter_fwhm_nm: Option<f64>,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            size: 512,
            half_span: None,
            detection_filter_fwhm_nm: None,
        }
    }
}

impl GridSpec {
    pub fn with_size(size: usize) -> Self {
        Self {
            size,
            ..Self::default()
        }
    }
}

/// Default half span: four phase-matching side lobes or six pump widths,
/// whichever is larger.
pub fn default_half_span(pump: &PumpSpec, crystal: &CrystalSpec) -> f64 {
    let pm = 4.0 * 2.0 * std::f64::consts::PI / (crystal.group_delay_mismatch().abs() * crystal.length_mm);
    pm.max(6.0 * pump.sigma())
}

#[derive(Debug, Clone)]
pub struct JointSpectrum {
    pub grid: FrequencyGrid,
    /// Row-major amplitudes, `amplitudes[s * N + i]`.
    pub amplitudes: Vec<Complex64>,
    pub pump: Option<PumpSpec>,
    pub crystal: Option<CrystalSpec>,
    pub detection_filter_fwhm_nm: Option<f64>,
}

impl JointSpectrum {
    /// Wraps raw amplitudes, normalizing them to unit total probability.
    pub fn from_amplitudes(grid: FrequencyGrid, mut amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != grid.size * grid.size {
            return Err(BiphotonError::InvalidParameter(format!(
                "expected {} amplitudes, got {}",
                grid.size * grid.size,
                amplitudes.len()
            )));
        }
        normalize(&mut amplitudes, grid.step)?;
        Ok(Self {
            grid,
            amplitudes,
            pump: None,
            crystal: None,
            detection_filter_fwhm_nm: None,
        })
    }

    pub fn size(&self) -> usize {
        self.grid.size
    }

    #[inline]
    pub fn amplitude(&self, s: usize, i: usize) -> Complex64 {
        self.amplitudes[s * self.grid.size + i]
    }

    /// Signal marginal density sum_i |A|^2 dOmega.
    pub fn signal_marginal(&self) -> Vec<f64> {
        let n = self.grid.size;
        (0..n)
            .map(|s| (0..n).map(|i| self.amplitude(s, i).norm_sqr()).sum::<f64>() * self.grid.step)
            .collect()
    }

    /// Idler marginal density sum_s |A|^2 dOmega.
    pub fn idler_marginal(&self) -> Vec<f64> {
        let n = self.grid.size;
        (0..n)
            .map(|i| (0..n).map(|s| self.amplitude(s, i).norm_sqr()).sum::<f64>() * self.grid.step)
            .collect()
    }

    /// Fraction of |A|^2 in the outer 10% of either axis.
    pub fn border_mass(&self) -> f64 {
        let n = self.grid.size;
        let limit = 0.9 * self.grid.half_span();
        let outer: Vec<bool> = (0..n).map(|k| self.grid.detuning(k).abs() > limit).collect();
        let mut total = 0.0;
        let mut border = 0.0;
        for s in 0..n {
            for i in 0..n {
                let p = self.amplitude(s, i).norm_sqr();
                total += p;
                if outer[s] || outer[i] {
                    border += p;
                }
            }
        }
        border / total
    }

    /// Writes `omega_s, omega_i, density` rows for every grid point.
    pub fn write_density_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "omega_s,omega_i,density")?;
        let n = self.grid.size;
        for s in 0..n {
            for i in 0..n {
                writeln!(
                    w,
                    "{:.9},{:.9},{:.9e}",
                    self.grid.frequency(s),
                    self.grid.frequency(i),
                    self.amplitude(s, i).norm_sqr()
                )?;
            }
        }
        Ok(())
    }
}

fn normalize(amplitudes: &mut [Complex64], step: f64) -> Result<()> {
    let total: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * step * step;
    if !(total > 0.0 && total.is_finite()) {
        return Err(BiphotonError::Degenerate);
    }
    let scale = 1.0 / total.sqrt();
    amplitudes.iter_mut().for_each(|a| *a *= scale);
    Ok(())
}

/// Builds the normalized joint spectral amplitude
/// `pump(Omega_s + Omega_i) * sinc(dk L / 2) * exp(i dk L / 2)`.
///
/// The grid is centered on half the actual (possibly detuned) pump
/// frequency and phase matching is referenced to that point, so detuning
/// translates the biphoton without reshaping it.
pub fn joint_spectral_amplitude(pump: &PumpSpec, crystal: &CrystalSpec, spec: &GridSpec) -> Result<JointSpectrum> {
    pump.validate()?;
    let n = spec.size;
    if n < 8 {
        return Err(BiphotonError::InvalidParameter(format!("grid size {n} is too small")));
    }
    let half_span = spec.half_span.unwrap_or_else(|| default_half_span(pump, crystal));
    if !(half_span > 0.0 && half_span.is_finite()) {
        return Err(BiphotonError::InvalidParameter(format!("grid half span {half_span}")));
    }
    let required = 4.0 * pump.frequency_fwhm().max(crystal.phase_matching_fwhm());
    if 2.0 * half_span < required {
        return Err(BiphotonError::InsufficientSpan {
            span: 2.0 * half_span,
            required,
        });
    }

    let center = 0.5 * pump.frequency();
    let mut grid = FrequencyGrid::new(center, half_span, n);
    grid.reference_frequency = 0.5 * pump.nominal_frequency();
    let freqs = grid.frequencies();

    let filter: Vec<f64> = match spec.detection_filter_fwhm_nm {
        None => vec![1.0; n],
        Some(fwhm) if fwhm > 0.0 => {
            let dw = bandwidth_nm_to_frequency(crystal.degenerate_wavelength_nm, fwhm);
            let sigma = dw / (2.0 * std::f64::consts::LN_2.sqrt());
            freqs
                .iter()
                .map(|w| {
                    let d = w - grid.reference_frequency;
                    (-d * d / (2.0 * sigma * sigma)).exp()
                })
                .collect()
        }
        Some(fwhm) => {
            return Err(BiphotonError::InvalidParameter(format!(
                "detection filter width must be positive, got {fwhm}"
            )))
        }
    };

    let half_l = 0.5 * crystal.length_mm;
    let mut amplitudes = vec![Complex64::new(0.0, 0.0); n * n];
    for s in 0..n {
        for i in 0..n {
            let env = match pump.shape {
                EnvelopeShape::Cw => {
                    if s + i == n - 1 {
                        Complex64::new(1.0, 0.0)
                    } else {
                        continue;
                    }
                }
                EnvelopeShape::Gaussian => pump.envelope(grid.detuning(s) + grid.detuning(i)),
            };
            if env.norm_sqr() < 1e-300 {
                continue;
            }
            let dk = crystal.phase_mismatch_about(freqs[s], freqs[i], center)?;
            let x = dk * half_l;
            amplitudes[s * n + i] = env * sinc(x) * Complex64::from_polar(1.0, x) * filter[s] * filter[i];
        }
    }
    normalize(&mut amplitudes, grid.step)?;
    let js = JointSpectrum {
        grid,
        amplitudes,
        pump: Some(*pump),
        crystal: Some(crystal.clone()),
        detection_filter_fwhm_nm: spec.detection_filter_fwhm_nm,
    };
    let fraction = js.border_mass();
    if fraction > 0.01 {
        return Err(BiphotonError::BorderMass { fraction });
    }
    Ok(js)
}

/// Pearson correlation of the signal and idler detunings under |A|^2.
pub fn anticorrelation(js: &JointSpectrum) -> Result<f64> {
    let n = js.grid.size;
    let (mut w, mut ms, mut mi) = (0.0, 0.0, 0.0);
    for s in 0..n {
        for i in 0..n {
            let p = js.amplitude(s, i).norm_sqr();
            w += p;
            ms += p * js.grid.detuning(s);
            mi += p * js.grid.detuning(i);
        }
    }
    if !(w > 0.0) {
        return Err(BiphotonError::Degenerate);
    }
    ms /= w;
    mi /= w;
    let (mut vss, mut vii, mut vsi) = (0.0, 0.0, 0.0);
    for s in 0..n {
        let ds = js.grid.detuning(s) - ms;
        for i in 0..n {
            let p = js.amplitude(s, i).norm_sqr();
            if p == 0.0 {
                continue;
            }
            let di = js.grid.detuning(i) - mi;
            vss += p * ds * ds;
            vii += p * di * di;
            vsi += p * ds * di;
        }
    }
    let denom = (vss * vii).sqrt();
    if !(denom > 0.0) || denom < 1e-300 * w {
        return Err(BiphotonError::Degenerate);
    }
    Ok((vsi / denom).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ps_pump() -> PumpSpec {
        PumpSpec::transform_limited(400.0, 10_000.0)
    }

    fn fs_pump() -> PumpSpec {
        PumpSpec::gaussian(400.0, 2.0)
    }

    #[test]
    fn sinc_is_continuous_at_zero() {
        assert_eq!(sinc(0.0), 1.0);
        assert!((sinc(1e-9) - 1.0).abs() < 1e-15);
        assert!((sinc(std::f64::consts::PI)).abs() < 1e-15);
    }

    #[test]
    fn cw_envelope_is_a_ridge() {
        let p = PumpSpec::cw(400.0);
        assert_eq!(p.envelope(0.0).re, 1.0);
        assert_eq!(p.envelope(1e-6).norm(), 0.0);
        assert_eq!(p.envelope(-0.3).norm(), 0.0);
    }

    #[test]
    fn gaussian_envelope_half_intensity_at_half_width() {
        let p = fs_pump();
        assert_eq!(p.envelope(0.0).re, 1.0);
        let hw = 0.5 * p.frequency_fwhm();
        assert!((p.envelope(hw).norm_sqr() - 0.5).abs() < 1e-12);
        assert!((p.envelope(-hw).norm_sqr() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn ten_ps_pump_bandwidth() {
        let p = ps_pump();
        assert!((p.frequency_fwhm() - 4.0 * std::f64::consts::LN_2 / 1e4).abs() < 1e-12);
        assert!((p.bandwidth_fwhm_nm - 0.0235).abs() < 5e-4);
    }

    #[test]
    fn mismatch_vanishes_at_degeneracy() {
        let c = CrystalSpec::bbo(1.5).unwrap();
        let w0 = c.degenerate_frequency();
        assert_eq!(c.phase_mismatch(w0, w0).unwrap(), 0.0);
        let e = c.clone().with_phase_matching(PhaseMatching::Exact);
        assert_eq!(e.phase_mismatch(w0, w0).unwrap(), 0.0);
    }

    #[test]
    fn bbo_cut_angle_phase_matches() {
        let c = CrystalSpec::bbo(1.5).unwrap();
        let w0 = c.degenerate_frequency();
        let raw = c.exact_mismatch(w0, w0).unwrap();
        assert!(raw.abs() * c.length_mm < 0.1, "raw mismatch {raw} rad/mm");
    }

    #[test]
    fn type2_mismatch_is_asymmetric_with_gvm_slope() {
        let c = CrystalSpec::bbo(1.5).unwrap();
        let w0 = c.degenerate_frequency();
        let om = 0.01;
        let plus = c.phase_mismatch(w0 + om, w0 - om).unwrap();
        let minus = c.phase_mismatch(w0 - om, w0 + om).unwrap();
        assert!((plus - minus).abs() > 1e-3);
        // oracle: group indices of the idler (o) and signal (e) at 800 nm
        let bbo = &c.material;
        let ng_o = bbo.group_index(800.0, Axis::Ordinary).unwrap();
        let (n, dn) = bbo.index_at_angle(800.0, c.cut_angle_rad).unwrap();
        let ng_e = n - 0.8 * dn;
        let coeff = (ng_o - ng_e) / C_MM_PER_FS;
        assert!((plus / om - coeff).abs() < 1e-9 * coeff.abs());
        assert!((coeff - 193.9).abs() < 0.5, "coefficient {coeff}");
        let exact = c.clone().with_phase_matching(PhaseMatching::Exact);
        let ex = exact.phase_mismatch(w0 + om, w0 - om).unwrap();
        assert!((ex / om - coeff).abs() < 0.02 * coeff);
    }

    #[test]
    fn out_of_range_frequency_is_an_error() {
        let c = CrystalSpec::bbo(1.5).unwrap();
        let w = wavelength_to_frequency(1500.0);
        assert!(c.phase_mismatch(w, w).is_err());
    }

    #[test]
    fn cw_ridge_is_anti_diagonal_with_mirror_marginals() {
        let c = CrystalSpec::bbo(1.5).unwrap();
        let js = joint_spectral_amplitude(&PumpSpec::cw(400.0), &c, &GridSpec::with_size(128)).unwrap();
        let n = js.size();
        for s in 0..n {
            for i in 0..n {
                if s + i != n - 1 {
                    assert_eq!(js.amplitude(s, i).norm(), 0.0);
                }
            }
        }
        let sm = js.signal_marginal();
        let im = js.idler_marginal();
        for k in 0..n {
            assert!((sm[k] - im[n - 1 - k]).abs() < 1e-12);
        }
        assert!(anticorrelation(&js).unwrap() <= -0.999);
    }

    #[test]
    fn ps_preset_is_anticorrelated() {
        let c = CrystalSpec::bbo(1.5).unwrap();
        let js = joint_spectral_amplitude(&ps_pump(), &c, &GridSpec::default()).unwrap();
        assert!(anticorrelation(&js).unwrap() <= -0.99);
    }

    #[test]
    fn fs_preset_is_less_anticorrelated() {
        let ps = joint_spectral_amplitude(&ps_pump(), &CrystalSpec::bbo(1.5).unwrap(), &GridSpec::default()).unwrap();
        let fs = joint_spectral_amplitude(&fs_pump(), &CrystalSpec::bbo(0.5).unwrap(), &GridSpec::default()).unwrap();
        let a_ps = anticorrelation(&ps).unwrap();
        let a_fs = anticorrelation(&fs).unwrap();
        assert!(a_fs > a_ps, "fs {a_fs} ps {a_ps}");
    }

    #[test]
    fn fs_anticorrelation_matches_direct_double_sum() {
        let js = joint_spectral_amplitude(&fs_pump(), &CrystalSpec::bbo(0.5).unwrap(), &GridSpec::default()).unwrap();
        // Independent evaluation via raw moments.
        let n = js.size();
        let (mut w, mut s1, mut i1, mut s2, mut i2, mut si) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        for s in 0..n {
            for i in 0..n {
                let p = js.amplitude(s, i).norm_sqr();
                let (x, y) = (js.grid.detuning(s), js.grid.detuning(i));
                w += p;
                s1 += p * x;
                i1 += p * y;
                s2 += p * x * x;
                i2 += p * y * y;
                si += p * x * y;
            }
        }
        let cov = si / w - s1 * i1 / w / w;
        let r = cov / ((s2 / w - (s1 / w).powi(2)) * (i2 / w - (i1 / w).powi(2))).sqrt();
        let a = anticorrelation(&js).unwrap();
        assert!((a - r).abs() < 1e-9);
        // golden value for the 2 nm, 0.5 mm, N = 512 configuration
        assert!((a - FS_GOLDEN_ANTICORRELATION).abs() < 1e-6, "anticorrelation {a}");
    }

    const FS_GOLDEN_ANTICORRELATION: f64 = -0.973_959_645_52;

    #[test]
    fn separable_spectrum_is_uncorrelated() {
        let grid = FrequencyGrid::new(2.35, 0.1, 64);
        let f = |k: usize| (-(grid.detuning(k) / 0.03).powi(2)).exp();
        let g = |k: usize| (-(grid.detuning(k) / 0.02 - 0.5).powi(2)).exp();
        let amps = (0..64)
            .flat_map(|s| (0..64).map(move |i| (s, i)))
            .map(|(s, i)| Complex64::new(f(s) * g(i), 0.0))
            .collect();
        let js = JointSpectrum::from_amplitudes(grid, amps).unwrap();
        assert!(anticorrelation(&js).unwrap().abs() < 1e-3);
    }

    #[test]
    fn zero_spectrum_is_degenerate() {
        let grid = FrequencyGrid::new(2.35, 0.1, 16);
        assert!(matches!(
            JointSpectrum::from_amplitudes(grid, vec![Complex64::new(0.0, 0.0); 256]),
            Err(BiphotonError::Degenerate)
        ));
    }

    #[test]
    fn narrow_span_is_rejected() {
        let c = CrystalSpec::bbo(0.5).unwrap();
        let spec = GridSpec {
            half_span: Some(0.02),
            ..GridSpec::default()
        };
        assert!(matches!(
            joint_spectral_amplitude(&fs_pump(), &c, &spec),
            Err(BiphotonError::InsufficientSpan { .. })
        ));
    }

    #[test]
    fn border_mass_sees_truncated_tails() {
        let grid = FrequencyGrid::new(2.35, 0.1, 64);
        let amps = (0..64 * 64)
            .map(|k| {
                let (s, i) = (k / 64, k % 64);
                let x = grid.detuning(s) / 0.08;
                let y = grid.detuning(i) / 0.08;
                Complex64::new((-(x * x + y * y)).exp(), 0.0)
            })
            .collect();
        let js = JointSpectrum::from_amplitudes(grid, amps).unwrap();
        assert!(js.border_mass() > 0.01);
    }

    #[test]
    fn default_grids_leave_margin_on_border_mass() {
        for (pump, l) in [
            (ps_pump(), 1.5),
            (fs_pump(), 0.5),
            (PumpSpec::cw(400.0), 0.5),
            (fs_pump(), 1.5),
        ] {
            let js = joint_spectral_amplitude(&pump, &CrystalSpec::bbo(l).unwrap(), &GridSpec::default()).unwrap();
            assert!(js.border_mass() < 0.005, "border {}", js.border_mass());
        }
    }

    #[test]
    fn detuned_pump_translates_grid() {
        let c = CrystalSpec::bbo(0.5).unwrap();
        let a = joint_spectral_amplitude(&fs_pump(), &c, &GridSpec::with_size(128)).unwrap();
        let b = joint_spectral_amplitude(&fs_pump().with_detuning(0.01), &c, &GridSpec::with_size(128)).unwrap();
        assert!(b.grid.center < a.grid.center);
        assert_eq!(a.grid.reference_frequency, b.grid.reference_frequency);
        for (x, y) in a.amplitudes.iter().zip(&b.amplitudes) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn refinement_is_stable() {
        let c = CrystalSpec::bbo(0.5).unwrap();
        let a = anticorrelation(&joint_spectral_amplitude(&fs_pump(), &c, &GridSpec::with_size(256)).unwrap()).unwrap();
        let b = anticorrelation(&joint_spectral_amplitude(&fs_pump(), &c, &GridSpec::with_size(512)).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-3, "{a} vs {b}");
    }

    #[test]
    fn anticorrelation_relaxes_with_bandwidth() {
        let c = CrystalSpec::bbo(0.5).unwrap();
        let mut last = -1.0;
        for bw in [0.01, 0.5, 1.0, 2.0, 4.0] {
            let js = joint_spectral_amplitude(&PumpSpec::gaussian(400.0, bw), &c, &GridSpec::with_size(256)).unwrap();
            let a = anticorrelation(&js).unwrap();
            assert!(a >= last - 1e-9, "{bw} nm: {a} < {last}");
            last = a;
        }
    }

    #[test]
    fn density_csv_has_header_and_rows() {
        let c = CrystalSpec::bbo(1.5).unwrap();
        let js = joint_spectral_amplitude(&PumpSpec::cw(400.0), &c, &GridSpec::with_size(16)).unwrap();
        let mut buf = Vec::new();
        js.write_density_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("omega_s,omega_i,density\n"));
        assert_eq!(text.lines().count(), 1 + 256);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn every_spectrum_is_normalized(bw in 0.01f64..4.0, len in 0.3f64..2.0, n in 32usize..160, cw in any::<bool>()) {
            let pump = if cw { PumpSpec::cw(400.0) } else { PumpSpec::gaussian(400.0, bw) };
            let js = joint_spectral_amplitude(&pump, &CrystalSpec::bbo(len).unwrap(), &GridSpec::with_size(n)).unwrap();
            let total: f64 = js.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * js.grid.step.powi(2);
            prop_assert!((total - 1.0).abs() < 1e-9);
        }

        #[test]
        fn cw_support_stays_on_the_ridge(len in 0.3f64..2.0, n in 16usize..128) {
            let js = joint_spectral_amplitude(&PumpSpec::cw(400.0), &CrystalSpec::bbo(len).unwrap(), &GridSpec::with_size(n)).unwrap();
            for s in 0..n {
                for i in 0..n {
                    if js.amplitude(s, i).norm() > 0.0 {
                        prop_assert!((s + i) as i64 - (n as i64 - 1) <= 1);
                        prop_assert!((js.grid.detuning(s) + js.grid.detuning(i)).abs() <= js.grid.step);
                    }
                }
            }
        }
    }
}
