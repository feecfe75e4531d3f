//! Layered, dispersive, birefringent samples.
//!
//! A stack is a sequence of reflecting interfaces separated by layers. Only
//! first-order reflections are kept: each interface contributes once, after a
//! double pass through every layer above it. The sample arm contains an ideal
//! quarter-wave plate at 45 degrees that is traversed on the way in and out.

mod presets;

use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Deserialize;
use thiserror::Error;

use crate::biphoton::FrequencyGrid;
use crate::materials::{Axis, Material, MaterialDatabase, MaterialError};
use crate::units::{frequency_to_wavelength, C_MM_PER_FS};

pub use presets::{preset_sample, quarter_wave_thickness_um, PresetParams, PRESET_NAMES};

pub type Jones = Matrix2<Complex64>;
pub type JonesVector = Vector2<Complex64>;

#[derive(Debug, Error)]
pub enum SampleError {
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error("invalid sample: {0}")]
    Invalid(String),
    #[error("unknown sample preset `{0}`")]
    UnknownPreset(String),
    #[error("sample file: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, SampleError>;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Linear polarization states of the reference arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarization {
    H,
    V,
}

impl Polarization {
    pub fn vector(self) -> JonesVector {
        match self {
            Polarization::H => JonesVector::new(ONE, ZERO),
            Polarization::V => JonesVector::new(ZERO, ONE),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Polarization::H => "H",
            Polarization::V => "V",
        }
    }
}

impl std::str::FromStr for Polarization {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "H" | "h" => Ok(Polarization::H),
            "V" | "v" => Ok(Polarization::V),
            other => Err(format!("unknown polarization `{other}` (expected H or V)")),
        }
    }
}

/// Normal-incidence Fresnel amplitude coefficients going from `n1` into `n2`.
pub fn fresnel_coefficients(n1: f64, n2: f64) -> (Complex64, Complex64) {
    let r = (n1 - n2) / (n1 + n2);
    let t = 2.0 * n1 / (n1 + n2);
    (Complex64::new(r, 0.0), Complex64::new(t, 0.0))
}

/// Rotation matrix `[[c, s], [-s, c]]`.
pub fn rotation(theta: f64) -> Jones {
    let (s, c) = theta.sin_cos();
    let (s, c) = (Complex64::new(s, 0.0), Complex64::new(c, 0.0));
    Jones::new(c, s, -s, c)
}

/// Ideal quarter-wave plate with its fast axis at 45 degrees.
pub fn quarter_wave_plate() -> Jones {
    let q = std::f64::consts::FRAC_PI_4;
    rotation(-q) * Jones::new(ONE, ZERO, ZERO, Complex64::i()) * rotation(q)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interface {
    pub r: Complex64,
    pub label: String,
}

impl Interface {
    pub fn new(r: Complex64, label: impl Into<String>) -> Self {
        Self { r, label: label.into() }
    }

    pub fn mirror() -> Self {
        Self::new(Complex64::new(-1.0, 0.0), "mirror")
    }

    pub fn transparent(label: impl Into<String>) -> Self {
        Self::new(ZERO, label)
    }
}

#[derive(Debug, Clone)]
pub struct Layer {
    pub thickness_um: f64,
    pub material: Arc<Material>,
    /// In-plane angle of the optic axis, rad (ignored for isotropic media).
    pub optic_axis_angle_rad: f64,
    /// Exact Sellmeier phase, or the third-order expansion about
    /// `expansion_wavelength_nm`.
    pub use_exact_phase: bool,
    pub expansion_wavelength_nm: f64,
}

impl Layer {
    pub fn new(material: Arc<Material>, thickness_um: f64) -> Self {
        Self {
            thickness_um,
            material,
            optic_axis_angle_rad: 0.0,
            use_exact_phase: true,
            expansion_wavelength_nm: 800.0,
        }
    }

    pub fn with_axis_angle(mut self, alpha_rad: f64) -> Self {
        self.optic_axis_angle_rad = alpha_rad;
        self
    }

    fn wavenumber(&self, omega: f64, axis: Axis) -> Result<f64> {
        if self.use_exact_phase {
            Ok(self.material.wavenumber(omega, axis)?)
        } else {
            self.material.check_wavelength(frequency_to_wavelength(omega))?;
            let b = self.material.beta_expansion(self.expansion_wavelength_nm, axis, 3)?;
            Ok(b.wavenumber(omega))
        }
    }

    /// Single-pass phase (rad) along `axis`.
    pub fn phase(&self, omega: f64, axis: Axis) -> Result<f64> {
        Ok(self.wavenumber(omega, axis)? * self.thickness_um * 1e-3)
    }

    /// Single-pass retardation `(k_e - k_o) L`; zero for isotropic layers.
    pub fn retardation(&self, omega: f64) -> Result<f64> {
        if self.material.is_uniaxial() {
            Ok(self.phase(omega, Axis::Extraordinary)? - self.phase(omega, Axis::Ordinary)?)
        } else {
            Ok(0.0)
        }
    }

    /// Jones matrix for `passes` traversals of the layer.
    pub fn jones(&self, omega: f64, passes: u32) -> Result<Jones> {
        let p = passes as f64;
        if self.thickness_um == 0.0 {
            return Ok(Jones::identity());
        }
        if !self.material.is_uniaxial() {
            let phi = self.phase(omega, Axis::Isotropic)? * p;
            return Ok(Jones::identity() * Complex64::from_polar(1.0, phi));
        }
        let pe = self.phase(omega, Axis::Extraordinary)? * p;
        let po = self.phase(omega, Axis::Ordinary)? * p;
        let d = Jones::new(
            Complex64::from_polar(1.0, pe),
            ZERO,
            ZERO,
            Complex64::from_polar(1.0, po),
        );
        let a = self.optic_axis_angle_rad;
        Ok(rotation(-a) * d * rotation(a))
    }

    /// Single-pass group delay (fs) at `omega`, averaged over the axes.
    fn group_delay(&self, wavelength_nm: f64) -> Result<f64> {
        let axes = self.material.axes();
        let mut ng = 0.0;
        for &axis in axes {
            ng += self.material.group_index(wavelength_nm, axis)?;
        }
        ng /= axes.len() as f64;
        Ok(ng / C_MM_PER_FS * self.thickness_um * 1e-3)
    }
}

/// Jones matrix of a single layer; see [`Layer::jones`].
pub fn layer_jones(layer: &Layer, omega: f64, passes: u32) -> Result<Jones> {
    layer.jones(omega, passes)
}

#[derive(Debug, Clone)]
pub struct SampleStack {
    pub interfaces: Vec<Interface>,
    pub layers: Vec<Layer>,
    pub include_transmission_losses: bool,
    pub name: String,
}

impl SampleStack {
    pub fn new(interfaces: Vec<Interface>, layers: Vec<Layer>, include_transmission_losses: bool) -> Result<Self> {
        let stack = Self {
            interfaces,
            layers,
            include_transmission_losses,
            name: "custom".into(),
        };
        stack.validate()?;
        Ok(stack)
    }

    pub fn named(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.interfaces.is_empty() {
            return Err(SampleError::Invalid("a stack needs at least one interface".into()));
        }
        if self.interfaces.len() != self.layers.len() + 1 {
            return Err(SampleError::Invalid(format!(
                "{} interfaces cannot bracket {} layers",
                self.interfaces.len(),
                self.layers.len()
            )));
        }
        for i in &self.interfaces {
            if !(i.r.norm() <= 1.0 + 1e-12) || !i.r.norm().is_finite() {
                return Err(SampleError::Invalid(format!(
                    "|r| = {} > 1 at `{}`",
                    i.r.norm(),
                    i.label
                )));
            }
        }
        for l in &self.layers {
            if !(l.thickness_um >= 0.0 && l.thickness_um.is_finite()) {
                return Err(SampleError::Invalid(format!("layer thickness {} um", l.thickness_um)));
            }
            let a = l.optic_axis_angle_rad;
            if !(0.0..std::f64::consts::PI).contains(&a) {
                return Err(SampleError::Invalid(format!(
                    "optic axis angle {a} rad outside [0, pi)"
                )));
            }
        }
        Ok(())
    }

    /// Round-trip amplitude factor of each interface from transmission
    /// through the interfaces above it.
    pub fn transmission_factors(&self) -> Vec<f64> {
        let mut t = 1.0;
        self.interfaces
            .iter()
            .map(|i| {
                let here = if self.include_transmission_losses { t } else { 1.0 };
                t *= 1.0 - i.r.norm_sqr();
                here
            })
            .collect()
    }

    /// Round-trip Jones matrix at one frequency, without the wave plate.
    fn bare_response(&self, omega: f64, transmission: &[f64]) -> Result<Jones> {
        let mut forward = Jones::identity();
        let mut back = Jones::identity();
        let mut total = Jones::zeros();
        for (j, iface) in self.interfaces.iter().enumerate() {
            if j > 0 {
                let l = self.layers[j - 1].jones(omega, 1)?;
                forward = l * forward;
                back *= l;
            }
            if iface.r != ZERO {
                total += back * forward * (iface.r * transmission[j]);
            }
        }
        Ok(total)
    }

    /// Round-trip Jones matrix at one frequency including the wave plate.
    pub fn response_at(&self, omega: f64) -> Result<Jones> {
        let q = quarter_wave_plate();
        Ok(q * self.bare_response(omega, &self.transmission_factors())? * q)
    }

    /// Group delay (fs) of the round trip to the first reflecting interface.
    pub fn reference_delay_fs(&self, omega: f64) -> Result<f64> {
        let wl = frequency_to_wavelength(omega);
        let mut delay = 0.0;
        for (j, iface) in self.interfaces.iter().enumerate() {
            if iface.r.norm() > 0.0 {
                return Ok(delay);
            }
            if let Some(layer) = self.layers.get(j) {
                delay += 2.0 * layer.group_delay(wl)?;
            }
        }
        Err(SampleError::Invalid("no reflecting interface".into()))
    }
}

/// Per-frequency round-trip Jones response in the (H, V) basis.
#[derive(Debug, Clone)]
pub struct TransferFunction {
    pub frequencies: Vec<f64>,
    pub matrices: Vec<Jones>,
}

pub fn stack_response(stack: &SampleStack, frequencies: &[f64]) -> Result<TransferFunction> {
    stack.validate()?;
    let matrices = frequencies
        .par_iter()
        .map(|&w| stack.response_at(w))
        .collect::<Result<Vec<_>>>()?;
    Ok(TransferFunction {
        frequencies: frequencies.to_vec(),
        matrices,
    })
}

/// Scalar channel `a^dagger J e` for input `e` and analyzer `a`.
pub fn project(tf: &TransferFunction, input: &JonesVector, analyzer: &JonesVector) -> Vec<Complex64> {
    tf.matrices.iter().map(|m| analyzer.dotc(&(m * input))).collect()
}

/// Projection for V input light and a linear analyzer.
pub fn project_channel(tf: &TransferFunction, analyzer: Polarization) -> Vec<Complex64> {
    project(tf, &Polarization::V.vector(), &analyzer.vector())
}

/// Total reflected power `|J e|^2` for V input at every frequency.
pub fn total_power(tf: &TransferFunction) -> Vec<f64> {
    let v = Polarization::V.vector();
    tf.matrices.iter().map(|m| (m * v).norm_squared()).collect()
}

/// Scalar sample channel sampled on a biphoton grid.
#[derive(Debug, Clone)]
pub struct Channel {
    pub grid: FrequencyGrid,
    pub amplitude: Vec<Complex64>,
    /// Reflected power summed over both output polarizations.
    pub total_power: Vec<f64>,
    /// Round-trip group delay (fs) that places the first reflector at zero.
    pub reference_delay_fs: f64,
    pub label: String,
}

impl Channel {
    /// Channel with power equal to its own modulus squared.
    pub fn from_amplitude(grid: FrequencyGrid, amplitude: Vec<Complex64>, reference_delay_fs: f64) -> Self {
        let total_power = amplitude.iter().map(|h| h.norm_sqr()).collect();
        Self {
            grid,
            amplitude,
            total_power,
            reference_delay_fs,
            label: "custom".into(),
        }
    }

    /// Ideal mirror reference: h = 1 at every frequency.
    pub fn mirror(grid: FrequencyGrid) -> Self {
        Self::from_amplitude(grid, vec![ONE; grid.size], 0.0)
    }

    /// Multiplies the amplitude by `exp(i phase(Omega))`, Omega measured from
    /// the grid reference frequency.
    pub fn with_spectral_phase(mut self, phase: impl Fn(f64) -> f64) -> Self {
        for (k, h) in self.amplitude.iter_mut().enumerate() {
            let om = self.grid.frequency(k) - self.grid.reference_frequency;
            *h *= Complex64::from_polar(1.0, phase(om));
        }
        self
    }
}

/// Evaluates the stack on `grid` and projects onto `analyzer`.
pub fn sample_channel(stack: &SampleStack, grid: &FrequencyGrid, analyzer: &JonesVector) -> Result<Channel> {
    let tf = stack_response(stack, &grid.frequencies())?;
    let amplitude = project(&tf, &Polarization::V.vector(), analyzer);
    Ok(Channel {
        grid: *grid,
        amplitude,
        total_power: total_power(&tf),
        reference_delay_fs: stack.reference_delay_fs(grid.reference_frequency)?,
        label: stack.name.clone(),
    })
}

/// Convenience wrapper for a linear analyzer.
pub fn polarized_channel(stack: &SampleStack, grid: &FrequencyGrid, analyzer: Polarization) -> Result<Channel> {
    let mut ch = sample_channel(stack, grid, &analyzer.vector())?;
    ch.label = format!("{}:{}", stack.name, analyzer.label());
    Ok(ch)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleFile {
    #[serde(default = "default_true")]
    include_transmission_losses: bool,
    #[serde(default)]
    name: Option<String>,
    interface: Vec<InterfaceRecord>,
    #[serde(default)]
    layer: Vec<LayerRecord>,
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InterfaceRecord {
    reflectance: f64,
    #[serde(default)]
    phase_deg: f64,
    #[serde(default)]
    label: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerRecord {
    thickness_um: f64,
    #[serde(default)]
    material: Option<String>,
    #[serde(default)]
    index: Option<f64>,
    #[serde(default)]
    axis_angle_deg: f64,
    #[serde(default = "default_true")]
    exact_phase: bool,
}

/// Parses a sample description. Interfaces are listed top to bottom as
/// `[[interface]]` tables (`reflectance`, `phase_deg`), with one `[[layer]]`
/// (`material` or constant `index`, `thickness_um`, `axis_angle_deg`)
/// between each consecutive pair.
pub fn parse_sample(text: &str, db: &MaterialDatabase) -> Result<SampleStack> {
    let file: SampleFile = toml::from_str(text).map_err(|e| SampleError::Parse(e.to_string()))?;
    let mut interfaces = Vec::new();
    for (k, rec) in file.interface.iter().enumerate() {
        if !(0.0..=1.0).contains(&rec.reflectance) {
            return Err(SampleError::Parse(format!(
                "interface {k}: reflectance {}",
                rec.reflectance
            )));
        }
        interfaces.push(Interface::new(
            Complex64::from_polar(rec.reflectance.sqrt(), rec.phase_deg.to_radians()),
            rec.label.clone().unwrap_or_else(|| format!("surface {k}")),
        ));
    }
    let mut layers = Vec::new();
    for (k, rec) in file.layer.iter().enumerate() {
        let material = match (&rec.material, rec.index) {
            (Some(name), None) => db.get(name)?,
            (None, Some(n)) if n >= 1.0 => Arc::new(Material::nondispersive(format!("n={n}"), n)),
            _ => {
                return Err(SampleError::Parse(format!(
                    "layer {k}: give exactly one of `material` or `index` (>= 1)"
                )))
            }
        };
        let mut layer = Layer::new(material, rec.thickness_um).with_axis_angle(rec.axis_angle_deg.to_radians());
        layer.use_exact_phase = rec.exact_phase;
        layers.push(layer);
    }
    let stack = SampleStack::new(interfaces, layers, file.include_transmission_losses)?;
    Ok(stack.named(file.name.unwrap_or_else(|| "file".into())))
}
