use std::sync::Arc;

use num_complex::Complex64;

use super::{fresnel_coefficients, Interface, Layer, Result, SampleError, SampleStack};
use crate::materials::{Axis, Material, MaterialDatabase};

pub const PRESET_NAMES: [&str; 5] = [
    "mirror",
    "buried_mirror_znse",
    "silica_flat",
    "quartz_mirror",
    "bs_quartz_mirror",
];

/// Tunable parameters of the preset samples.
#[derive(Debug, Clone, PartialEq)]
pub struct PresetParams {
    pub transmission_losses: bool,
    pub znse_thickness_mm: f64,
    pub silica_thickness_um: f64,
    /// Constant phase index of the silica flat.
    pub silica_index: f64,
    /// Use a database material for the flat instead of the constant index.
    pub silica_material: Option<String>,
    /// Required by the quartz presets.
    pub quartz_thickness_um: Option<f64>,
    pub quartz_axis_angle_rad: f64,
}

impl Default for PresetParams {
    fn default() -> Self {
        Self {
            transmission_losses: true,
            znse_thickness_mm: 6.0,
            silica_thickness_um: 100.0,
            silica_index: 1.45,
            silica_material: None,
            quartz_thickness_um: None,
            quartz_axis_angle_rad: std::f64::consts::PI / 6.0,
        }
    }
}

/// Thickness (um) of a quartz plate with a single-pass retardation of pi/2.
pub fn quarter_wave_thickness_um(quartz: &Material, wavelength_nm: f64) -> Result<f64> {
    let dn = quartz.refractive_index(wavelength_nm, Axis::Extraordinary)?
        - quartz.refractive_index(wavelength_nm, Axis::Ordinary)?;
    Ok(wavelength_nm * 1e-3 / (4.0 * dn.abs()))
}

pub fn preset_sample(name: &str, params: &PresetParams, db: &MaterialDatabase) -> Result<SampleStack> {
    let losses = params.transmission_losses;
    let stack = match name {
        "mirror" => SampleStack::new(vec![Interface::mirror()], vec![], losses)?,
        "buried_mirror_znse" => SampleStack::new(
            vec![Interface::transparent("znse entrance"), Interface::mirror()],
            vec![Layer::new(db.get("znse")?, params.znse_thickness_mm * 1e3)],
            losses,
        )?,
        "silica_flat" => {
            let material: Arc<Material> = match &params.silica_material {
                Some(m) => db.get(m)?,
                None => Arc::new(Material::nondispersive("silica (n = 1.45)", params.silica_index)),
            };
            let n = material.refractive_index(800.0, Axis::Isotropic)?;
            let (r0, _) = fresnel_coefficients(1.0, n);
            let (r1, _) = fresnel_coefficients(n, 1.0);
            SampleStack::new(
                vec![Interface::new(r0, "front"), Interface::new(r1, "back")],
                vec![Layer::new(material, params.silica_thickness_um)],
                losses,
            )?
        }
        "quartz_mirror" | "bs_quartz_mirror" => {
            let t = params
                .quartz_thickness_um
                .ok_or_else(|| SampleError::Invalid(format!("preset `{name}` needs an explicit quartz thickness")))?;
            let front = if name == "quartz_mirror" {
                Interface::transparent("quartz front")
            } else {
                Interface::new(Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0), "beam splitter")
            };
            SampleStack::new(
                vec![front, Interface::mirror()],
                vec![Layer::new(db.get("quartz")?, t).with_axis_angle(params.quartz_axis_angle_rad)],
                losses,
            )?
        }
        other => return Err(SampleError::UnknownPreset(other.to_string())),
    };
    Ok(stack.named(name))
}
