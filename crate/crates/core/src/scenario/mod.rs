//! Scenario files: one TOML document describing source, crystal, sample,
//! scan and analysis, with unit suffixes on every physical key.
//!
//! A scenario is fully resolved (materials looked up, sample built, joint
//! spectrum computed, scan window checked) before any scan runs, so an
//! invalid file fails without producing output.

mod presets;
mod runner;

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::biphoton::{joint_spectral_amplitude, CrystalSpec, GridSpec, JointSpectrum, PhaseMatching, PumpSpec};
use crate::interferometer::{alias_free_range_um, ScanConfig};
use crate::materials::{dispersion_table, Axis, DispersionRow, MaterialDatabase};
use crate::sample::{parse_sample, preset_sample, quarter_wave_thickness_um, Polarization, PresetParams, SampleStack};

pub use presets::{preset_catalog, preset_scenario, preset_text, PRESETS};
pub use runner::{run, write_outputs, RunOutput};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl ScenarioError {
    /// Process exit code: 2 for configuration errors, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Config(_) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, ScenarioError>;

fn config<E: std::fmt::Display>(e: E) -> ScenarioError {
    ScenarioError::Config(e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PumpShape {
    Cw,
    Gaussian,
    TransformLimited,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PumpSection {
    pub shape: PumpShape,
    pub center_wavelength_nm: f64,
    pub bandwidth_fwhm_nm: Option<f64>,
    pub duration_fs: Option<f64>,
    #[serde(default)]
    pub detuning_nm: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseMatchingMode {
    FirstOrder,
    Exact,
}

fn default_crystal_material() -> String {
    "bbo".into()
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalSection {
    #[serde(default = "default_crystal_material")]
    pub material: String,
    pub length_mm: f64,
    pub cut_angle_deg: Option<f64>,
    /// Defaults to twice the pump wavelength.
    pub degenerate_wavelength_nm: Option<f64>,
    pub phase_matching: Option<PhaseMatchingMode>,
}

fn default_grid_size() -> usize {
    512
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_grid_size")]
    pub size: usize,
    pub half_span_rad_per_fs: Option<f64>,
    pub detection_filter_fwhm_nm: Option<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        Self {
            size: default_grid_size(),
            half_span_rad_per_fs: None,
            detection_filter_fwhm_nm: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    pub preset: Option<String>,
    /// Sample description file, relative to the scenario file.
    pub file: Option<PathBuf>,
    pub transmission_losses: Option<bool>,
    pub znse_thickness_mm: Option<f64>,
    pub silica_thickness_um: Option<f64>,
    pub silica_index: Option<f64>,
    pub silica_material: Option<String>,
    pub quartz_thickness_um: Option<f64>,
    #[serde(default)]
    pub quartz_quarter_wave: bool,
    pub quartz_axis_angle_deg: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    pub delay_start_um: f64,
    pub delay_end_um: f64,
    pub delay_step_um: f64,
    pub mode_overlap: f64,
    pub reference_polarization: String,
    pub integration_time_s: f64,
    pub rate_scale_per_s: f64,
    pub rng_seed: u64,
    /// Replace the rate with Poisson counts.
    pub noise: bool,
}

impl Default for ScanSection {
    fn default() -> Self {
        let d = ScanConfig::default();
        Self {
            delay_start_um: d.delay_start_um,
            delay_end_um: d.delay_end_um,
            delay_step_um: d.delay_step_um,
            mode_overlap: d.mode_overlap,
            reference_polarization: d.reference_polarization.label().into(),
            integration_time_s: d.integration_time_s,
            rate_scale_per_s: d.rate_scale,
            rng_seed: d.rng_seed,
            noise: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModel {
    Gaussian,
    Triangular,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalysisSection {
    pub fit: bool,
    pub model: FitModel,
    pub min_prominence: f64,
    pub dither: bool,
    pub max_dither_doublings: usize,
    pub gvd_interstitial_length_mm: Option<f64>,
    pub polarization: bool,
    pub retardation: bool,
    pub oct: bool,
}

impl Default for AnalysisSection {
    fn default() -> Self {
        Self {
            fit: true,
            model: FitModel::Gaussian,
            min_prominence: 0.02,
            dither: false,
            max_dither_doublings: 6,
            gvd_interstitial_length_mm: None,
            polarization: false,
            retardation: false,
            oct: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialsTableSection {
    /// Material names, optionally `name:o` or `name:e` for an axis.
    pub materials: Vec<String>,
    pub start_nm: f64,
    pub end_nm: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub pump: Option<PumpSection>,
    pub crystal: Option<CrystalSection>,
    #[serde(default)]
    pub grid: GridSection,
    pub sample: Option<SampleSection>,
    #[serde(default)]
    pub scan: ScanSection,
    #[serde(default)]
    pub analysis: AnalysisSection,
    pub materials_table: Option<MaterialsTableSection>,
    /// Directory against which relative paths are resolved.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(config)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ScenarioError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut sc = Self::from_toml_str(&text)?;
        sc.base_dir = path.parent().map(Path::to_path_buf);
        Ok(sc)
    }
}

/// Parses `name`, `name:o` or `name:e` into a material name and axis.
pub fn parse_material_axis(spec: &str, db: &MaterialDatabase) -> Result<(String, Axis)> {
    let (name, axis) = match spec.split_once(':') {
        Some((n, "o")) => (n, Some(Axis::Ordinary)),
        Some((n, "e")) => (n, Some(Axis::Extraordinary)),
        Some((_, a)) => return Err(ScenarioError::Config(format!("unknown axis `{a}` in `{spec}`"))),
        None => (spec, None),
    };
    let m = db.get(name).map_err(config)?;
    let axis = match axis {
        Some(a) => a,
        None if m.is_uniaxial() => Axis::Ordinary,
        None => Axis::Isotropic,
    };
    Ok((name.to_string(), axis))
}

/// Everything a simulation needs, validated.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub pump: PumpSpec,
    pub crystal: CrystalSpec,
    pub grid: GridSpec,
    pub js: JointSpectrum,
    pub stack: SampleStack,
    pub scan: ScanConfig,
    pub preset_params: Option<PresetParams>,
}

#[derive(Debug, Clone)]
pub enum Resolved {
    Simulation(Box<Simulation>),
    Table(Vec<(String, Vec<DispersionRow>)>),
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ScenarioError::Config(format!("{name} must be positive, got {v}")))
    }
}

fn resolve_pump(p: &PumpSection) -> Result<PumpSpec> {
    let spec = match p.shape {
        PumpShape::Cw => PumpSpec::cw(p.center_wavelength_nm),
        PumpShape::Gaussian => PumpSpec::gaussian(
            p.center_wavelength_nm,
            p.bandwidth_fwhm_nm
                .ok_or_else(|| ScenarioError::Config("gaussian pump needs bandwidth_fwhm_nm".into()))?,
        ),
        PumpShape::TransformLimited => PumpSpec::transform_limited(
            p.center_wavelength_nm,
            positive(
                "duration_fs",
                p.duration_fs
                    .ok_or_else(|| ScenarioError::Config("transform-limited pump needs duration_fs".into()))?,
            )?,
        ),
    }
    .with_detuning(p.detuning_nm);
    spec.validate().map_err(config)?;
    Ok(spec)
}

fn resolve_crystal(c: &CrystalSection, pump: &PumpSpec, db: &MaterialDatabase) -> Result<CrystalSpec> {
    let material = db.get(&c.material).map_err(config)?;
    let cut = c
        .cut_angle_deg
        .unwrap_or(crate::biphoton::BBO_TYPE2_CUT_DEG)
        .to_radians();
    let degenerate = c.degenerate_wavelength_nm.unwrap_or(2.0 * pump.center_wavelength_nm);
    let mode = match c.phase_matching.unwrap_or(PhaseMatchingMode::FirstOrder) {
        PhaseMatchingMode::FirstOrder => PhaseMatching::FirstOrder,
        PhaseMatchingMode::Exact => PhaseMatching::Exact,
    };
    Ok(CrystalSpec::new(material, c.length_mm, cut, degenerate)
        .map_err(config)?
        .with_phase_matching(mode))
}

fn resolve_sample(
    s: &SampleSection,
    base: Option<&Path>,
    degenerate_nm: f64,
    db: &MaterialDatabase,
) -> Result<(SampleStack, Option<PresetParams>)> {
    match (&s.preset, &s.file) {
        (Some(_), Some(_)) => Err(ScenarioError::Config(
            "sample: give either `preset` or `file`, not both".into(),
        )),
        (None, None) => Err(ScenarioError::Config("sample: `preset` or `file` is required".into())),
        (None, Some(file)) => {
            let path = match base {
                Some(b) if file.is_relative() => b.join(file),
                _ => file.clone(),
            };
            let text = std::fs::read_to_string(&path)
                .map_err(|e| ScenarioError::Config(format!("cannot read sample {}: {e}", path.display())))?;
            let mut stack = parse_sample(&text, db).map_err(config)?;
            if let Some(l) = s.transmission_losses {
                stack.include_transmission_losses = l;
            }
            Ok((stack, None))
        }
        (Some(name), None) => {
            let mut p = PresetParams::default();
            if let Some(v) = s.transmission_losses {
                p.transmission_losses = v;
            }
            if let Some(v) = s.znse_thickness_mm {
                p.znse_thickness_mm = positive("znse_thickness_mm", v)?;
            }
            if let Some(v) = s.silica_thickness_um {
                p.silica_thickness_um = positive("silica_thickness_um", v)?;
            }
            if let Some(v) = s.silica_index {
                p.silica_index = positive("silica_index", v)?;
            }
            p.silica_material = s.silica_material.clone();
            if let Some(v) = s.quartz_axis_angle_deg {
                p.quartz_axis_angle_rad = v.to_radians();
            }
            p.quartz_thickness_um = match (s.quartz_thickness_um, s.quartz_quarter_wave) {
                (Some(_), true) => {
                    return Err(ScenarioError::Config(
                        "sample: quartz_thickness_um and quartz_quarter_wave are exclusive".into(),
                    ))
                }
                (Some(t), false) => Some(positive("quartz_thickness_um", t)?),
                (None, true) => {
                    let q = db.get("quartz").map_err(config)?;
                    Some(quarter_wave_thickness_um(&q, degenerate_nm).map_err(config)?)
                }
                (None, false) => None,
            };
            let stack = preset_sample(name, &p, db).map_err(config)?;
            Ok((stack, Some(p)))
        }
    }
}

fn resolve_scan(s: &ScanSection) -> Result<ScanConfig> {
    let reference_polarization: Polarization = s.reference_polarization.parse().map_err(config)?;
    let cfg = ScanConfig {
        delay_start_um: s.delay_start_um,
        delay_end_um: s.delay_end_um,
        delay_step_um: s.delay_step_um,
        mode_overlap: s.mode_overlap,
        reference_polarization,
        integration_time_s: s.integration_time_s,
        rate_scale: s.rate_scale_per_s,
        rng_seed: s.rng_seed,
    };
    cfg.validate().map_err(config)?;
    Ok(cfg)
}

impl Scenario {
    /// Validates the scenario and precomputes the joint spectrum.
    pub fn resolve(&self, db: &MaterialDatabase) -> Result<Resolved> {
        if let Some(t) = &self.materials_table {
            if self.pump.is_some() || self.crystal.is_some() || self.sample.is_some() {
                return Err(ScenarioError::Config(
                    "a materials_table scenario takes no pump, crystal or sample".into(),
                ));
            }
            if t.points == 0 || !(t.end_nm > t.start_nm) {
                return Err(ScenarioError::Config("materials_table: empty wavelength range".into()));
            }
            let mut out = Vec::new();
            for spec in &t.materials {
                let (name, axis) = parse_material_axis(spec, db)?;
                let m: Arc<_> = db.get(&name).map_err(config)?;
                let rows = dispersion_table(&m, axis, t.start_nm, t.end_nm, t.points).map_err(config)?;
                out.push((spec.clone(), rows));
            }
            return Ok(Resolved::Table(out));
        }
        let p = self
            .pump
            .as_ref()
            .ok_or_else(|| ScenarioError::Config("missing [pump]".into()))?;
        let c = self
            .crystal
            .as_ref()
            .ok_or_else(|| ScenarioError::Config("missing [crystal]".into()))?;
        let s = self
            .sample
            .as_ref()
            .ok_or_else(|| ScenarioError::Config("missing [sample]".into()))?;
        let pump = resolve_pump(p)?;
        let crystal = resolve_crystal(c, &pump, db)?;
        let grid = GridSpec {
            size: self.grid.size,
            half_span: self.grid.half_span_rad_per_fs,
            detection_filter_fwhm_nm: self.grid.detection_filter_fwhm_nm,
        };
        let js = joint_spectral_amplitude(&pump, &crystal, &grid).map_err(config)?;
        let (stack, preset_params) = resolve_sample(s, self.base_dir.as_deref(), crystal.degenerate_wavelength_nm, db)?;
        // evaluate once so material range errors surface here
        crate::sample::stack_response(&stack, &js.grid.frequencies()).map_err(config)?;
        let scan = resolve_scan(&self.scan)?;
        let window = scan.delay_end_um - scan.delay_start_um;
        let period = alias_free_range_um(js.grid.step);
        if window >= period {
            return Err(ScenarioError::Config(format!(
                "scan window {window} um exceeds the alias-free range {period:.1} um; increase grid size"
            )));
        }
        let a = &self.analysis;
        if !(a.min_prominence > 0.0) {
            return Err(ScenarioError::Config("analysis.min_prominence must be positive".into()));
        }
        if let Some(l) = a.gvd_interstitial_length_mm {
            positive("gvd_interstitial_length_mm", l)?;
            if !a.dither {
                return Err(ScenarioError::Config(
                    "GVD estimation needs analysis.dither = true".into(),
                ));
            }
        }
        if a.retardation {
            if !a.polarization {
                return Err(ScenarioError::Config(
                    "retardation needs analysis.polarization = true".into(),
                ));
            }
            let quartz = matches!(s.preset.as_deref(), Some("quartz_mirror" | "bs_quartz_mirror"));
            if !quartz {
                return Err(ScenarioError::Config(
                    "retardation inversion needs a quartz preset sample".into(),
                ));
            }
        }
        Ok(Resolved::Simulation(Box::new(Simulation {
            pump,
            crystal,
            grid,
            js,
            stack,
            scan,
            preset_params,
        })))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_and_units_are_rejected() {
        let bad = "name = \"x\"\n[pump]\nshape = \"cw\"\ncenter_wavelength = 400.0\n";
        assert!(matches!(Scenario::from_toml_str(bad), Err(ScenarioError::Config(_))));
        let bad = "name = \"x\"\nbogus = 1\n";
        assert!(matches!(Scenario::from_toml_str(bad), Err(ScenarioError::Config(_))));
    }

    #[test]
    fn every_preset_resolves() {
        let db = MaterialDatabase::builtin();
        for name in PRESETS {
            let sc = preset_scenario(name).unwrap();
            assert_eq!(sc.name, *name);
            sc.resolve(&db).unwrap_or_else(|e| panic!("{name}: {e}"));
        }
    }

    #[test]
    fn resolution_catches_bad_values() {
        let db = MaterialDatabase::builtin();
        let mut sc = preset_scenario("fig5a").unwrap();
        sc.scan.delay_end_um = 5000.0;
        assert!(matches!(sc.resolve(&db), Err(ScenarioError::Config(m)) if m.contains("alias")));
        let mut sc = preset_scenario("fig5a").unwrap();
        sc.sample.as_mut().unwrap().preset = Some("nonesuch".into());
        assert!(matches!(sc.resolve(&db), Err(ScenarioError::Config(_))));
        let mut sc = preset_scenario("fig5a").unwrap();
        sc.crystal.as_mut().unwrap().length_mm = -1.0;
        assert!(matches!(sc.resolve(&db), Err(ScenarioError::Config(_))));
        let mut sc = preset_scenario("fig5a").unwrap();
        sc.scan.reference_polarization = "X".into();
        assert!(matches!(sc.resolve(&db), Err(ScenarioError::Config(_))));
        let mut sc = preset_scenario("fig5a").unwrap();
        sc.analysis.retardation = true;
        assert!(sc.resolve(&db).is_err());
    }

    #[test]
    fn material_axis_specs() {
        let db = MaterialDatabase::builtin();
        assert_eq!(parse_material_axis("bbo", &db).unwrap().1, Axis::Ordinary);
        assert_eq!(parse_material_axis("bbo:e", &db).unwrap().1, Axis::Extraordinary);
        assert_eq!(parse_material_axis("znse", &db).unwrap().1, Axis::Isotropic);
        assert!(parse_material_axis("bbo:x", &db).is_err());
    }
}
