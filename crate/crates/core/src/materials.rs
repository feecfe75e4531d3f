//! Dispersion database and evaluators.
//!
//! Materials are described by a generalized Sellmeier permittivity in the
//! wavelength (um). All derivatives of the index are analytic; nothing in
//! this module uses finite differences.

use std::f64::consts::PI;
use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::units::{frequency_to_wavelength, wavelength_to_frequency, C_MM_PER_FS, C_UM_PER_FS};

const BUILTIN_DATABASE: &str = include_str!("../data/materials.toml");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MaterialError {
    #[error("wavelength {wavelength_nm} nm is outside the validity range [{min}, {max}] nm of {material}")]
    OutOfRange {
        material: String,
        wavelength_nm: f64,
        min: f64,
        max: f64,
    },
    #[error("axis {axis:?} is not defined for {material}")]
    InvalidAxis { material: String, axis: Axis },
    #[error("unknown material `{0}`")]
    NotFound(String),
    #[error("material `{material}` has non-physical permittivity {permittivity} at {wavelength_nm} nm")]
    NonPhysical {
        material: String,
        wavelength_nm: f64,
        permittivity: f64,
    },
    #[error("material database: {0}")]
    Database(String),
}

pub type Result<T> = std::result::Result<T, MaterialError>;

/// Polarization axis of a (possibly anisotropic) medium.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    Isotropic,
    Ordinary,
    Extraordinary,
}

/// Index of refraction and its first three wavelength derivatives (um^-k).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IndexDerivatives {
    pub n: f64,
    pub d1: f64,
    pub d2: f64,
    pub d3: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pole {
    weight: f64,
    location_um2: f64,
}

/// Generalized Sellmeier permittivity for one polarization axis.
#[derive(Debug, Clone, PartialEq)]
pub struct SellmeierAxis {
    constant: f64,
    poles: Vec<Pole>,
    k_ir: f64,
}

impl SellmeierAxis {
    /// A dispersionless axis with index `n`.
    pub fn constant(n: f64) -> Self {
        Self {
            constant: n * n,
            poles: Vec::new(),
            k_ir: 0.0,
        }
    }

    /// Standard Sellmeier form `a + sum b lambda^2 / (lambda^2 - c)`, `c` in um^2.
    pub fn sellmeier(a: f64, terms: &[(f64, f64)]) -> Self {
        let mut axis = Self::constant(1.0);
        axis.constant = a;
        for &(b, c) in terms {
            axis.constant += b;
            axis.poles.push(Pole {
                weight: b * c,
                location_um2: c,
            });
        }
        axis
    }

    fn permittivity(&self, lambda_um: f64) -> [f64; 4] {
        let l = lambda_um;
        let l2 = l * l;
        let mut e = [
            self.constant - self.k_ir * l2,
            -2.0 * self.k_ir * l,
            -2.0 * self.k_ir,
            0.0,
        ];
        for p in &self.poles {
            let u = l2 - p.location_um2;
            let w = p.weight;
            let u2 = u * u;
            let u3 = u2 * u;
            e[0] += w / u;
            e[1] += -2.0 * w * l / u2;
            e[2] += -2.0 * w / u2 + 8.0 * w * l2 / u3;
            e[3] += 24.0 * w * l / u3 - 48.0 * w * l2 * l / (u3 * u);
        }
        e
    }

    fn derivatives(&self, lambda_um: f64) -> Option<IndexDerivatives> {
        let [e0, e1, e2, e3] = self.permittivity(lambda_um);
        if !(e0 > 0.0) {
            return None;
        }
        let n = e0.sqrt();
        let d1 = e1 / (2.0 * n);
        let d2 = (e2 - 2.0 * d1 * d1) / (2.0 * n);
        let d3 = (e3 - 6.0 * d1 * d2) / (2.0 * n);
        Some(IndexDerivatives { n, d1, d2, d3 })
    }

    fn is_dispersionless(&self) -> bool {
        self.poles.is_empty() && self.k_ir == 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Symmetry {
    Isotropic(SellmeierAxis),
    Uniaxial {
        ordinary: SellmeierAxis,
        extraordinary: SellmeierAxis,
    },
}

/// A named dispersive medium.
#[derive(Debug, Clone, PartialEq)]
pub struct Material {
    pub name: String,
    pub symmetry: Symmetry,
    /// Validity interval in nm (inclusive).
    pub validity_nm: (f64, f64),
    pub source: String,
}

impl Material {
    /// A dispersionless isotropic medium with phase index `n`, valid at all
    /// wavelengths.
    pub fn nondispersive(name: impl Into<String>, n: f64) -> Self {
        Self {
            name: name.into(),
            symmetry: Symmetry::Isotropic(SellmeierAxis::constant(n)),
            validity_nm: (0.0, f64::INFINITY),
            source: format!("constant index n = {n}"),
        }
    }

    pub fn is_uniaxial(&self) -> bool {
        matches!(self.symmetry, Symmetry::Uniaxial { .. })
    }

    pub fn is_dispersionless(&self) -> bool {
        match &self.symmetry {
            Symmetry::Isotropic(a) => a.is_dispersionless(),
            Symmetry::Uniaxial {
                ordinary,
                extraordinary,
            } => ordinary.is_dispersionless() && extraordinary.is_dispersionless(),
        }
    }

    /// Axes that can be evaluated for this material.
    pub fn axes(&self) -> &'static [Axis] {
        match self.symmetry {
            Symmetry::Isotropic(_) => &[Axis::Isotropic],
            Symmetry::Uniaxial { .. } => &[Axis::Ordinary, Axis::Extraordinary],
        }
    }

    fn axis(&self, axis: Axis) -> Result<&SellmeierAxis> {
        match (&self.symmetry, axis) {
            (Symmetry::Isotropic(a), Axis::Isotropic) => Ok(a),
            (Symmetry::Uniaxial { ordinary, .. }, Axis::Ordinary) => Ok(ordinary),
            (Symmetry::Uniaxial { extraordinary, .. }, Axis::Extraordinary) => Ok(extraordinary),
            _ => Err(MaterialError::InvalidAxis {
                material: self.name.clone(),
                axis,
            }),
        }
    }

    pub fn check_wavelength(&self, wavelength_nm: f64) -> Result<()> {
        let (min, max) = self.validity_nm;
        if wavelength_nm.is_finite() && wavelength_nm > 0.0 && wavelength_nm >= min && wavelength_nm <= max {
            Ok(())
        } else {
            Err(MaterialError::OutOfRange {
                material: self.name.clone(),
                wavelength_nm,
                min,
                max,
            })
        }
    }

    /// Index and its wavelength derivatives at `wavelength_nm`.
    pub fn index_derivatives(&self, wavelength_nm: f64, axis: Axis) -> Result<IndexDerivatives> {
        let model = self.axis(axis)?;
        self.check_wavelength(wavelength_nm)?;
        let lambda_um = wavelength_nm * 1e-3;
        model.derivatives(lambda_um).ok_or_else(|| MaterialError::NonPhysical {
            material: self.name.clone(),
            wavelength_nm,
            permittivity: model.permittivity(lambda_um)[0],
        })
    }

    /// Phase index n(lambda).
    pub fn refractive_index(&self, wavelength_nm: f64, axis: Axis) -> Result<f64> {
        Ok(self.index_derivatives(wavelength_nm, axis)?.n)
    }

    /// Group index n - lambda dn/dlambda.
    pub fn group_index(&self, wavelength_nm: f64, axis: Axis) -> Result<f64> {
        let d = self.index_derivatives(wavelength_nm, axis)?;
        Ok(d.n - wavelength_nm * 1e-3 * d.d1)
    }

    /// Group-velocity dispersion d^2k/domega^2 in fs^2/mm.
    pub fn gvd_coefficient(&self, wavelength_nm: f64, axis: Axis) -> Result<f64> {
        let d = self.index_derivatives(wavelength_nm, axis)?;
        Ok(gvd_from_derivatives(wavelength_nm * 1e-3, &d))
    }

    /// Propagation constant k(omega) = omega n / c in rad/mm.
    pub fn wavenumber(&self, omega: f64, axis: Axis) -> Result<f64> {
        let wavelength_nm = frequency_to_wavelength(omega);
        let n = self.refractive_index(wavelength_nm, axis)?;
        Ok(omega * n / C_MM_PER_FS)
    }

    /// Taylor expansion of k(omega) around the frequency of `center_wavelength_nm`.
    pub fn beta_expansion(&self, center_wavelength_nm: f64, axis: Axis, max_order: usize) -> Result<BetaExpansion> {
        if !(2..=3).contains(&max_order) {
            return Err(MaterialError::Database(format!(
                "expansion order must be 2 or 3, got {max_order}"
            )));
        }
        let d = self.index_derivatives(center_wavelength_nm, axis)?;
        let l = center_wavelength_nm * 1e-3;
        let beta3 = if max_order == 3 {
            -l.powi(4) * (3.0 * d.d2 + l * d.d3) / (4.0 * PI * PI * C_UM_PER_FS.powi(3)) * 1e3
        } else {
            0.0
        };
        Ok(BetaExpansion {
            center_frequency: wavelength_to_frequency(center_wavelength_nm),
            beta0: 2.0 * PI * d.n / l * 1e3,
            beta1: (d.n - l * d.d1) / C_MM_PER_FS,
            beta2: gvd_from_derivatives(l, &d),
            beta3,
            order: max_order,
        })
    }

    /// Index of an extraordinary wave propagating at `theta` (rad) to the
    /// optic axis, with its first wavelength derivative (um^-1).
    pub fn index_at_angle(&self, wavelength_nm: f64, theta: f64) -> Result<(f64, f64)> {
        let o = self.index_derivatives(wavelength_nm, Axis::Ordinary)?;
        let e = self.index_derivatives(wavelength_nm, Axis::Extraordinary)?;
        let (s, c) = theta.sin_cos();
        let g = c * c / (o.n * o.n) + s * s / (e.n * e.n);
        let dg = -2.0 * c * c * o.d1 / o.n.powi(3) - 2.0 * s * s * e.d1 / e.n.powi(3);
        let n = g.powf(-0.5);
        let dn = -0.5 * g.powf(-1.5) * dg;
        Ok((n, dn))
    }
}

fn gvd_from_derivatives(lambda_um: f64, d: &IndexDerivatives) -> f64 {
    lambda_um.powi(3) * d.d2 / (2.0 * PI * C_UM_PER_FS * C_UM_PER_FS) * 1e3
}

/// Truncated Taylor expansion of the propagation constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BetaExpansion {
    /// Expansion point, rad/fs.
    pub center_frequency: f64,
    /// rad/mm
    pub beta0: f64,
    /// fs/mm
    pub beta1: f64,
    /// fs^2/mm
    pub beta2: f64,
    /// fs^3/mm (zero for second-order expansions)
    pub beta3: f64,
    pub order: usize,
}

impl BetaExpansion {
    /// Propagation constant (rad/mm) predicted by the expansion at `omega`.
    pub fn wavenumber(&self, omega: f64) -> f64 {
        let d = omega - self.center_frequency;
        self.beta0 + d * (self.beta1 + d * (self.beta2 / 2.0 + d * self.beta3 / 6.0))
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatabaseFile {
    version: u32,
    material: Vec<MaterialRecord>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MaterialRecord {
    name: String,
    symmetry: String,
    validity_nm: [f64; 2],
    source: String,
    isotropic: Option<AxisRecord>,
    ordinary: Option<AxisRecord>,
    extraordinary: Option<AxisRecord>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct AxisRecord {
    a: f64,
    #[serde(default)]
    terms: Vec<TermRecord>,
    #[serde(default)]
    k_ir: f64,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum TermRecord {
    Lorentz { b: f64, c_um2: f64 },
    Resonance { b: f64, resonance_um: f64 },
    Pole { d: f64, e_um2: f64 },
}

impl AxisRecord {
    fn build(&self) -> SellmeierAxis {
        let mut axis = SellmeierAxis::sellmeier(self.a, &[]);
        for term in &self.terms {
            let (shift, pole) = match *term {
                TermRecord::Lorentz { b, c_um2 } => (
                    b,
                    Pole {
                        weight: b * c_um2,
                        location_um2: c_um2,
                    },
                ),
                TermRecord::Resonance { b, resonance_um } => {
                    let c = resonance_um * resonance_um;
                    (
                        b,
                        Pole {
                            weight: b * c,
                            location_um2: c,
                        },
                    )
                }
                TermRecord::Pole { d, e_um2 } => (
                    0.0,
                    Pole {
                        weight: d,
                        location_um2: e_um2,
                    },
                ),
            };
            axis.constant += shift;
            axis.poles.push(pole);
        }
        axis.k_ir = self.k_ir;
        axis
    }
}

/// Immutable collection of materials loaded from a database file.
#[derive(Debug, Clone)]
pub struct MaterialDatabase {
    pub version: u32,
    materials: Vec<Arc<Material>>,
}

impl MaterialDatabase {
    /// The database shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_toml_str(BUILTIN_DATABASE).expect("built-in material database is valid")
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: DatabaseFile = toml::from_str(text).map_err(|e| MaterialError::Database(e.to_string()))?;
        let mut materials = Vec::with_capacity(file.material.len());
        for rec in file.material {
            let missing =
                |axis: &str| MaterialError::Database(format!("material `{}` lacks the `{axis}` axis", rec.name));
            let symmetry = match rec.symmetry.as_str() {
                "isotropic" => Symmetry::Isotropic(rec.isotropic.as_ref().ok_or_else(|| missing("isotropic"))?.build()),
                "uniaxial" => Symmetry::Uniaxial {
                    ordinary: rec.ordinary.as_ref().ok_or_else(|| missing("ordinary"))?.build(),
                    extraordinary: rec
                        .extraordinary
                        .as_ref()
                        .ok_or_else(|| missing("extraordinary"))?
                        .build(),
                },
                other => {
                    return Err(MaterialError::Database(format!(
                        "material `{}`: unknown symmetry `{other}`",
                        rec.name
                    )))
                }
            };
            let [min, max] = rec.validity_nm;
            if !(min >= 0.0 && max > min) {
                return Err(MaterialError::Database(format!(
                    "material `{}`: invalid validity range [{min}, {max}]",
                    rec.name
                )));
            }
            if materials.iter().any(|m: &Arc<Material>| m.name == rec.name) {
                return Err(MaterialError::Database(format!("duplicate material `{}`", rec.name)));
            }
            materials.push(Arc::new(Material {
                name: rec.name,
                symmetry,
                validity_nm: (min, max),
                source: rec.source,
            }));
        }
        Ok(Self {
            version: file.version,
            materials,
        })
    }

    pub fn get(&self, name: &str) -> Result<Arc<Material>> {
        self.materials
            .iter()
            .find(|m| m.name.eq_ignore_ascii_case(name))
            .cloned()
            .ok_or_else(|| MaterialError::NotFound(name.to_string()))
    }

    pub fn iter(&self) -> impl Iterator<Item = &Arc<Material>> {
        self.materials.iter()
    }
}

/// One row of a dispersion table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DispersionRow {
    pub wavelength_nm: f64,
    pub n: f64,
    pub gvd_fs2_per_mm: f64,
}

/// Samples n and GVD on `points` evenly spaced wavelengths.
pub fn dispersion_table(
    material: &Material,
    axis: Axis,
    start_nm: f64,
    end_nm: f64,
    points: usize,
) -> Result<Vec<DispersionRow>> {
    let step = if points > 1 {
        (end_nm - start_nm) / (points - 1) as f64
    } else {
        0.0
    };
    (0..points)
        .map(|i| {
            let wavelength_nm = start_nm + step * i as f64;
            Ok(DispersionRow {
                wavelength_nm,
                n: material.refractive_index(wavelength_nm, axis)?,
                gvd_fs2_per_mm: material.gvd_coefficient(wavelength_nm, axis)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn db() -> MaterialDatabase {
        MaterialDatabase::builtin()
    }

    /// Second derivative of n(lambda) by a five-point stencil, used only to
    /// check the analytic path.
    fn fd_gvd(m: &Material, wavelength_nm: f64, axis: Axis) -> f64 {
        let h = 0.05;
        let n = |x: f64| m.refractive_index(x, axis).unwrap();
        let x = wavelength_nm;
        let d2_per_nm2 =
            (-n(x + 2.0 * h) + 16.0 * n(x + h) - 30.0 * n(x) + 16.0 * n(x - h) - n(x - 2.0 * h)) / (12.0 * h * h);
        let d2 = d2_per_nm2 * 1e6;
        let l = x * 1e-3;
        l.powi(3) * d2 / (2.0 * PI * C_UM_PER_FS * C_UM_PER_FS) * 1e3
    }

    #[test]
    fn silica_index_matches_nominal() {
        let n = db()
            .get("fused_silica")
            .unwrap()
            .refractive_index(800.0, Axis::Isotropic)
            .unwrap();
        assert!((n - 1.45).abs() < 0.01, "n = {n}");
    }

    #[test]
    fn vacuum_is_exact() {
        let vac = db().get("vacuum").unwrap();
        for wl in [1.0, 400.0, 800.0, 1.0e5] {
            assert_eq!(vac.refractive_index(wl, Axis::Isotropic).unwrap(), 1.0);
            assert_eq!(vac.gvd_coefficient(wl, Axis::Isotropic).unwrap(), 0.0);
        }
        let b = vac.beta_expansion(800.0, Axis::Isotropic, 3).unwrap();
        assert_eq!(b.beta2, 0.0);
        assert_eq!(b.beta3, 0.0);
        assert!((b.beta1 - 1.0 / C_MM_PER_FS).abs() < 1e-9);
    }

    #[test]
    fn znse_golden_index() {
        // Direct evaluation of the Connolly form in extended precision.
        let n = db()
            .get("znse")
            .unwrap()
            .refractive_index(800.0, Axis::Isotropic)
            .unwrap();
        assert!((n - 2.524_175_629_790_68).abs() < 1e-12, "n = {n}");
    }

    #[test]
    fn silica_gvd_golden_against_finite_difference() {
        let silica = db().get("fused_silica").unwrap();
        let analytic = silica.gvd_coefficient(800.0, Axis::Isotropic).unwrap();
        let oracle = fd_gvd(&silica, 800.0, Axis::Isotropic);
        assert!((analytic - oracle).abs() / oracle < 5e-3);
        // Frozen from the stencil oracle above (and an extended-precision check).
        assert!((analytic - 36.162).abs() < 0.01, "gvd = {analytic}");
    }

    #[test]
    fn znse_gvd_exceeds_bbo_tenfold() {
        let d = db();
        let znse = d.get("znse").unwrap().gvd_coefficient(800.0, Axis::Isotropic).unwrap();
        let bbo = d.get("bbo").unwrap().gvd_coefficient(800.0, Axis::Ordinary).unwrap();
        assert!(znse / bbo > 10.0, "znse {znse} bbo {bbo}");
        assert!((znse - 1025.47).abs() < 0.05);
    }

    #[test]
    fn out_of_range_is_an_error() {
        let znse = db().get("znse").unwrap();
        assert!(matches!(
            znse.refractive_index(400.0, Axis::Isotropic),
            Err(MaterialError::OutOfRange { .. })
        ));
        assert!(znse.gvd_coefficient(20_000.0, Axis::Isotropic).is_err());
    }

    #[test]
    fn axis_must_match_symmetry() {
        let d = db();
        assert!(matches!(
            d.get("fused_silica").unwrap().refractive_index(800.0, Axis::Ordinary),
            Err(MaterialError::InvalidAxis { .. })
        ));
        assert!(d.get("bbo").unwrap().refractive_index(800.0, Axis::Isotropic).is_err());
    }

    #[test]
    fn uniaxial_materials_are_birefringent() {
        let d = db();
        for name in ["quartz", "bbo"] {
            let m = d.get(name).unwrap();
            let no = m.refractive_index(800.0, Axis::Ordinary).unwrap();
            let ne = m.refractive_index(800.0, Axis::Extraordinary).unwrap();
            assert!((no - ne).abs() > 1e-3, "{name}: {no} {ne}");
        }
    }

    #[test]
    fn beta2_matches_gvd_coefficient() {
        let d = db();
        for m in d.iter() {
            for &axis in m.axes() {
                let b = m.beta_expansion(800.0, axis, 3).unwrap();
                let g = m.gvd_coefficient(800.0, axis).unwrap();
                assert!((b.beta2 - g).abs() <= 1e-6 * g.abs(), "{}", m.name);
            }
        }
    }

    #[test]
    fn analytic_gvd_matches_difference_of_beta1() {
        // dbeta1/domega by central difference over a 0.1 nm step.
        let d = db();
        for m in d.iter() {
            let (lo, hi) = m.validity_nm;
            let (lo, hi) = if hi.is_infinite() { (300.0, 3000.0) } else { (lo, hi) };
            for &axis in m.axes() {
                for i in 1..40 {
                    let wl = lo * (hi / lo).powf(i as f64 / 40.0);
                    let b1 = |x: f64| m.beta_expansion(x, axis, 2).unwrap().beta1;
                    let h = 0.05;
                    let dw = wavelength_to_frequency(wl - h) - wavelength_to_frequency(wl + h);
                    let fd = (b1(wl - h) - b1(wl + h)) / dw;
                    let g = m.gvd_coefficient(wl, axis).unwrap();
                    let tol = 5e-3 * g.abs() + 0.05;
                    assert!((fd - g).abs() <= tol, "{} {axis:?} at {wl} nm: {fd} vs {g}", m.name);
                }
            }
        }
    }

    #[test]
    fn gvd_curves_are_finite_over_visible_near_ir() {
        let d = db();
        for m in d.iter() {
            for &axis in m.axes() {
                let table = dispersion_table(m, axis, 600.0, 1000.0, 50).unwrap();
                assert_eq!(table.len(), 50);
                assert!(table.iter().all(|r| r.n.is_finite() && r.gvd_fs2_per_mm.is_finite()));
                assert!(table.iter().all(|r| r.n >= 1.0));
            }
        }
    }

    #[test]
    fn silica_expansion_tracks_exact_phase() {
        let silica = db().get("fused_silica").unwrap();
        let exp = silica.beta_expansion(800.0, Axis::Isotropic, 3).unwrap();
        let length_mm = 0.1;
        for i in 0..=80 {
            let wl = 760.0 + i as f64;
            let w = wavelength_to_frequency(wl);
            let exact = silica.wavenumber(w, Axis::Isotropic).unwrap() * length_mm;
            let approx = exp.wavenumber(w) * length_mm;
            assert!((exact - approx).abs() < 1e-3, "{wl} nm: {}", exact - approx);
        }
    }

    #[test]
    fn angled_index_interpolates_principal_axes() {
        let bbo = db().get("bbo").unwrap();
        let no = bbo.refractive_index(800.0, Axis::Ordinary).unwrap();
        let ne = bbo.refractive_index(800.0, Axis::Extraordinary).unwrap();
        assert!((bbo.index_at_angle(800.0, 0.0).unwrap().0 - no).abs() < 1e-12);
        assert!((bbo.index_at_angle(800.0, PI / 2.0).unwrap().0 - ne).abs() < 1e-12);
        // derivative against a central difference
        let th = 0.74;
        let (_, dn) = bbo.index_at_angle(800.0, th).unwrap();
        let h = 0.01;
        let fd = (bbo.index_at_angle(800.0 + h, th).unwrap().0 - bbo.index_at_angle(800.0 - h, th).unwrap().0)
            / (2.0 * h)
            * 1e3;
        assert!((dn - fd).abs() < 1e-6 * dn.abs().max(1.0));
    }

    #[test]
    fn database_rejects_malformed_records() {
        let bad =
            "version = 1\n[[material]]\nname = \"x\"\nsymmetry = \"cubic\"\nvalidity_nm = [1.0, 2.0]\nsource = \"\"\n";
        assert!(MaterialDatabase::from_toml_str(bad).is_err());
        assert!(matches!(db().get("unobtainium"), Err(MaterialError::NotFound(_))));
    }
}
