use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use serde_json::{json, Map, Value};

use super::{FitModel, Resolved, Result, Scenario, ScenarioError, Simulation};
use crate::analysis::dither::{adaptive_dither, detuned_scan, polarity_period_nm, DitherSweep};
use crate::analysis::features::{detect_features, extract_layers, Feature, FeatureClass};
use crate::analysis::fit::{fit_feature, half_max_width, DipFit, FeatureModel};
use crate::analysis::gvd::{estimate_gvd, measure_cross_features, GvdModel};
use crate::analysis::polarization::{
    combine_polarization, estimate_axis_angle, interference_amplitude, invert_retardation, optimal_reference,
    polarization_set, PolarizationReport, ReferenceAmplitudes,
};
use crate::analysis::AnalysisError;
use crate::interferometer::{apply_counting_noise, counts_to_rate, oct_scan, qoct_scan, Interferogram};
use crate::materials::{DispersionRow, MaterialDatabase};
use crate::sample::{polarized_channel, preset_sample, sample_channel, JonesVector, SampleStack};
use crate::Complex64;

/// Files and summary of one run, held in memory until written.
#[derive(Debug, Clone, Default)]
pub struct RunOutput {
    /// File name to contents.
    pub files: BTreeMap<String, Vec<u8>>,
    pub summary: Map<String, Value>,
    /// Conditions worth a look that did not stop the run.
    pub flags: Vec<String>,
}

impl RunOutput {
    fn put(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.to_string(), value.into());
    }

    fn flag(&mut self, f: impl Into<String>) {
        let f = f.into();
        if !self.flags.contains(&f) {
            self.flags.push(f);
        }
    }

    fn file(&mut self, name: &str, bytes: Vec<u8>) {
        self.files.insert(name.to_string(), bytes);
    }

    /// `key = value` lines for every scalar summary entry.
    pub fn report_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in &self.summary {
            match v {
                Value::Array(_) | Value::Object(_) => {}
                Value::String(t) => {
                    let _ = writeln!(s, "{k} = {t}");
                }
                other => {
                    let _ = writeln!(s, "{k} = {other}");
                }
            }
        }
        let _ = writeln!(s, "flags = {}", self.flags.join(","));
        s
    }
}

fn numerical(e: AnalysisError) -> ScenarioError {
    ScenarioError::Numerical(e.to_string())
}

fn interferogram_csv(ig: &Interferogram) -> Vec<u8> {
    let mut buf = Vec::new();
    ig.write_csv(&mut buf).expect("writing to memory");
    buf
}

fn table_csv(rows: &[DispersionRow]) -> Vec<u8> {
    let mut s = String::from("wavelength_nm,n,gvd_fs2_per_mm\n");
    for r in rows {
        let _ = writeln!(s, "{:.3},{:.10},{:.6}", r.wavelength_nm, r.n, r.gvd_fs2_per_mm);
    }
    s.into_bytes()
}

/// Runs a scenario; nothing touches the file system.
pub fn run(sc: &Scenario, db: &MaterialDatabase) -> Result<RunOutput> {
    let resolved = sc.resolve(db)?;
    let mut out = RunOutput::default();
    out.put("scenario", sc.name.clone());
    out.put("description", sc.description.clone());
    out.file(
        "scenario.toml",
        toml::to_string(sc)
            .map_err(|e| ScenarioError::Numerical(e.to_string()))?
            .into_bytes(),
    );
    match resolved {
        Resolved::Table(tables) => run_table(&tables, &mut out),
        Resolved::Simulation(sim) => run_simulation(sc, &sim, db, &mut out)?,
    }
    out.put("flags", out.flags.clone());
    let summary = serde_json::to_vec_pretty(&out.summary).map_err(|e| ScenarioError::Numerical(e.to_string()))?;
    out.file("summary.json", summary);
    out.file("report.txt", out.report_text().into_bytes());
    Ok(out)
}

/// Writes every file of `out` into `dir`, creating it if needed.
pub fn write_outputs(out: &RunOutput, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (name, bytes) in &out.files {
        std::fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

fn run_table(tables: &[(String, Vec<DispersionRow>)], out: &mut RunOutput) {
    out.put("kind", "materials_table");
    let mut at800 = BTreeMap::new();
    for (spec, rows) in tables {
        let file = format!("materials_{}.csv", spec.replace(':', "_"));
        out.file(&file, table_csv(rows));
        if let Some(r) = rows.iter().min_by(|a, b| {
            (a.wavelength_nm - 800.0)
                .abs()
                .total_cmp(&(b.wavelength_nm - 800.0).abs())
        }) {
            if (r.wavelength_nm - 800.0).abs() < 1e-9 {
                out.put(&format!("gvd_800nm_{}", spec.replace(':', "_")), r.gvd_fs2_per_mm);
                at800.insert(spec.clone(), r.gvd_fs2_per_mm);
            }
        }
    }
    if let (Some(z), Some(b)) = (at800.get("znse"), at800.get("bbo:o").or(at800.get("bbo"))) {
        out.put("gvd_ratio_znse_to_bbo_o_800nm", z / b);
    }
}

fn sample_metadata(sc: &Scenario, sim: &Simulation, out: &mut RunOutput) {
    out.put("kind", "simulation");
    out.put("pump_center_nm", sim.pump.center_wavelength_nm);
    out.put("pump_shape", format!("{:?}", sim.pump.shape).to_lowercase());
    out.put("pump_bandwidth_fwhm_nm", sim.pump.bandwidth_fwhm_nm);
    out.put("crystal_material", sim.crystal.material.name.clone());
    out.put("crystal_length_mm", sim.crystal.length_mm);
    out.put("grid_size", sim.js.grid.size as u64);
    out.put("sample", sim.stack.name.clone());
    if let Some(p) = sc.sample.as_ref().and_then(|s| s.preset.as_deref()) {
        out.put("sample_preset", p);
    }
    let layers: Vec<Value> = sim
        .stack
        .layers
        .iter()
        .map(|l| json!({"material": l.material.name, "thickness_um": l.thickness_um}))
        .collect();
    for (k, l) in sim.stack.layers.iter().enumerate() {
        out.put(&format!("layer{k}_material"), l.material.name.clone());
        out.put(&format!("layer{k}_thickness_um"), l.thickness_um);
    }
    out.put("layers", layers);
    out.put("mode_overlap", sim.scan.mode_overlap);
    out.put("reference_polarization", sim.scan.reference_polarization.label());
}

fn feature_model(m: FitModel) -> FeatureModel {
    match m {
        FitModel::Gaussian => FeatureModel::Gaussian,
        FitModel::Triangular => FeatureModel::Triangular,
    }
}

fn fit_features(
    ig: &Interferogram,
    features: &[Feature],
    model: FeatureModel,
    out: &mut RunOutput,
) -> Vec<(Feature, DipFit)> {
    let mut fits = Vec::new();
    for f in features {
        match fit_feature(&ig.delays_um, &ig.rate, f.window, model) {
            Ok(fit) => {
                if fit.visibility_flag {
                    out.flag("visibility_above_one");
                }
                fits.push((*f, fit));
            }
            Err(_) => out.flag(format!("fit_failed_at_{:.1}um", f.center)),
        }
    }
    fits
}

fn features_csv(fits: &[(Feature, DipFit)], classes: &[Option<FeatureClass>]) -> Vec<u8> {
    let mut s = String::from(
        "index,center_um,center_sigma_um,fwhm_um,fwhm_sigma_um,visibility,visibility_sigma,polarity,class,model,residual_rms\n",
    );
    for (k, ((_, f), c)) in fits.iter().zip(classes).enumerate() {
        let _ = writeln!(
            s,
            "{k},{:.6},{:.6},{:.6},{:.6},{:.8},{:.8},{},{},{},{:.3e}",
            f.center,
            f.center_sigma(),
            f.fwhm,
            f.fwhm_sigma(),
            f.visibility,
            f.visibility_sigma(),
            f.polarity.label(),
            c.map_or("unclassified", |c| c.label()),
            f.model.label(),
            f.residual_rms
        );
    }
    s.into_bytes()
}

fn fit_json(f: &DipFit, class: Option<FeatureClass>) -> Value {
    json!({
        "center_um": f.center,
        "center_sigma_um": f.center_sigma(),
        "fwhm_um": f.fwhm,
        "fwhm_sigma_um": f.fwhm_sigma(),
        "visibility": f.visibility,
        "visibility_sigma": f.visibility_sigma(),
        "polarity": f.polarity.label(),
        "class": class.map_or("unclassified", |c| c.label()),
        "model": f.model.label(),
    })
}

fn run_simulation(sc: &Scenario, sim: &Simulation, db: &MaterialDatabase, out: &mut RunOutput) -> Result<()> {
    sample_metadata(sc, sim, out);
    let a = &sc.analysis;
    let pol = sim.scan.reference_polarization;
    let ch = polarized_channel(&sim.stack, &sim.js.grid, pol).map_err(|e| ScenarioError::Numerical(e.to_string()))?;
    let clean = qoct_scan(&sim.js, &ch, &sim.scan).map_err(|e| ScenarioError::Numerical(e.to_string()))?;
    if clean.clamped {
        out.flag("negative_rate_clamped");
    }
    let measured = if sc.scan.noise {
        let mut noisy = apply_counting_noise(&clean, &sim.scan).map_err(|e| ScenarioError::Numerical(e.to_string()))?;
        noisy.rate = counts_to_rate(noisy.counts.as_deref().unwrap_or(&[]), &sim.scan);
        noisy
    } else {
        clean.clone()
    };
    out.file("interferogram.csv", interferogram_csv(&measured));
    out.put("baseline_lambda0", clean.baseline);

    let model = feature_model(a.model);
    let mut fits = Vec::new();
    let mut classes: Vec<Option<FeatureClass>> = Vec::new();
    if a.fit {
        let features = detect_features(&measured, a.min_prominence).map_err(numerical)?;
        fits = fit_features(&measured, &features, model, out);
        classes = vec![None; fits.len()];
        out.put("feature_count", fits.len() as u64);
        if fits.is_empty() {
            out.flag("no_features");
        }
        if let Some((_, f)) = fits.iter().max_by(|x, y| x.0.prominence.total_cmp(&y.0.prominence)) {
            out.put("dip_center_um", f.center);
            out.put("dip_fwhm_um", f.fwhm);
            out.put("dip_fwhm_sigma_um", f.fwhm_sigma());
            out.put("dip_visibility", f.visibility);
            out.put("dip_model", f.model.label());
        }
    }

    if a.dither {
        if let Some(sweep) = run_dither(sc, sim, &clean, out)? {
            for (k, (feat, _)) in fits.iter().enumerate() {
                classes[k] = sweep
                    .result
                    .features
                    .iter()
                    .min_by(|x, y| {
                        (x.0.center - feat.center)
                            .abs()
                            .total_cmp(&(y.0.center - feat.center).abs())
                    })
                    .filter(|(f, _)| {
                        (f.center - feat.center).abs() <= 0.5 * feat.width_estimate.max(sim.scan.delay_step_um)
                    })
                    .map(|(_, c)| *c);
            }
            let labelled: Vec<(DipFit, FeatureClass)> = fits
                .iter()
                .zip(&classes)
                .filter_map(|((_, f), c)| c.map(|c| (f.clone(), c)))
                .collect();
            let (lf, lc): (Vec<DipFit>, Vec<FeatureClass>) = labelled.into_iter().unzip();
            match extract_layers(&lf, &lc) {
                Ok(layers) => {
                    out.put("surface_count", layers.surface_delays.len() as u64);
                    out.put("surface_delays_um", layers.surface_delays.clone());
                    out.put("optical_path_lengths_um", layers.optical_path_lengths.clone());
                    out.put("relative_reflectances", layers.relative_reflectances.clone());
                    out.put("relative_reflectance_sigmas", layers.reflectance_sigmas.clone());
                    if let Some(d) = layers.optical_path_lengths.first() {
                        out.put("separation_um", *d);
                    }
                    if let Some(r) = layers.relative_reflectances.get(1) {
                        out.put("reflectance_ratio", *r);
                    }
                }
                Err(_) => out.flag("no_surface_features"),
            }
            out.put(
                "class2_count",
                classes.iter().filter(|c| **c == Some(FeatureClass::Cross)).count() as u64,
            );
            if let Some(length) = a.gvd_interstitial_length_mm {
                run_gvd(sim, &sweep, a.min_prominence, length, out)?;
            }
        }
    }
    if a.fit {
        let list: Vec<Value> = fits.iter().zip(&classes).map(|((_, f), c)| fit_json(f, *c)).collect();
        out.put("features", list);
        out.file("features.csv", features_csv(&fits, &classes));
    }

    if a.polarization {
        run_polarization(sc, sim, db, out)?;
    }
    if a.oct {
        let oct = oct_scan(&sim.js, &ch, &sim.scan).map_err(|e| ScenarioError::Numerical(e.to_string()))?;
        let env = oct.envelope.clone().unwrap_or_default();
        let mut s = String::from("delay_um,fringe,envelope\n");
        for ((d, r), e) in oct.delays_um.iter().zip(&oct.rate).zip(&env) {
            let _ = writeln!(s, "{d:.6},{r:.12},{e:.12}");
        }
        out.file("oct.csv", s.into_bytes());
        match half_max_width(&oct.delays_um, &env, 0.0) {
            Some(w) => out.put("oct_envelope_fwhm_um", w),
            None => out.flag("oct_width_undefined"),
        }
    }
    Ok(())
}

fn run_dither(
    sc: &Scenario,
    sim: &Simulation,
    clean: &Interferogram,
    out: &mut RunOutput,
) -> Result<Option<DitherSweep>> {
    let a = &sc.analysis;
    let features = detect_features(clean, a.min_prominence).map_err(numerical)?;
    if features.len() < 2 {
        out.flag("dither_skipped_single_feature");
        return Ok(None);
    }
    let lo = features.iter().map(|f| f.center).fold(f64::INFINITY, f64::min);
    let hi = features.iter().map(|f| f.center).fold(f64::NEG_INFINITY, f64::max);
    let span0 = polarity_period_nm(sim.pump.center_wavelength_nm, hi - lo) / 4.0;
    let pol = sim.scan.reference_polarization;
    let simulate = |d: f64| {
        detuned_scan(&sim.pump, &sim.crystal, &sim.grid, &sim.scan, d, |g| {
            Ok(polarized_channel(&sim.stack, g, pol)?)
        })
    };
    let sweep = match adaptive_dither(clean, span0, a.max_dither_doublings, a.min_prominence, simulate) {
        Ok(s) => s,
        Err(AnalysisError::InsufficientSpan(m)) => {
            out.flag("dither_suppression_below_target");
            out.put("dither_error", m);
            return Ok(None);
        }
        Err(e) => return Err(numerical(e)),
    };
    let r = &sweep.result;
    out.put("dither_span_nm", sweep.span_nm);
    out.put("dither_points", sweep.detunings_nm.len() as u64);
    out.put(
        "dither_suppression",
        if r.suppression.is_finite() {
            r.suppression
        } else {
            f64::MAX
        },
    );
    let mut s = String::from("delay_um,undithered,class1_mean,class2_residual,class2_envelope\n");
    for j in 0..clean.len() {
        let _ = writeln!(
            s,
            "{:.6},{:.12},{:.12},{:.12},{:.12}",
            clean.delays_um[j], clean.rate[j], r.class1.rate[j], r.residual[j], r.class2_envelope[j]
        );
    }
    out.file("dither.csv", s.into_bytes());
    Ok(Some(sweep))
}

fn run_gvd(
    sim: &Simulation,
    sweep: &DitherSweep,
    min_prominence: f64,
    length_mm: f64,
    out: &mut RunOutput,
) -> Result<()> {
    let meas = match measure_cross_features(sweep, min_prominence) {
        Ok(m) => m,
        Err(_) => {
            out.flag("gvd_features_missing");
            return Ok(());
        }
    };
    let model = GvdModel {
        pump: sim.pump,
        crystal: sim.crystal.clone(),
        grid: sim.grid,
        scan: sim.scan.clone(),
        dither_span_nm: sweep.span_nm,
        min_prominence,
    };
    let est = estimate_gvd(&meas.dip_fits, &meas.cross_fit, length_mm, &model).map_err(numerical)?;
    out.put("gvd_interstitial_length_mm", length_mm);
    out.put("gvd_beta2_fs2_per_mm", est.beta2_fs2_per_mm);
    out.put("gvd_beta2_sigma_fs2_per_mm", est.beta2_sigma);
    out.put("gvd_width_ratio", est.ratio);
    out.put("gvd_width_ratio_at_zero", est.ratio_at_zero);
    out.put("gvd_consistent_with_zero", est.consistent_with_zero);
    out.put("gvd_cross_fwhm_um", meas.cross_fit.fwhm);
    Ok(())
}

/// Ratio at the deepest feature of the combined scan.
fn deepest(rep: &PolarizationReport) -> Option<(f64, f64)> {
    rep.layers
        .iter()
        .max_by(|a, b| a.center.total_cmp(&b.center))
        .map(|l| (l.center, l.ratio))
}

fn quartz_stack(
    sc: &Scenario,
    sim: &Simulation,
    db: &MaterialDatabase,
    delta: f64,
    alpha: f64,
) -> crate::analysis::Result<SampleStack> {
    let name = sc.sample.as_ref().and_then(|s| s.preset.clone()).unwrap_or_default();
    let mut p = sim.preset_params.clone().unwrap_or_default();
    let q = db.get("quartz")?;
    let qw = crate::sample::quarter_wave_thickness_um(&q, sim.crystal.degenerate_wavelength_nm)?;
    p.quartz_thickness_um = Some((qw * delta / (PI / 2.0)).max(1e-6));
    p.quartz_axis_angle_rad = alpha;
    Ok(preset_sample(&name, &p, db)?)
}

fn reference_amplitudes(
    sim: &Simulation,
    stack: &SampleStack,
    center: f64,
    half: f64,
) -> crate::analysis::Result<ReferenceAmplitudes> {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let vecs = [
        JonesVector::new(Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0)),
        JonesVector::new(Complex64::new(0.0, 0.0), Complex64::new(1.0, 0.0)),
        JonesVector::new(Complex64::new(s, 0.0), Complex64::new(s, 0.0)),
        JonesVector::new(Complex64::new(s, 0.0), Complex64::new(0.0, s)),
    ];
    let mut amp = [0.0; 4];
    for (k, v) in vecs.iter().enumerate() {
        let ch = sample_channel(stack, &sim.js.grid, v)?;
        let ig = qoct_scan(&sim.js, &ch, &sim.scan)?;
        amp[k] = interference_amplitude(&ig, center, half)?;
    }
    Ok(ReferenceAmplitudes {
        h: amp[0],
        v: amp[1],
        d: amp[2],
        r: amp[3],
    })
}

fn run_polarization(sc: &Scenario, sim: &Simulation, db: &MaterialDatabase, out: &mut RunOutput) -> Result<()> {
    let a = &sc.analysis;
    let ps = polarization_set(&sim.js, &sim.stack, &sim.scan).map_err(numerical)?;
    let rep = combine_polarization(&ps, a.min_prominence).map_err(numerical)?;
    let mut s = String::from("delay_um,r_h,r_v,r_t\n");
    for j in 0..ps.r_h.len() {
        let _ = writeln!(
            s,
            "{:.6},{:.12},{:.12},{:.12}",
            ps.r_h.delays_um[j], ps.r_h.rate[j], ps.r_v.rate[j], rep.r_t.rate[j]
        );
    }
    out.file("polarization.csv", s.into_bytes());
    let layers: Vec<Value> = rep
        .layers
        .iter()
        .map(|l| {
            json!({
                "center_um": l.center,
                "lambda_h": l.lambda_h,
                "lambda_v": l.lambda_v,
                "ratio_v_to_h": if l.ratio.is_finite() { Value::from(l.ratio) } else { Value::from("inf") },
            })
        })
        .collect();
    out.put("polarization_layers", layers);
    let Some((center, ratio)) = deepest(&rep) else {
        out.flag("polarization_no_features");
        return Ok(());
    };
    out.put("polarization_layer_um", center);
    out.put(
        "polarization_ratio_v_to_h",
        if ratio.is_finite() { ratio } else { f64::MAX },
    );
    if !a.retardation {
        return Ok(());
    }
    let alpha = sim.preset_params.as_ref().map_or(PI / 6.0, |p| p.quartz_axis_angle_rad);
    let forward = |delta: f64| -> crate::analysis::Result<f64> {
        let stack = quartz_stack(sc, sim, db, delta, alpha)?;
        let ps = polarization_set(&sim.js, &stack, &sim.scan)?;
        let rep = combine_polarization(&ps, a.min_prominence)?;
        Ok(deepest(&rep).map_or(0.0, |d| d.1))
    };
    let est = invert_retardation(ratio, &forward).map_err(numerical)?;
    out.put("retardation_rad", est.delta);
    out.put("retardation_roots_rad", est.roots.clone());
    out.put("retardation_ambiguous", est.ambiguous);
    if est.ambiguous {
        out.flag("retardation_ambiguous");
    }
    if est.flat {
        out.flag("retardation_flat_region");
    }
    // axis angle from the reference polarization that maximizes the rate
    let half = 0.5 * sim.scan.delay_step_um.max(1.0) * 10.0;
    let measured = reference_amplitudes(sim, &sim.stack, center, half).map_err(numerical)?;
    let (e_meas, _) = optimal_reference(&measured);
    let predict = |alpha: f64| -> crate::analysis::Result<JonesVector> {
        let stack = quartz_stack(sc, sim, db, est.delta, alpha)?;
        let centre = {
            let ps = polarization_set(&sim.js, &stack, &sim.scan)?;
            deepest(&combine_polarization(&ps, a.min_prominence)?).map_or(center, |d| d.0)
        };
        Ok(optimal_reference(&reference_amplitudes(sim, &stack, centre, half)?).0)
    };
    match estimate_axis_angle(&e_meas, &predict) {
        Ok(al) => out.put("axis_angle_deg", al.to_degrees()),
        Err(_) => out.flag("axis_angle_not_identified"),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::preset_scenario;

    #[test]
    fn fig4a_summary_has_a_width() {
        let db = MaterialDatabase::builtin();
        let out = run(&preset_scenario("fig4a").unwrap(), &db).unwrap();
        assert!(out.summary["dip_fwhm_um"].as_f64().unwrap() > 0.0);
        assert_eq!(out.summary["feature_count"].as_u64(), Some(1));
        for f in [
            "interferogram.csv",
            "features.csv",
            "summary.json",
            "report.txt",
            "scenario.toml",
        ] {
            assert!(out.files.contains_key(f), "{f}");
        }
        assert!(String::from_utf8(out.files["report.txt"].clone())
            .unwrap()
            .contains("dip_fwhm_um = "));
    }

    #[test]
    fn materials_table_reports_ratio() {
        let db = MaterialDatabase::builtin();
        let out = run(&preset_scenario("materials_table").unwrap(), &db).unwrap();
        assert!(out.summary["gvd_ratio_znse_to_bbo_o_800nm"].as_f64().unwrap() > 10.0);
        assert!(out.files.contains_key("materials_znse.csv"));
    }

    #[test]
    fn noisy_runs_record_counts() {
        let db = MaterialDatabase::builtin();
        let mut sc = preset_scenario("fig5a").unwrap();
        sc.scan.noise = true;
        sc.scan.rng_seed = 7;
        let out = run(&sc, &db).unwrap();
        let csv = String::from_utf8(out.files["interferogram.csv"].clone()).unwrap();
        assert!(csv.contains("delay_um,rate_normalized,counts"));
    }
}
