use std::path::Path;
use std::process::{Command, Output};

fn psqoct(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_psqoct"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn catalog_lists_every_preset() {
    let out = psqoct(&["list-presets"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for name in [
        "fig4a",
        "fig4b",
        "fig5a",
        "fig5b",
        "fig7",
        "fig8",
        "fig9a",
        "fig9b",
        "materials_table",
    ] {
        assert!(text.lines().any(|l| l.starts_with(name)), "{name} missing");
    }
}

#[test]
fn every_preset_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    for name in psqoct::scenario::PRESETS {
        let target = dir.path().join(name);
        let out = psqoct(&["run", name, "-o", target.to_str().unwrap()]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        assert!(target.join("summary.json").exists());
        assert!(target.join("report.txt").exists());
    }
}

#[test]
fn malformed_scenario_exits_two_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(
        &cfg,
        "name = \"bad\"\n[pump]\nshape = \"cw\"\ncenter_wavelength = 400\n",
    )
    .unwrap();
    let target = dir.path().join("out");
    let out = psqoct(&["run", cfg.to_str().unwrap(), "-o", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!target.exists());

    // well-formed but unresolvable: aliasing window
    std::fs::write(
        &cfg,
        "name = \"wide\"\n[pump]\nshape = \"gaussian\"\ncenter_wavelength_nm = 400.0\nbandwidth_fwhm_nm = 2.0\n\
         [crystal]\nlength_mm = 0.5\n[sample]\npreset = \"mirror\"\n[scan]\ndelay_start_um = -5000.0\n\
         delay_end_um = 5000.0\ndelay_step_um = 1.0\n",
    )
    .unwrap();
    let out = psqoct(&["run", cfg.to_str().unwrap(), "-o", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!target.exists());

    let out = psqoct(&["run", "no_such_preset", "-o", target.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn identical_seed_gives_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("noisy.toml");
    let text = psqoct::scenario::preset_text("fig8")
        .unwrap()
        .replace("[scan]", "[scan]\nnoise = true\nrng_seed = 11");
    std::fs::write(&cfg, text).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for t in [&a, &b] {
        let out = psqoct(&["run", cfg.to_str().unwrap(), "-o", t.to_str().unwrap()]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in [
        "interferogram.csv",
        "dither.csv",
        "features.csv",
        "summary.json",
        "report.txt",
    ] {
        assert_eq!(
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let c = dir.path().join("c");
    psqoct(&["run", cfg.to_str().unwrap(), "-o", c.to_str().unwrap(), "--seed", "12"]);
    assert_ne!(
        std::fs::read(a.join("interferogram.csv")).unwrap(),
        std::fs::read(c.join("interferogram.csv")).unwrap()
    );
}

#[test]
fn fig5b_records_crystal_and_znse() {
    let dir = tempfile::tempdir().unwrap();
    let out = psqoct(&["run", "fig5b", "-o", dir.path().to_str().unwrap()]);
    assert!(out.status.success());
    let s = read_json(&dir.path().join("summary.json"));
    assert_eq!(s["crystal_length_mm"].as_f64(), Some(0.5));
    assert_eq!(s["layer0_material"].as_str(), Some("znse"));
    assert_eq!(s["layer0_thickness_um"].as_f64(), Some(6000.0));
    let csv = std::fs::read_to_string(dir.path().join("interferogram.csv")).unwrap();
    assert!(csv.contains("# crystal_length_mm = 0.5"));
}

#[test]
fn fig8_reports_separation() {
    let dir = tempfile::tempdir().unwrap();
    assert!(psqoct(&["run", "fig8", "-o", dir.path().to_str().unwrap()])
        .status
        .success());
    let s = read_json(&dir.path().join("summary.json"));
    assert!((s["separation_um"].as_f64().unwrap() - 145.0).abs() < 1.0);
    assert_eq!(s["feature_count"].as_u64(), Some(3));
}

#[test]
fn materials_dump_and_analyze_round_trip() {
    let out = psqoct(&["materials", "znse", "--points", "5"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("wavelength_nm,n,gvd_fs2_per_mm"));
    assert_eq!(text.lines().count(), 6);
    assert_eq!(psqoct(&["materials", "unobtainium"]).status.code(), Some(2));

    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    assert!(psqoct(&["run", "fig5a", "-o", run.to_str().unwrap()]).status.success());
    let an = dir.path().join("an");
    let out = psqoct(&[
        "analyze",
        run.join("interferogram.csv").to_str().unwrap(),
        "-o",
        an.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let a = read_json(&an.join("summary.json"));
    let r = read_json(&run.join("summary.json"));
    let fa = a["features"][0]["fwhm_um"].as_f64().unwrap();
    let fr = r["dip_fwhm_um"].as_f64().unwrap();
    assert!((fa - fr).abs() < 1e-6 * fr);
}
