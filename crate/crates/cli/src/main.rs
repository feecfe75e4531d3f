//! `psqoct`: run PS-QOCT scenarios, list presets, dump dispersion tables and
//! analyze recorded interferograms.

use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use psqoct::analysis::{detect_features, fit_feature, FeatureModel};
use psqoct::interferometer::Interferogram;
use psqoct::materials::{dispersion_table, MaterialDatabase};
use psqoct::scenario::{self, preset_catalog, preset_scenario, write_outputs, Scenario, ScenarioError};

#[derive(Parser)]
#[command(
    name = "psqoct",
    version,
    about = "Polarization-sensitive quantum OCT simulator and analysis toolkit"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file or a built-in preset.
    Run {
        /// Path to a scenario TOML file, or a preset name.
        scenario: String,
        /// Output directory (created if missing).
        #[arg(short, long, default_value = "psqoct-out")]
        out: PathBuf,
        /// Override the scan RNG seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// List built-in presets.
    ListPresets {
        /// Print the TOML source of one preset instead.
        #[arg(long)]
        show: Option<String>,
    },
    /// Print n and GVD of a material as CSV.
    Materials {
        /// Material name, optionally `name:o` or `name:e`.
        material: String,
        #[arg(long, default_value_t = 600.0)]
        start_nm: f64,
        #[arg(long, default_value_t = 1000.0)]
        end_nm: f64,
        #[arg(long, default_value_t = 41)]
        points: usize,
    },
    /// Detect and fit features in an interferogram CSV.
    Analyze {
        input: PathBuf,
        #[arg(short, long, default_value = "psqoct-analysis")]
        out: PathBuf,
        #[arg(long, default_value_t = 0.02)]
        min_prominence: f64,
        #[arg(long, value_parser = ["gaussian", "triangular"], default_value = "gaussian")]
        model: String,
    },
}

fn load(spec: &str) -> Result<Scenario, ScenarioError> {
    let path = PathBuf::from(spec);
    if path.exists() {
        Scenario::from_file(&path)
    } else if scenario::PRESETS.contains(&spec) {
        preset_scenario(spec)
    } else {
        Err(ScenarioError::Config(format!(
            "`{spec}` is neither a file nor a preset"
        )))
    }
}

fn run(spec: &str, out: &Path, seed: Option<u64>) -> Result<(), ScenarioError> {
    let mut sc = load(spec)?;
    if let Some(s) = seed {
        sc.scan.rng_seed = s;
    }
    let db = MaterialDatabase::builtin();
    let result = scenario::run(&sc, &db)?;
    write_outputs(&result, out)?;
    println!("{}: wrote {} files to {}", sc.name, result.files.len(), out.display());
    if !result.flags.is_empty() {
        println!("flags: {}", result.flags.join(", "));
    }
    Ok(())
}

fn materials(material: &str, start: f64, end: f64, points: usize) -> Result<(), ScenarioError> {
    let db = MaterialDatabase::builtin();
    let (name, axis) = scenario::parse_material_axis(material, &db)?;
    let m = db.get(&name).map_err(|e| ScenarioError::Config(e.to_string()))?;
    let rows = dispersion_table(&m, axis, start, end, points).map_err(|e| ScenarioError::Config(e.to_string()))?;
    let mut o = std::io::stdout().lock();
    writeln!(o, "wavelength_nm,n,gvd_fs2_per_mm")?;
    for r in rows {
        writeln!(o, "{:.3},{:.10},{:.6}", r.wavelength_nm, r.n, r.gvd_fs2_per_mm)?;
    }
    Ok(())
}

fn analyze(input: &Path, out: &Path, min_prominence: f64, model: &str) -> Result<(), ScenarioError> {
    let file = File::open(input).map_err(|e| ScenarioError::Config(format!("{}: {e}", input.display())))?;
    let ig = Interferogram::read_csv(BufReader::new(file)).map_err(|e| ScenarioError::Config(e.to_string()))?;
    let model = if model == "triangular" {
        FeatureModel::Triangular
    } else {
        FeatureModel::Gaussian
    };
    let features = detect_features(&ig, min_prominence).map_err(|e| ScenarioError::Numerical(e.to_string()))?;
    let mut csv = String::from("index,center_um,center_sigma_um,fwhm_um,fwhm_sigma_um,visibility,polarity,model\n");
    let mut report = format!("input = {}\nfeature_count = {}\n", input.display(), features.len());
    let mut summary = Vec::new();
    let mut flags = Vec::new();
    for (k, f) in features.iter().enumerate() {
        match fit_feature(&ig.delays_um, &ig.rate, f.window, model) {
            Ok(fit) => {
                csv.push_str(&format!(
                    "{k},{:.6},{:.6},{:.6},{:.6},{:.8},{},{}\n",
                    fit.center,
                    fit.center_sigma(),
                    fit.fwhm,
                    fit.fwhm_sigma(),
                    fit.visibility,
                    fit.polarity.label(),
                    fit.model.label()
                ));
                report.push_str(&format!(
                    "feature{k}_center_um = {}\nfeature{k}_fwhm_um = {}\n",
                    fit.center, fit.fwhm
                ));
                summary.push(serde_json::json!({
                    "center_um": fit.center, "fwhm_um": fit.fwhm, "visibility": fit.visibility,
                    "polarity": fit.polarity.label(),
                }));
                if fit.visibility_flag {
                    flags.push("visibility_above_one".to_string());
                }
            }
            Err(_) => flags.push(format!("fit_failed_at_{:.1}um", f.center)),
        }
    }
    report.push_str(&format!("flags = {}\n", flags.join(",")));
    let json = serde_json::to_vec_pretty(&serde_json::json!({
        "input": input.display().to_string(),
        "features": summary,
        "flags": flags,
    }))
    .map_err(|e| ScenarioError::Numerical(e.to_string()))?;
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("features.csv"), csv)?;
    std::fs::write(out.join("report.txt"), report)?;
    std::fs::write(out.join("summary.json"), json)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { scenario, out, seed } => run(scenario, out, *seed),
        Command::ListPresets { show: Some(name) } => match scenario::preset_text(name) {
            Some(t) => {
                print!("{t}");
                Ok(())
            }
            None => Err(ScenarioError::Config(format!("unknown preset `{name}`"))),
        },
        Command::ListPresets { show: None } => {
            for (name, desc) in preset_catalog() {
                println!("{name:<16} {desc}");
            }
            Ok(())
        }
        Command::Materials {
            material,
            start_nm,
            end_nm,
            points,
        } => materials(material, *start_nm, *end_nm, *points),
        Command::Analyze {
            input,
            out,
            min_prominence,
            model,
        } => analyze(input, out, *min_prominence, model),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
