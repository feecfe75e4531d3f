//! Coincidence and classical interferograms.
//!
//! The coincidence rate is `R = Lambda0 - gamma Re Lambda(tau)` normalized by
//! `Lambda0`, with
//!
//! ```text
//! Lambda0    = sum |A(s,i)|^2 P(s) dW^2
//! Lambda(tau) = sum A(s,i) A*(i,s) h(s) h*(i) exp(-i (W_s - W_i) tau) dW^2
//! ```
//!
//! where `P` is the total reflected power of the sample. The delay axis is the
//! reference-mirror displacement `x` (um); internally
//! `tau = 2x/c + tau_crystal + tau_ref`, which places the dip of the first
//! reflecting surface at `x = 0` and deeper surfaces at positive `x`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use thiserror::Error;

use crate::biphoton::JointSpectrum;
use crate::sample::{Channel, Polarization};
use crate::units::{delay_um_to_fs, C_UM_PER_FS};

#[derive(Debug, Error)]
pub enum InterferometerError {
    #[error("channel has {channel} samples but the grid has {grid}")]
    GridMismatch { channel: usize, grid: usize },
    #[error("empty scan window")]
    EmptyWindow,
    #[error("invalid scan configuration: {0}")]
    InvalidConfig(String),
    #[error("scan window of {window:.1} um exceeds the alias-free delay range {period:.1} um of the grid")]
    Aliasing { window: f64, period: f64 },
    #[error("negative rate {value} at delay {delay} um")]
    NegativeRate { delay: f64, value: f64 },
    #[error("interferogram file: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, InterferometerError>;

/// Rates within this distance below zero are treated as rounding noise.
pub const NEGATIVE_RATE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig {
    pub delay_start_um: f64,
    pub delay_end_um: f64,
    pub delay_step_um: f64,
    pub mode_overlap: f64,
    pub reference_polarization: Polarization,
    pub integration_time_s: f64,
    /// Coincidences per second at the normalized baseline.
    pub rate_scale: f64,
    pub rng_seed: u64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            delay_start_um: -60.0,
            delay_end_um: 60.0,
            delay_step_um: 0.5,
            mode_overlap: 1.0,
            reference_polarization: Polarization::H,
            integration_time_s: 5.0,
            rate_scale: 200.0,
            rng_seed: 0,
        }
    }
}

impl ScanConfig {
    pub fn window(start: f64, end: f64, step: f64) -> Self {
        Self {
            delay_start_um: start,
            delay_end_um: end,
            delay_step_um: step,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(InterferometerError::InvalidConfig(m));
        if !(self.delay_step_um > 0.0 && self.delay_step_um.is_finite()) {
            return bad(format!("delay step must be positive, got {}", self.delay_step_um));
        }
        if !(self.delay_start_um.is_finite() && self.delay_end_um.is_finite()) {
            return bad("delay window must be finite".into());
        }
        if self.delay_end_um < self.delay_start_um {
            return Err(InterferometerError::EmptyWindow);
        }
        if !(0.0..=1.0).contains(&self.mode_overlap) {
            return bad(format!("mode overlap must lie in [0, 1], got {}", self.mode_overlap));
        }
        if !(self.integration_time_s > 0.0 && self.integration_time_s.is_finite()) {
            return bad(format!(
                "integration time must be positive, got {}",
                self.integration_time_s
            ));
        }
        if !(self.rate_scale >= 0.0 && self.rate_scale.is_finite()) {
            return bad(format!("rate scale must be non-negative, got {}", self.rate_scale));
        }
        Ok(())
    }

    /// Delay axis in um, inclusive of both ends where they fall on the step.
    pub fn delays(&self) -> Vec<f64> {
        let n = ((self.delay_end_um - self.delay_start_um) / self.delay_step_um + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|k| self.delay_start_um + k as f64 * self.delay_step_um)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Interferogram {
    pub delays_um: Vec<f64>,
    /// Normalized rate (coincidence) or intensity (classical).
    pub rate: Vec<f64>,
    pub counts: Option<Vec<u64>>,
    /// Classical fringe envelope, present for OCT scans.
    pub envelope: Option<Vec<f64>>,
    /// Unnormalized baseline Lambda0.
    pub baseline: f64,
    pub reference_polarization: Polarization,
    /// Set when tiny negative rates were clamped to zero.
    pub clamped: bool,
    pub metadata: BTreeMap<String, String>,
}

impl Interferogram {
    pub fn len(&self) -> usize {
        self.delays_um.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays_um.is_empty()
    }

    pub fn step(&self) -> f64 {
        if self.delays_um.len() > 1 {
            self.delays_um[1] - self.delays_um[0]
        } else {
            0.0
        }
    }

    /// Writes the interferogram as CSV with a commented metadata header.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (k, v) in &self.metadata {
            writeln!(w, "# {k} = {v}")?;
        }
        match &self.counts {
            Some(c) => {
                writeln!(w, "delay_um,rate_normalized,counts")?;
                for ((d, r), n) in self.delays_um.iter().zip(&self.rate).zip(c) {
                    writeln!(w, "{d:.6},{r:.12},{n}")?;
                }
            }
            None => {
                writeln!(w, "delay_um,rate_normalized")?;
                for (d, r) in self.delays_um.iter().zip(&self.rate) {
                    writeln!(w, "{d:.6},{r:.12}")?;
                }
            }
        }
        Ok(())
    }

    /// Reads a file produced by [`Interferogram::write_csv`].
    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut metadata = BTreeMap::new();
        let mut delays = Vec::new();
        let mut rate = Vec::new();
        let mut counts = Vec::new();
        let mut columns = 0;
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some((k, v)) = rest.split_once('=') {
                    metadata.insert(k.trim().to_string(), v.trim().to_string());
                }
                continue;
            }
            if columns == 0 {
                let header: Vec<_> = line.split(',').map(str::trim).collect();
                if header.len() < 2 || header[0] != "delay_um" || header[1] != "rate_normalized" {
                    return Err(InterferometerError::Parse(format!("unexpected header `{line}`")));
                }
                columns = header.len();
                continue;
            }
            let fields: Vec<_> = line.split(',').map(str::trim).collect();
            if fields.len() != columns {
                return Err(InterferometerError::Parse(format!(
                    "line {}: expected {columns} fields",
                    lineno + 1
                )));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| InterferometerError::Parse(format!("line {}: {e}", lineno + 1)))
            };
            delays.push(num(fields[0])?);
            rate.push(num(fields[1])?);
            if columns > 2 {
                counts.push(
                    fields[2]
                        .parse::<u64>()
                        .map_err(|e| InterferometerError::Parse(format!("line {}: {e}", lineno + 1)))?,
                );
            }
        }
        if delays.is_empty() {
            return Err(InterferometerError::EmptyWindow);
        }
        let reference_polarization = metadata
            .get("reference_polarization")
            .and_then(|s| s.parse().ok())
            .unwrap_or(Polarization::H);
        let baseline = metadata
            .get("baseline_lambda0")
            .and_then(|s| s.parse().ok())
            .unwrap_or(1.0);
        Ok(Self {
            delays_um: delays,
            rate,
            counts: (columns > 2).then_some(counts),
            envelope: None,
            baseline,
            reference_polarization,
            clamped: false,
            metadata,
        })
    }
}

fn check_channel(js: &JointSpectrum, ch: &Channel) -> Result<()> {
    let n = js.grid.size;
    if ch.amplitude.len() != n || ch.total_power.len() != n {
        return Err(InterferometerError::GridMismatch {
            channel: ch.amplitude.len(),
            grid: n,
        });
    }
    let g = &ch.grid;
    if g.size != n || (g.step - js.grid.step).abs() > 1e-12 * js.grid.step || (g.center - js.grid.center).abs() > 1e-12
    {
        return Err(InterferometerError::GridMismatch {
            channel: g.size,
            grid: n,
        });
    }
    Ok(())
}

/// Alias-free length of the delay axis (um) for a grid step (rad/fs).
pub fn alias_free_range_um(step: f64) -> f64 {
    std::f64::consts::PI * C_UM_PER_FS / step
}

/// Internal time delay (fs) for a delay-axis value.
pub fn internal_delay(js: &JointSpectrum, ch: &Channel, delay_um: f64) -> f64 {
    let crystal = js.crystal.as_ref().map_or(0.0, |c| c.walkoff_delay());
    delay_um_to_fs(delay_um) + crystal + ch.reference_delay_fs
}

/// Interference term collapsed onto frequency differences, so that each
/// delay costs O(N).
#[derive(Debug, Clone)]
pub struct CoincidenceKernel {
    /// `m[d + N - 1]` sums the terms with `s - i = d`, already scaled by dW^2.
    diagonals: Vec<Complex64>,
    step: f64,
    size: usize,
    /// Lambda0 computed from the supplied power.
    pub baseline: f64,
}

impl CoincidenceKernel {
    /// Kernel for the cross term between channels `ha` (at the signal
    /// frequency) and `hb` (at the idler frequency).
    pub fn new(js: &JointSpectrum, ha: &[Complex64], hb: &[Complex64], power: &[f64]) -> Self {
        let n = js.grid.size;
        let dw2 = js.grid.step * js.grid.step;
        // fixed summation order per diagonal keeps results bit-reproducible
        let diagonals: Vec<Complex64> = (0..2 * n - 1)
            .into_par_iter()
            .map(|k| {
                let d = k as isize - (n as isize - 1);
                let s0 = d.max(0) as usize;
                let s1 = (n as isize + d.min(0)) as usize;
                let mut acc = Complex64::new(0.0, 0.0);
                #[allow(clippy::needless_range_loop)]
                for s in s0..s1 {
                    let i = (s as isize - d) as usize;
                    let a = js.amplitude(s, i);
                    if a.re == 0.0 && a.im == 0.0 {
                        continue;
                    }
                    let b = js.amplitude(i, s);
                    if b.re == 0.0 && b.im == 0.0 {
                        continue;
                    }
                    acc += a * b.conj() * ha[s] * hb[i].conj();
                }
                acc
            })
            .collect();
        let rows: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|s| (0..n).map(|i| js.amplitude(s, i).norm_sqr()).sum::<f64>() * power[s])
            .collect();
        let baseline: f64 = rows.iter().sum();
        Self {
            diagonals: diagonals.into_iter().map(|z| z * dw2).collect(),
            step: js.grid.step,
            size: n,
            baseline: baseline * dw2,
        }
    }

    pub fn for_channel(js: &JointSpectrum, ch: &Channel) -> Self {
        Self::new(js, &ch.amplitude, &ch.amplitude, &ch.total_power)
    }

    /// Lambda(tau).
    pub fn lambda(&self, tau: f64) -> Complex64 {
        let n = self.size as isize;
        let mut acc = Complex64::new(0.0, 0.0);
        for (k, m) in self.diagonals.iter().enumerate() {
            if m.re == 0.0 && m.im == 0.0 {
                continue;
            }
            let d = k as isize - (n - 1);
            acc += m * Complex64::from_polar(1.0, -(d as f64) * self.step * tau);
        }
        acc
    }
}

/// Direct double sum for Lambda(tau); the reference implementation.
pub fn lambda_direct(js: &JointSpectrum, ch: &Channel, tau: f64) -> Complex64 {
    let n = js.grid.size;
    let mut acc = Complex64::new(0.0, 0.0);
    for s in 0..n {
        for i in 0..n {
            let om = js.grid.detuning(s) - js.grid.detuning(i);
            acc += js.amplitude(s, i)
                * js.amplitude(i, s).conj()
                * ch.amplitude[s]
                * ch.amplitude[i].conj()
                * Complex64::from_polar(1.0, -om * tau);
        }
    }
    acc * js.grid.step * js.grid.step
}

/// Lambda0 by direct summation.
pub fn baseline_direct(js: &JointSpectrum, ch: &Channel) -> f64 {
    let n = js.grid.size;
    let mut acc = 0.0;
    for s in 0..n {
        for i in 0..n {
            acc += js.amplitude(s, i).norm_sqr() * ch.total_power[s];
        }
    }
    acc * js.grid.step * js.grid.step
}

fn provenance(js: &JointSpectrum, ch: &Channel, cfg: &ScanConfig, kind: &str) -> BTreeMap<String, String> {
    let mut m = BTreeMap::new();
    m.insert("kind".into(), kind.into());
    m.insert("sample".into(), ch.label.clone());
    m.insert(
        "reference_polarization".into(),
        cfg.reference_polarization.label().into(),
    );
    m.insert("mode_overlap".into(), format!("{}", cfg.mode_overlap));
    m.insert("rng_seed".into(), format!("{}", cfg.rng_seed));
    m.insert("grid_size".into(), format!("{}", js.grid.size));
    m.insert("grid_step_rad_per_fs".into(), format!("{:e}", js.grid.step));
    if let Some(p) = &js.pump {
        m.insert("pump_center_nm".into(), format!("{}", p.center_wavelength_nm));
        m.insert("pump_bandwidth_nm".into(), format!("{}", p.bandwidth_fwhm_nm));
        m.insert("pump_shape".into(), format!("{:?}", p.shape).to_lowercase());
        m.insert("pump_detuning_nm".into(), format!("{}", p.detuning_nm));
    }
    if let Some(c) = &js.crystal {
        m.insert("crystal_material".into(), c.material.name.clone());
        m.insert("crystal_length_mm".into(), format!("{}", c.length_mm));
    }
    if let Some(f) = js.detection_filter_fwhm_nm {
        m.insert("detection_filter_nm".into(), format!("{f}"));
    }
    m
}

fn check_window(js: &JointSpectrum, cfg: &ScanConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let window = cfg.delay_end_um - cfg.delay_start_um;
    let period = alias_free_range_um(js.grid.step);
    if window >= period {
        return Err(InterferometerError::Aliasing { window, period });
    }
    let delays = cfg.delays();
    if delays.is_empty() {
        return Err(InterferometerError::EmptyWindow);
    }
    Ok(delays)
}

fn normalize_rates(delays: &[f64], raw: Vec<f64>) -> Result<(Vec<f64>, bool)> {
    let mut clamped = false;
    let mut out = Vec::with_capacity(raw.len());
    for (d, r) in delays.iter().zip(raw) {
        if r < 0.0 {
            if r < -NEGATIVE_RATE_TOLERANCE {
                return Err(InterferometerError::NegativeRate { delay: *d, value: r });
            }
            clamped = true;
            out.push(0.0);
        } else {
            out.push(r);
        }
    }
    Ok((out, clamped))
}

/// Coincidence interferogram for a projected sample channel.
pub fn qoct_scan(js: &JointSpectrum, ch: &Channel, cfg: &ScanConfig) -> Result<Interferogram> {
    check_channel(js, ch)?;
    let delays = check_window(js, cfg)?;
    let kernel = CoincidenceKernel::for_channel(js, ch);
    if !(kernel.baseline > 0.0) {
        return Err(InterferometerError::InvalidConfig("sample reflects no light".into()));
    }
    let raw: Vec<f64> = delays
        .par_iter()
        .map(|&x| {
            let tau = internal_delay(js, ch, x);
            1.0 - cfg.mode_overlap * kernel.lambda(tau).re / kernel.baseline
        })
        .collect();
    let (rate, clamped) = normalize_rates(&delays, raw)?;
    let mut metadata = provenance(js, ch, cfg, "qoct");
    metadata.insert("baseline_lambda0".into(), format!("{:e}", kernel.baseline));
    metadata.insert("clamped".into(), format!("{clamped}"));
    Ok(Interferogram {
        delays_um: delays,
        rate,
        counts: None,
        envelope: None,
        baseline: kernel.baseline,
        reference_polarization: cfg.reference_polarization,
        clamped,
        metadata,
    })
}

/// Same as [`qoct_scan`] but through the direct double sum.
pub fn qoct_scan_direct(js: &JointSpectrum, ch: &Channel, cfg: &ScanConfig) -> Result<Interferogram> {
    check_channel(js, ch)?;
    let delays = check_window(js, cfg)?;
    let base = baseline_direct(js, ch);
    let raw: Vec<f64> = delays
        .par_iter()
        .map(|&x| 1.0 - cfg.mode_overlap * lambda_direct(js, ch, internal_delay(js, ch, x)).re / base)
        .collect();
    let (rate, clamped) = normalize_rates(&delays, raw)?;
    let mut metadata = provenance(js, ch, cfg, "qoct_direct");
    metadata.insert("baseline_lambda0".into(), format!("{base:e}"));
    Ok(Interferogram {
        delays_um: delays,
        rate,
        counts: None,
        envelope: None,
        baseline: base,
        reference_polarization: cfg.reference_polarization,
        clamped,
        metadata,
    })
}

/// Classical interferogram `1 + Re[sum S h exp(-i w tau) / sum S]` for the
/// signal marginal spectrum, with its envelope.
pub fn oct_scan(js: &JointSpectrum, ch: &Channel, cfg: &ScanConfig) -> Result<Interferogram> {
    check_channel(js, ch)?;
    let delays = check_window(js, cfg)?;
    let spectrum = js.signal_marginal();
    let norm: f64 = spectrum.iter().sum();
    if !(norm > 0.0) {
        return Err(InterferometerError::InvalidConfig("empty source spectrum".into()));
    }
    let weighted: Vec<Complex64> = spectrum
        .iter()
        .zip(&ch.amplitude)
        .map(|(s, h)| h * (s / norm))
        .collect();
    let center = js.grid.center;
    let (rate, envelope): (Vec<f64>, Vec<f64>) = delays
        .par_iter()
        .map(|&x| {
            let tau = delay_um_to_fs(x) + ch.reference_delay_fs;
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, w) in weighted.iter().enumerate() {
                acc += w * Complex64::from_polar(1.0, -js.grid.detuning(k) * tau);
            }
            let fringe = acc * Complex64::from_polar(1.0, -center * tau);
            (1.0 + fringe.re, acc.norm())
        })
        .unzip();
    let mut metadata = provenance(js, ch, cfg, "oct");
    metadata.insert("baseline_lambda0".into(), "1".into());
    Ok(Interferogram {
        delays_um: delays,
        rate,
        counts: None,
        envelope: Some(envelope),
        baseline: 1.0,
        reference_polarization: cfg.reference_polarization,
        clamped: false,
        metadata,
    })
}

/// Draws Poisson counts with mean `rate_scale * rate * integration_time`.
pub fn apply_counting_noise(ig: &Interferogram, cfg: &ScanConfig) -> Result<Interferogram> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut counts = Vec::with_capacity(ig.len());
    for (d, &r) in ig.delays_um.iter().zip(&ig.rate) {
        if !(r >= 0.0) {
            return Err(InterferometerError::NegativeRate { delay: *d, value: r });
        }
        let mean = cfg.rate_scale * r * cfg.integration_time_s;
        let n = if mean > 0.0 {
            Poisson::new(mean)
                .map_err(|e| InterferometerError::InvalidConfig(e.to_string()))?
                .sample(&mut rng) as u64
        } else {
            0
        };
        counts.push(n);
    }
    let mut out = ig.clone();
    out.counts = Some(counts);
    out.metadata.insert("rng_seed".into(), format!("{}", cfg.rng_seed));
    out.metadata
        .insert("integration_time_s".into(), format!("{}", cfg.integration_time_s));
    out.metadata
        .insert("rate_scale_per_s".into(), format!("{}", cfg.rate_scale));
    Ok(out)
}

/// Converts counts back to a normalized rate.
pub fn counts_to_rate(counts: &[u64], cfg: &ScanConfig) -> Vec<f64> {
    let scale = cfg.rate_scale * cfg.integration_time_s;
    counts.iter().map(|&c| c as f64 / scale).collect()
}
