//! The four workflows: simulate, toy, sweep and invert.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::Serialize;
use zeeman_eit::atomic_structure::{direction_dipole_ratio, PhysicalConstants};
use zeeman_eit::liouville::{linear_grid, probe_scan, rabi_amplitude, ScanConfig, ScanDiagnostics, VelocityGrid};
use zeeman_eit::magnetometer::{field_direction, invert, InversionConfig, MagnetometerEstimate, ThresholdConfig};
use zeeman_eit::spectra::{
    analyze, read_csv, ImportOptions, PeakMode, PeakSet, SignalConvention, Spectrum, SpectrumSource,
};
use zeeman_eit::toy_model::{
    chi_analytic, peak_amplitude_a0, peak_amplitude_a1, peak_amplitude_am1, DeltaTerm, ToyParameters,
};
use zeeman_eit::EitError;

use crate::config::{sweep_geometry, ModelKind, RunConfig, RunFlags, SweepParam};
use crate::error::CliError;
use crate::output::{emit_spectrum, write_atomic, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConstantsEcho {
    pub mu_b: f64,
    pub gamma: f64,
    pub saturation_intensity: f64,
    pub spacing_slope: f64,
}

impl From<&PhysicalConstants<f64>> for ConstantsEcho {
    fn from(c: &PhysicalConstants<f64>) -> Self {
        Self {
            mu_b: c.mu_b,
            gamma: c.gamma,
            saturation_intensity: c.saturation_intensity,
            spacing_slope: c.spacing_slope(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct VelocityEcho {
    pub classes: usize,
    pub fwhm_mhz: f64,
    pub core_mhz: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ToyReport {
    pub a0: f64,
    pub a1: f64,
    pub am1: f64,
    /// A₊₁/A₀; absent when A₀ vanishes.
    pub ratio: Option<f64>,
    pub theta_implied_deg: f64,
    pub saturated: bool,
    pub omega_p: f64,
    pub omega_c: f64,
    pub gamma_eg: f64,
    pub gamma_gg: f64,
    pub w_d: f64,
}

/// JSON sidecar of one spectrum.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumMeta<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub workflow: &'static str,
    pub model: &'static str,
    pub config: &'a RunConfig,
    pub delta_mhz: f64,
    pub constants: ConstantsEcho,
    pub probe_rabi_mhz: f64,
    pub pump_rabi_mhz: f64,
    pub velocity: Option<VelocityEcho>,
    pub diagnostics: Option<ScanDiagnostics>,
    pub toy: Option<ToyReport>,
    pub peaks: Option<PeakSet>,
    pub analysis_error: Option<String>,
}

pub struct Simulated {
    pub spectrum: Spectrum<f64>,
    pub diagnostics: Option<ScanDiagnostics>,
    pub velocity: Option<VelocityEcho>,
    pub toy: Option<ToyReport>,
}

fn constants() -> PhysicalConstants<f64> {
    PhysicalConstants::default()
}

fn grid(rc: &RunConfig) -> Vec<f64> {
    linear_grid(rc.scan_min, rc.scan_max, rc.points)
}

pub fn scan_config(rc: &RunConfig) -> Result<(ScanConfig<f64>, Option<VelocityEcho>), EitError> {
    let mut c = ScanConfig::from_intensities(rc.geometry.field(), rc.probe_intensity, rc.pump_intensity)?;
    c.delta_c = rc.pump_detuning;
    c.gamma_transit = rc.gamma_transit;
    c.gamma_ground = rc.gamma_ground;
    let mut echo = None;
    if rc.doppler_average {
        let fwhm = 2.0 * rc.doppler_width;
        c.velocity = VelocityGrid::sinh_mapped(fwhm, rc.velocity_classes, rc.velocity_core)?;
        echo = Some(VelocityEcho {
            classes: rc.velocity_classes,
            fwhm_mhz: fwhm,
            core_mhz: rc.velocity_core,
        });
    }
    Ok((c, echo))
}

pub fn simulate_full(rc: &RunConfig) -> Result<Simulated, EitError> {
    let (cfg, velocity) = scan_config(rc)?;
    let r = probe_scan(&cfg, &grid(rc))?;
    Ok(Simulated {
        spectrum: Spectrum::from_samples(&r.samples)?.with_geometry(echo(rc)),
        diagnostics: Some(r.diagnostics),
        velocity,
        toy: None,
    })
}

pub fn toy_params(rc: &RunConfig) -> Result<ToyParameters<f64>, EitError> {
    let c = constants();
    let g = &rc.geometry;
    let base = ToyParameters::new(
        g.theta_deg.to_radians(),
        g.phi_deg.to_radians(),
        c.spacing_slope() * g.b_mag,
    )?;
    let p = ToyParameters {
        omega_p: rabi_amplitude(rc.probe_intensity, &c)?,
        omega_c: rabi_amplitude(rc.pump_intensity, &c)?,
        delta_c: rc.pump_detuning,
        gamma_gg: rc.gamma_ground,
        w_d: rc.doppler_width,
        ..base
    };
    Ok(p)
}

/// Closed-form amplitudes (iδ term dropped) and the implied θ.
pub fn toy_report(p: &ToyParameters<f64>) -> Result<ToyReport, EitError> {
    let a0 = peak_amplitude_a0(p, DeltaTerm::Dropped)?;
    let a1 = peak_amplitude_a1(p, DeltaTerm::Dropped)?;
    let am1 = peak_amplitude_am1(p, DeltaTerm::Dropped)?;
    // A₀ of order rounding noise counts as extinct
    let scale = a0.abs().max(a1.abs()).max(am1.abs());
    let a0c = if a0.abs() <= 1e-12 * scale { 0.0 } else { a0 };
    let dir = field_direction(a1.max(0.0), a0c.max(0.0), direction_dipole_ratio())?;
    Ok(ToyReport {
        a0: a0c,
        a1,
        am1,
        ratio: (a0c != 0.0).then(|| a1 / a0c),
        theta_implied_deg: dir.theta_deg,
        saturated: dir.saturated,
        omega_p: p.omega_p,
        omega_c: p.omega_c,
        gamma_eg: p.gamma_eg,
        gamma_gg: p.gamma_gg,
        w_d: p.w_d,
    })
}

pub fn simulate_toy(rc: &RunConfig) -> Result<Simulated, EitError> {
    let x = grid(rc);
    let (y, toy) = if rc.probe_intensity == 0.0 {
        (vec![0.0; x.len()], None)
    } else {
        let p = toy_params(rc)?;
        let y = x
            .iter()
            .map(|&d| chi_analytic(d, &p).map(|c| c.im))
            .collect::<Result<Vec<_>, _>>()?;
        (y, Some(toy_report(&p)?))
    };
    Ok(Simulated {
        spectrum: Spectrum::from_absorption(&x, &y, SpectrumSource::Simulated)?.with_geometry(echo(rc)),
        diagnostics: None,
        velocity: None,
        toy,
    })
}

fn echo(rc: &RunConfig) -> zeeman_eit::spectra::GeometryEcho {
    zeeman_eit::spectra::GeometryEcho {
        theta_deg: rc.geometry.theta_deg,
        phi_deg: rc.geometry.phi_deg,
        beta_l: rc.geometry.beta_l,
        beta_t: rc.geometry.beta_t,
    }
}

fn models(kind: ModelKind) -> &'static [(&'static str, PeakMode)] {
    match kind {
        ModelKind::Full => &[("full", PeakMode::Full)],
        ModelKind::Toy => &[("toy", PeakMode::Toy)],
        ModelKind::Both => &[("full", PeakMode::Full), ("toy", PeakMode::Toy)],
    }
}

fn run_model(rc: &RunConfig, name: &str) -> Result<Simulated, CliError> {
    let r = if name == "full" {
        simulate_full(rc)
    } else {
        simulate_toy(rc)
    };
    r.map_err(|e| CliError::core("simulate", e))
}

/// Writes one spectrum with its sidecar (and SVG when asked). Peak analysis
/// failures are recorded in the sidecar, not raised.
fn emit(
    rc: &RunConfig,
    workflow: &'static str,
    model: &'static str,
    mode: PeakMode,
    sim: &Simulated,
    stem: &str,
) -> Result<(Vec<PathBuf>, Option<PeakSet>), CliError> {
    let c = constants();
    let (peaks, analysis_error) = if rc.probe_intensity > 0.0 {
        match analyze(&sim.spectrum, mode, None) {
            Ok(p) => (Some(p), None),
            Err(e) => (None, Some(e.to_string())),
        }
    } else {
        (None, Some("no probe: nothing to analyze".into()))
    };
    let meta = SpectrumMeta {
        tool: "zeeman-eit",
        version: env!("CARGO_PKG_VERSION"),
        workflow,
        model,
        config: rc,
        delta_mhz: c.spacing_slope() * rc.geometry.b_mag,
        constants: (&c).into(),
        probe_rabi_mhz: rabi_amplitude(rc.probe_intensity, &c).unwrap_or(f64::NAN),
        pump_rabi_mhz: rabi_amplitude(rc.pump_intensity, &c).unwrap_or(f64::NAN),
        velocity: sim.velocity.clone(),
        diagnostics: sim.diagnostics,
        toy: sim.toy,
        peaks: peaks.clone(),
        analysis_error,
    };
    let title = format!(
        "{model}: theta {:.1} deg, phi {:.1} deg, |B| {:.3} G",
        rc.geometry.theta_deg, rc.geometry.phi_deg, rc.geometry.b_mag
    );
    let marks = peaks.as_ref().map(|p| p.peaks.clone()).unwrap_or_default();
    let svg = rc.svg.then_some((title.as_str(), marks.as_slice()));
    let paths = emit_spectrum(&rc.out_dir, stem, &sim.spectrum, &meta, svg).map_err(CliError::io)?;
    Ok((paths, peaks))
}

pub fn cmd_simulate(flags: &RunFlags) -> Result<(), CliError> {
    let (rc, _) = RunConfig::resolve(flags).map_err(CliError::Config)?;
    for &(name, mode) in models(rc.model) {
        let sim = run_model(&rc, name)?;
        if let Some(d) = &sim.diagnostics {
            if !d.invariants_hold() {
                eprintln!("warning: density-matrix invariants violated: {d:?}");
            }
        }
        let (paths, _) = emit(&rc, "simulate", name, mode, &sim, &format!("spectrum_{name}"))?;
        for p in paths {
            println!("{}", p.display());
        }
    }
    Ok(())
}

pub fn cmd_toy(flags: &RunFlags) -> Result<(), CliError> {
    let (mut rc, _) = RunConfig::resolve(flags).map_err(CliError::Config)?;
    rc.model = ModelKind::Toy;
    let sim = run_model(&rc, "toy")?;
    let (paths, _) = emit(&rc, "toy", "toy", PeakMode::Toy, &sim, "toy")?;
    for p in paths {
        println!("{}", p.display());
    }
    let report = sim
        .toy
        .ok_or_else(|| CliError::Config(vec!["toy report needs a positive probe intensity".into()]))?;
    let path = rc.out_dir.join("toy_report.json");
    write_json(&path, &report).map_err(CliError::io)?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Debug, Clone, Default, Args)]
pub struct SweepFlags {
    #[command(flatten)]
    pub run: RunFlags,
    /// Swept parameter
    #[arg(long, value_enum)]
    pub param: Option<SweepParam>,
    /// Comma-separated sweep values (deg for angles, G for fields)
    #[arg(long, value_delimiter = ',', allow_negative_numbers = true)]
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default)]
struct SummaryRow {
    value: f64,
    model: &'static str,
    status: String,
    delta: Option<f64>,
    amps: [Option<f64>; 7],
    error: String,
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn summary_row(value: f64, model: &'static str, sim: &Simulated, peaks: Option<&PeakSet>) -> SummaryRow {
    let mut row = SummaryRow {
        value,
        model,
        status: "ok".into(),
        ..SummaryRow::default()
    };
    match (model, &sim.toy) {
        ("toy", Some(t)) => {
            row.amps[3] = Some(t.a0);
            row.amps[4] = Some(t.a1);
            row.amps[2] = Some(t.am1);
        }
        _ => {
            if let Some(set) = peaks {
                for k in -3..=3 {
                    row.amps[(k + 3) as usize] = set.by_index(k).map(|p| p.amplitude);
                }
            }
        }
    }
    row.delta = peaks.and_then(|p| p.spacing_estimate);
    row
}

pub fn cmd_sweep(flags: &SweepFlags) -> Result<(), CliError> {
    let (rc, file) = RunConfig::resolve(&flags.run).map_err(CliError::Config)?;
    let param = flags.param.or(file.sweep.param);
    let values = flags.values.clone().or(file.sweep.values.clone());
    let mut errs = Vec::new();
    if param.is_none() {
        errs.push("sweep: --param (or [sweep] param) is required".to_string());
    }
    match &values {
        Some(v) if !v.is_empty() => {
            if v.iter().any(|x| !x.is_finite()) {
                errs.push("sweep: values must be finite".into());
            }
        }
        _ => errs.push("sweep: the value list must be nonempty".into()),
    }
    if !errs.is_empty() {
        return Err(CliError::Config(errs));
    }
    let (param, values) = (param.expect("checked"), values.expect("checked"));
    let pname = param
        .to_possible_value()
        .map(|v| v.get_name().to_string())
        .unwrap_or_default();

    let mut rows = Vec::new();
    for (i, &v) in values.iter().enumerate() {
        for &(name, mode) in models(rc.model) {
            let failed = |e: String| SummaryRow {
                value: v,
                model: name,
                status: "failed".into(),
                error: e,
                ..SummaryRow::default()
            };
            let geometry = match sweep_geometry(&rc.geometry, param, v) {
                Ok(g) => g,
                Err(e) => {
                    eprintln!("sweep point {i} ({pname} = {v}): {e}");
                    rows.push(failed(e));
                    continue;
                }
            };
            let point = rc.with_geometry(geometry);
            let row = run_model(&point, name).and_then(|sim| {
                let stem = format!("sweep_{pname}_{i:03}_{name}");
                let (_, peaks) = emit(&point, "sweep", name, mode, &sim, &stem)?;
                Ok(summary_row(v, name, &sim, peaks.as_ref()))
            });
            match row {
                Ok(r) => rows.push(r),
                Err(e) => {
                    eprintln!("sweep point {i} ({pname} = {v}): {e}");
                    rows.push(failed(e.to_string()));
                }
            }
        }
    }

    let mut csv = String::from("value,model,status,delta_mhz,a_m3,a_m2,a_m1,a0,a_p1,a_p2,a_p3,error\n");
    for r in &rows {
        let amps: Vec<String> = r.amps.iter().map(|a| fmt_opt(*a)).collect();
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            r.value,
            r.model,
            r.status,
            fmt_opt(r.delta),
            amps.join(","),
            r.error.replace([',', '\n'], ";")
        );
    }
    let path = rc.out_dir.join(format!("sweep_{pname}_summary.csv"));
    write_atomic(&path, csv.as_bytes()).map_err(CliError::io)?;
    println!("{}", path.display());
    let failed = rows.iter().filter(|r| r.status != "ok").count();
    if failed > 0 {
        eprintln!("{failed} of {} sweep points failed", rows.len());
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SignalArg {
    Absorption,
    Transmission,
}

#[derive(Debug, Clone, Args)]
pub struct InvertFlags {
    /// Spectrum CSV (`delta_p_mhz,signal` or `delta_p_mhz,im_chi,transmission`)
    #[arg(long)]
    pub input: PathBuf,
    /// MHz per sample; the first column is then a sample index
    #[arg(long)]
    pub calibration: Option<f64>,
    /// Meaning of a `signal` column
    #[arg(long, value_enum, default_value = "absorption")]
    pub signal: SignalArg,
    /// Comb layout: full (seven peaks) or toy (three peaks)
    #[arg(long, value_enum, default_value = "full")]
    pub model: ModelKind,
    /// Asserted probe polarization angle (deg); θ is only estimated at 0
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub phi: f64,
    /// Peak amplitudes are intensities
    #[arg(long)]
    pub sqrt_intensity: bool,
    /// π-to-σ amplitude ratio below which the spectrum is below threshold
    #[arg(long, default_value_t = 0.1)]
    pub pi_fraction: f64,
    /// Also write `estimate.json` here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct InvertRecord<'a> {
    input: &'a Path,
    phi_asserted_deg: f64,
    mode: PeakMode,
    estimate: MagnetometerEstimate,
    peaks: PeakSet,
}

pub fn cmd_invert(f: &InvertFlags) -> Result<(), CliError> {
    let mut errs = Vec::new();
    if f.model == ModelKind::Both {
        errs.push("invert: --model must be full or toy".to_string());
    }
    if let Some(c) = f.calibration {
        if !(c.is_finite() && c > 0.0) {
            errs.push(format!("invert: calibration = {c} must be positive"));
        }
    }
    if !f.phi.is_finite() {
        errs.push("invert: phi must be finite".into());
    }
    if !(f.pi_fraction.is_finite() && f.pi_fraction >= 0.0) {
        errs.push(format!("invert: pi_fraction = {} must be >= 0", f.pi_fraction));
    }
    if !errs.is_empty() {
        return Err(CliError::Config(errs));
    }
    let file = std::fs::File::open(&f.input).map_err(|e| CliError::Io(format!("{}: {e}", f.input.display())))?;
    let opts = ImportOptions {
        calibration: f.calibration,
        convention: match f.signal {
            SignalArg::Absorption => SignalConvention::Absorption,
            SignalArg::Transmission => SignalConvention::Transmission,
        },
    };
    let spectrum = read_csv::<f64, _>(file, &opts).map_err(|e| CliError::core("import", e))?;
    let mode = if f.model == ModelKind::Toy {
        PeakMode::Toy
    } else {
        PeakMode::Full
    };
    let peaks = analyze(&spectrum, mode, None).map_err(|e| {
        let stage = match e {
            EitError::Baseline(_) => "baseline",
            EitError::Fit { .. } => "fit",
            EitError::Classification { .. } => "classify",
            _ => "analyze",
        };
        CliError::core(stage, e)
    })?;
    let cfg = InversionConfig {
        threshold: ThresholdConfig {
            pi_fraction: f.pi_fraction,
        },
        phi_deg: Some(f.phi),
        sqrt_intensity: f.sqrt_intensity,
    };
    let estimate = invert(&peaks, &constants(), &cfg).map_err(|e| CliError::core("invert", e))?;
    let rec = InvertRecord {
        input: &f.input,
        phi_asserted_deg: f.phi,
        mode,
        estimate,
        peaks,
    };
    let text = serde_json::to_string_pretty(&rec).map_err(|e| CliError::Io(e.to_string()))?;
    {
        use std::io::Write;
        let _ = writeln!(std::io::stdout().lock(), "{text}");
    }
    if let Some(dir) = &f.out {
        write_json(&dir.join("estimate.json"), &rec).map_err(CliError::io)?;
    }
    Ok(())
}
