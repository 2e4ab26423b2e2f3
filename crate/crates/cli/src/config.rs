//! Run configuration: TOML file sections, command-line overrides and
//! validation.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use zeeman_eit::field_geometry::{geometry_from_fields, FieldGeometry};
use zeeman_eit::toy_model::doppler_half_width;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum, Default)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    #[default]
    Full,
    Toy,
    Both,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Theta,
    Phi,
    BetaT,
    BMag,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeometrySection {
    pub beta_l: Option<f64>,
    pub beta_t: Option<f64>,
    pub theta_deg: Option<f64>,
    pub b_mag: Option<f64>,
    pub phi_deg: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BeamSection {
    pub pump_intensity: Option<f64>,
    pub probe_intensity: Option<f64>,
    pub pump_detuning: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScanSection {
    pub min: Option<f64>,
    pub max: Option<f64>,
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub kind: Option<ModelKind>,
    pub doppler_average: Option<bool>,
    pub velocity_classes: Option<usize>,
    pub velocity_core: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateSection {
    pub gamma_transit: Option<f64>,
    pub gamma_ground: Option<f64>,
    /// Doppler half width W_D (MHz).
    pub doppler_width: Option<f64>,
    pub temperature: Option<f64>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub svg: Option<bool>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    pub param: Option<SweepParam>,
    pub values: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub geometry: GeometrySection,
    pub beams: BeamSection,
    pub scan: ScanSection,
    pub model: ModelSection,
    pub rates: RateSection,
    pub output: OutputSection,
    pub sweep: SweepSection,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, Vec<String>> {
        let text = std::fs::read_to_string(path).map_err(|e| vec![format!("{}: {e}", path.display())])?;
        toml::from_str(&text).map_err(|e| vec![format!("{}: {e}", path.display())])
    }
}

/// Flags shared by the simulation workflows. Every flag overrides its file
/// counterpart.
#[derive(Debug, Clone, Default, Args)]
pub struct RunFlags {
    /// TOML run configuration
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Longitudinal field (G)
    #[arg(long, allow_negative_numbers = true)]
    pub beta_l: Option<f64>,
    /// Transverse field (G)
    #[arg(long, allow_negative_numbers = true)]
    pub beta_t: Option<f64>,
    /// Polarization angle (deg)
    #[arg(long, allow_negative_numbers = true)]
    pub phi: Option<f64>,
    /// Field polar angle (deg), with --b-mag
    #[arg(long, allow_negative_numbers = true)]
    pub theta: Option<f64>,
    /// Field magnitude (G), with --theta
    #[arg(long, allow_negative_numbers = true)]
    pub b_mag: Option<f64>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Scan start (MHz)
    #[arg(long, allow_negative_numbers = true)]
    pub scan_min: Option<f64>,
    /// Scan end (MHz)
    #[arg(long, allow_negative_numbers = true)]
    pub scan_max: Option<f64>,
    /// Scan points
    #[arg(long)]
    pub points: Option<usize>,
    /// Pump intensity (mW/cm²)
    #[arg(long, allow_negative_numbers = true)]
    pub pump_intensity: Option<f64>,
    /// Probe intensity (mW/cm²)
    #[arg(long, allow_negative_numbers = true)]
    pub probe_intensity: Option<f64>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also render SVG plots
    #[arg(long)]
    pub svg: bool,
    /// Average the full model over the Doppler distribution (true|false)
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub doppler_average: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ResolvedGeometry {
    pub beta_l: f64,
    pub beta_t: f64,
    pub theta_deg: f64,
    pub b_mag: f64,
    pub phi_deg: f64,
}

impl ResolvedGeometry {
    pub fn field(&self) -> FieldGeometry<f64> {
        FieldGeometry::from_polar(self.b_mag, self.theta_deg.to_radians(), self.phi_deg.to_radians())
            .expect("validated geometry")
    }
}

/// Fully resolved run parameters; serialized verbatim into every sidecar.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub geometry: ResolvedGeometry,
    pub pump_intensity: f64,
    pub probe_intensity: f64,
    pub pump_detuning: f64,
    pub scan_min: f64,
    pub scan_max: f64,
    pub points: usize,
    pub model: ModelKind,
    pub doppler_average: bool,
    pub velocity_classes: usize,
    pub velocity_core: f64,
    pub gamma_transit: f64,
    pub gamma_ground: f64,
    pub doppler_width: f64,
    pub temperature: f64,
    pub out_dir: PathBuf,
    pub svg: bool,
}

pub const DEFAULT_BETA_L: f64 = 4.26;
pub const DEFAULT_BETA_T: f64 = 4.23;
pub const DEFAULT_PHI_DEG: f64 = 40.0;

impl RunConfig {
    /// Merges file and flags (flags win) and validates. All problems are
    /// collected before returning.
    pub fn resolve(flags: &RunFlags) -> Result<(Self, FileConfig), Vec<String>> {
        let file = match &flags.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let mut errs = Vec::new();
        let g = &file.geometry;

        let flag_fields = flags.beta_l.is_some() || flags.beta_t.is_some();
        let flag_polar = flags.theta.is_some() || flags.b_mag.is_some();
        if flag_fields && flag_polar {
            errs.push("give either --beta-l/--beta-t or --theta/--b-mag, not both".to_string());
        }
        // a flag family replaces the file's geometry family entirely
        let (bl, bt, th, bm) = if flag_fields {
            (flags.beta_l, flags.beta_t, None, None)
        } else if flag_polar {
            (None, None, flags.theta, flags.b_mag)
        } else {
            (g.beta_l, g.beta_t, g.theta_deg, g.b_mag)
        };
        let phi_deg = flags.phi.or(g.phi_deg).unwrap_or(DEFAULT_PHI_DEG);
        if !phi_deg.is_finite() {
            errs.push("phi must be finite".into());
        }
        let fields = bl.is_some() || bt.is_some();
        let polar = th.is_some() || bm.is_some();
        let geometry = match (fields, polar) {
            (true, true) => {
                errs.push("geometry: exactly one of (beta_l, beta_t) or (theta_deg, b_mag) may be given".into());
                None
            }
            (false, true) => match (th, bm) {
                (Some(t), Some(b)) => {
                    if !(0.0..=90.0).contains(&t) {
                        errs.push(format!("theta = {t} deg outside [0, 90]"));
                    }
                    if !(b.is_finite() && b > 0.0) {
                        errs.push(format!("b_mag = {b} G must be positive"));
                    }
                    let r = t.to_radians();
                    Some(ResolvedGeometry {
                        beta_l: b * r.cos(),
                        beta_t: b * r.sin(),
                        theta_deg: t,
                        b_mag: b,
                        phi_deg,
                    })
                }
                _ => {
                    errs.push("geometry: theta_deg and b_mag must be given together".into());
                    None
                }
            },
            (true, false) => {
                let (l, t) = (bl.unwrap_or(0.0), bt.unwrap_or(0.0));
                match geometry_from_fields(l, t, phi_deg.to_radians()) {
                    Ok(fg) if l >= 0.0 && t >= 0.0 => Some(ResolvedGeometry {
                        beta_l: l,
                        beta_t: t,
                        theta_deg: fg.theta.to_degrees(),
                        b_mag: fg.b_mag,
                        phi_deg,
                    }),
                    Ok(_) => {
                        errs.push(format!("beta_l = {l} and beta_t = {t} must be nonnegative"));
                        None
                    }
                    Err(e) => {
                        errs.push(format!("geometry: {e}"));
                        None
                    }
                }
            }
            (false, false) => Some(ResolvedGeometry {
                beta_l: DEFAULT_BETA_L,
                beta_t: DEFAULT_BETA_T,
                theta_deg: DEFAULT_BETA_T.atan2(DEFAULT_BETA_L).to_degrees(),
                b_mag: DEFAULT_BETA_L.hypot(DEFAULT_BETA_T),
                phi_deg,
            }),
        };

        let pump = flags.pump_intensity.or(file.beams.pump_intensity).unwrap_or(17.5);
        let probe = flags.probe_intensity.or(file.beams.probe_intensity).unwrap_or(0.1);
        for (name, v) in [("pump_intensity", pump), ("probe_intensity", probe)] {
            if !(v.is_finite() && v >= 0.0) {
                errs.push(format!("{name} = {v} must be finite and >= 0"));
            }
        }
        let pump_detuning = file.beams.pump_detuning.unwrap_or(0.0);
        if !pump_detuning.is_finite() {
            errs.push("pump_detuning must be finite".into());
        }

        let scan_min = flags.scan_min.or(file.scan.min).unwrap_or(-20.0);
        let scan_max = flags.scan_max.or(file.scan.max).unwrap_or(20.0);
        let points = flags.points.or(file.scan.points).unwrap_or(801);
        if !(scan_min.is_finite() && scan_max.is_finite() && scan_min < scan_max) {
            errs.push(format!(
                "scan range [{scan_min}, {scan_max}] must be finite and increasing"
            ));
        }
        if points < 50 {
            errs.push(format!("scan points = {points} must be >= 50"));
        }

        let model = flags.model.or(file.model.kind).unwrap_or_default();
        let doppler_average = flags.doppler_average.or(file.model.doppler_average).unwrap_or(true);
        let velocity_classes = file.model.velocity_classes.unwrap_or(61);
        if velocity_classes < 3 || velocity_classes % 2 == 0 {
            errs.push(format!("velocity_classes = {velocity_classes} must be odd and >= 3"));
        }
        let velocity_core = file.model.velocity_core.unwrap_or(4.0);
        if !(velocity_core.is_finite() && velocity_core > 0.0) {
            errs.push(format!("velocity_core = {velocity_core} must be positive"));
        }

        let gamma_transit = file.rates.gamma_transit.unwrap_or(0.01);
        let gamma_ground = file.rates.gamma_ground.unwrap_or(0.03);
        let temperature = file.rates.temperature.unwrap_or(294.0);
        for (name, v) in [
            ("gamma_transit", gamma_transit),
            ("gamma_ground", gamma_ground),
            ("temperature", temperature),
        ] {
            if !(v.is_finite() && v > 0.0) {
                errs.push(format!("{name} = {v} must be positive"));
            }
        }
        if gamma_ground < gamma_transit {
            errs.push(format!(
                "gamma_ground = {gamma_ground} must be at least gamma_transit = {gamma_transit}"
            ));
        }
        let doppler_width = match file.rates.doppler_width {
            Some(w) => w,
            None => doppler_half_width(temperature).unwrap_or(f64::NAN),
        };
        if !(doppler_width.is_finite() && doppler_width > 0.0) {
            errs.push(format!("doppler_width = {doppler_width} must be positive"));
        }

        let out_dir = flags
            .out
            .clone()
            .or(file.output.dir.clone())
            .unwrap_or_else(|| PathBuf::from("."));
        let svg = flags.svg || file.output.svg.unwrap_or(false);

        match geometry {
            Some(geometry) if errs.is_empty() => Ok((
                Self {
                    geometry,
                    pump_intensity: pump,
                    probe_intensity: probe,
                    pump_detuning,
                    scan_min,
                    scan_max,
                    points,
                    model,
                    doppler_average,
                    velocity_classes,
                    velocity_core,
                    gamma_transit,
                    gamma_ground,
                    doppler_width,
                    temperature,
                    out_dir,
                    svg,
                },
                file,
            )),
            _ => Err(errs),
        }
    }

    /// Same run at another geometry.
    pub fn with_geometry(&self, geometry: ResolvedGeometry) -> Self {
        Self {
            geometry,
            ..self.clone()
        }
    }
}

/// Geometry for one sweep point, derived from the base geometry.
pub fn sweep_geometry(base: &ResolvedGeometry, param: SweepParam, value: f64) -> Result<ResolvedGeometry, String> {
    let polar = |theta_deg: f64, b_mag: f64, phi_deg: f64| {
        if !(0.0..=90.0).contains(&theta_deg) {
            return Err(format!("theta = {theta_deg} deg outside [0, 90]"));
        }
        if !(b_mag.is_finite() && b_mag > 0.0) {
            return Err(format!("b_mag = {b_mag} G must be positive"));
        }
        let r = theta_deg.to_radians();
        Ok(ResolvedGeometry {
            beta_l: b_mag * r.cos(),
            beta_t: b_mag * r.sin(),
            theta_deg,
            b_mag,
            phi_deg,
        })
    };
    match param {
        SweepParam::Theta => polar(value, base.b_mag, base.phi_deg),
        SweepParam::Phi => polar(base.theta_deg, base.b_mag, value),
        SweepParam::BMag => polar(base.theta_deg, value, base.phi_deg),
        SweepParam::BetaT => {
            let fg = geometry_from_fields(base.beta_l, value, base.phi_deg.to_radians()).map_err(|e| e.to_string())?;
            if value < 0.0 {
                return Err(format!("beta_t = {value} must be nonnegative"));
            }
            Ok(ResolvedGeometry {
                beta_l: base.beta_l,
                beta_t: value,
                theta_deg: fg.theta.to_degrees(),
                b_mag: fg.b_mag,
                phi_deg: base.phi_deg,
            })
        }
    }
}
