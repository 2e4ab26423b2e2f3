//! Field reconstruction from a classified peak set: |B| from the comb
//! spacing, θ from the A₊₁/A₀ amplitude ratio, φ diagnostics from the A₀
//! locus.

use serde::{Deserialize, Serialize};

use crate::atomic_structure::{direction_dipole_ratio, PhysicalConstants};
use crate::error::{EitError, Result};
use crate::scalar::Real;
use crate::spectra::{PeakClass, PeakSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InversionMethod {
    /// θ from the A₊₁/A₀ amplitude ratio.
    AmplitudeRatio,
    /// φ from the zeros and maxima of the A₀ locus.
    LocusExtrema,
}

/// `|B| = δ / (μ_B g_F)` with `g_F = 1/2`.
pub fn field_magnitude<T: Real>(delta: T, constants: &PhysicalConstants<T>) -> Result<T> {
    if !(delta.is_finite() && delta > T::zero()) {
        return Err(EitError::invalid("peak spacing must be positive"));
    }
    Ok(delta / constants.spacing_slope())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    pub theta_deg: f64,
    /// The σ peak is extinct and θ sits at its 90° limit.
    pub saturated: bool,
}

/// `θ = atan(√2 · r² · A₁/A₀)` with `r = μ(g₊₁e₀)/μ(g₀e₀)`. Valid for φ = 0.
pub fn field_direction<T: Real>(a1: T, a0: T, dipole_ratio: T) -> Result<Direction> {
    if !(a1.is_finite() && a0.is_finite() && dipole_ratio.is_finite()) {
        return Err(EitError::invalid("amplitudes must be finite"));
    }
    if a1 < T::zero() || a0 < T::zero() {
        return Err(EitError::invalid("peak amplitudes must be nonnegative"));
    }
    if a0 == T::zero() {
        return Ok(Direction {
            theta_deg: 90.0,
            saturated: true,
        });
    }
    let t = (T::SQRT_2() * dipole_ratio * dipole_ratio * a1 / a0).atan();
    Ok(Direction {
        theta_deg: t.to_degrees().to_f64_lossy(),
        saturated: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdConfig {
    /// π peaks weaker than this fraction of the strongest σ peak count as
    /// unobserved.
    pub pi_fraction: f64,
}

impl Default for ThresholdConfig {
    fn default() -> Self {
        Self { pi_fraction: 0.1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub below_threshold: bool,
    pub sigma_peaks: usize,
    pub pi_peaks: usize,
    /// Strongest π over strongest σ amplitude (0 without π peaks).
    pub pi_to_sigma: f64,
}

/// Below threshold: σ peaks are present while the π peaks are missing or
/// weaker than `pi_fraction` of the σ peaks.
pub fn detect_threshold(set: &PeakSet, cfg: &ThresholdConfig) -> ThresholdReport {
    let strongest = |k: PeakClass| {
        set.peaks
            .iter()
            .filter(|p| p.klass == Some(k))
            .fold(0.0f64, |m, p| m.max(p.amplitude))
    };
    let sigma = strongest(PeakClass::Sigma);
    let pi = strongest(PeakClass::Pi);
    let pi_to_sigma = if sigma > 0.0 { pi / sigma } else { f64::INFINITY };
    ThresholdReport {
        below_threshold: sigma > 0.0 && pi_to_sigma < cfg.pi_fraction,
        sigma_peaks: set.count(PeakClass::Sigma),
        pi_peaks: set.count(PeakClass::Pi),
        pi_to_sigma,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InversionConfig {
    pub threshold: ThresholdConfig,
    /// Asserted probe polarization angle (degrees). θ is only estimated
    /// when this is asserted as 0.
    pub phi_deg: Option<f64>,
    /// Amplitudes are intensities; take square roots before the ratio.
    pub sqrt_intensity: bool,
}

impl Default for InversionConfig {
    fn default() -> Self {
        Self {
            threshold: ThresholdConfig::default(),
            phi_deg: Some(0.0),
            sqrt_intensity: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub spacing_mhz: f64,
    /// A₊₁/A₀ (A₊₁ is the mean of the ±1 peaks).
    pub ratio: Option<f64>,
    /// RMS distance of the centers from their comb positions, MHz.
    pub residual: f64,
    pub dipole_ratio: f64,
    pub b_uncertainty_gauss: f64,
    pub pi_to_sigma: f64,
    pub saturated: bool,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagnetometerEstimate {
    pub b_gauss: f64,
    pub theta_deg: Option<f64>,
    pub below_threshold: bool,
    pub method: InversionMethod,
    pub diagnostics: Diagnostics,
}

/// Converts a classified peak set into a field estimate.
pub fn invert(
    set: &PeakSet,
    constants: &PhysicalConstants<f64>,
    cfg: &InversionConfig,
) -> Result<MagnetometerEstimate> {
    let spacing = set
        .spacing_estimate
        .ok_or_else(|| EitError::invalid("peak set has no spacing estimate; classify it first"))?;
    let b = field_magnitude(spacing, constants)?;
    let placed: Vec<(f64, i32)> = set
        .peaks
        .iter()
        .filter_map(|p| p.index.map(|k| (p.center, k)))
        .collect();
    let residual = if placed.is_empty() {
        0.0
    } else {
        (placed
            .iter()
            .map(|(c, k)| (c - *k as f64 * spacing).powi(2))
            .sum::<f64>()
            / placed.len() as f64)
            .sqrt()
    };
    let threshold = detect_threshold(set, &cfg.threshold);
    // the linear law is not trusted below threshold
    let widen = if threshold.below_threshold { 3.0 } else { 1.0 };
    let max_k = placed.iter().map(|(_, k)| k.abs()).max().unwrap_or(1).max(1) as f64;
    let b_uncertainty = widen * residual / max_k / constants.spacing_slope();

    let amp = |k: i32| set.by_index(k).map(|p| p.amplitude);
    let scale = |a: f64| if cfg.sqrt_intensity { a.max(0.0).sqrt() } else { a };
    let a0 = amp(0).map(scale);
    let a1 = match (amp(1), amp(-1)) {
        (Some(p), Some(m)) => Some((scale(p) + scale(m)) / 2.0),
        (Some(a), None) | (None, Some(a)) => Some(scale(a)),
        (None, None) => None,
    };
    let r: f64 = direction_dipole_ratio();
    let ratio = match (a1, a0) {
        (Some(a1), Some(a0)) if a0 > 0.0 => Some(a1 / a0),
        _ => None,
    };
    let mut note = None;
    let mut saturated = false;
    let theta = match cfg.phi_deg {
        Some(phi) if phi.abs() < 1e-9 => {
            let d = match (a1, a0) {
                (a1, Some(a0)) => field_direction(a1.unwrap_or(0.0), a0, r)?,
                (Some(a1), None) => field_direction(a1, 0.0, r)?,
                (None, None) => {
                    return Err(EitError::invalid("neither the A0 nor the A1 peak is present"));
                }
            };
            saturated = d.saturated;
            Some(d.theta_deg)
        }
        Some(phi) => {
            note = Some(format!(
                "theta withheld: the ratio law holds for phi = 0, asserted phi = {phi} deg"
            ));
            None
        }
        None => {
            note = Some("theta withheld: phi not asserted".to_string());
            None
        }
    };
    Ok(MagnetometerEstimate {
        b_gauss: b,
        theta_deg: theta,
        below_threshold: threshold.below_threshold,
        method: InversionMethod::AmplitudeRatio,
        diagnostics: Diagnostics {
            spacing_mhz: spacing,
            ratio,
            residual,
            dipole_ratio: r,
            b_uncertainty_gauss: b_uncertainty,
            pi_to_sigma: threshold.pi_to_sigma,
            saturated,
            note,
        },
    })
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhiExtrema {
    pub zeros: Vec<f64>,
    pub maxima: Vec<f64>,
    pub minima: Vec<f64>,
}

/// Zeros and interior extrema of an A₀(φ) locus (degrees), refined by
/// quadratic interpolation. Needs at least [0°, 180°] at ≤ 5° spacing.
pub fn phi_extrema(locus: &[(f64, f64)]) -> Result<PhiExtrema> {
    if locus.len() < 3 {
        return Err(EitError::Resolution("need at least three locus points".into()));
    }
    if locus.iter().any(|(p, a)| !(p.is_finite() && a.is_finite())) {
        return Err(EitError::invalid("locus values must be finite"));
    }
    if locus.windows(2).any(|w| !(w[1].0 > w[0].0)) {
        return Err(EitError::invalid("locus angles must be strictly increasing"));
    }
    let widest = locus.windows(2).map(|w| w[1].0 - w[0].0).fold(0.0, f64::max);
    if widest > 5.0 + 1e-9 {
        return Err(EitError::Resolution(format!(
            "locus spacing {widest:.3} deg exceeds 5 deg"
        )));
    }
    if locus[locus.len() - 1].0 - locus[0].0 < 180.0 - 1e-9 {
        return Err(EitError::Resolution("locus must cover at least 180 deg".into()));
    }
    let phi: Vec<f64> = locus.iter().map(|p| p.0).collect();
    let a: Vec<f64> = locus.iter().map(|p| p.1).collect();
    let top = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let mut out = PhiExtrema::default();
    if top == 0.0 {
        return Ok(out);
    }
    let tiny = 1e-3 * top;
    let n = a.len();
    let vertex = |i: usize| -> f64 {
        let (y0, y1, y2) = (a[i - 1], a[i], a[i + 1]);
        let (h0, h1) = (phi[i] - phi[i - 1], phi[i + 1] - phi[i]);
        // parabola through three possibly uneven points
        let d1 = (y1 - y0) / h0;
        let d2 = (y2 - y1) / h1;
        let c = (d2 - d1) / (h0 + h1);
        if c == 0.0 {
            return phi[i];
        }
        let b = d1 - c * h0;
        let shift = -b / (2.0 * c);
        (phi[i - 1] + shift).clamp(phi[i - 1], phi[i + 1])
    };
    for i in 0..n {
        if a[i].abs() <= 1e-12 * top {
            out.zeros.push(phi[i]);
        } else if i + 1 < n && a[i] * a[i + 1] < 0.0 && a[i + 1].abs() > 1e-12 * top {
            out.zeros
                .push(phi[i] + (phi[i + 1] - phi[i]) * a[i] / (a[i] - a[i + 1]));
        } else if i > 0
            && i + 1 < n
            && a[i].abs() < tiny
            && a[i].abs() <= a[i - 1].abs()
            && a[i].abs() <= a[i + 1].abs()
            && a[i - 1] * a[i + 1] > 0.0
        {
            out.zeros.push(vertex(i));
        }
    }
    for i in 1..n.saturating_sub(1) {
        if a[i].abs() < tiny {
            continue;
        }
        if a[i] > a[i - 1] && a[i] >= a[i + 1] {
            out.maxima.push(vertex(i));
        } else if a[i] < a[i - 1] && a[i] <= a[i + 1] {
            out.minima.push(vertex(i));
        }
    }
    out.zeros.dedup_by(|x, y| (*x - *y).abs() < 1e-9);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectra::Peak;
    use approx::assert_abs_diff_eq;

    fn peak(center: f64, amplitude: f64, index: i32) -> Peak {
        Peak {
            center,
            amplitude,
            width: 0.3,
            index: Some(index),
            klass: Some(PeakClass::from_index(index)),
        }
    }

    fn set(peaks: Vec<Peak>, spacing: f64) -> PeakSet {
        PeakSet {
            peaks,
            spacing_estimate: Some(spacing),
            fit_residual: 0.0,
            rejected: vec![],
        }
    }

    #[test]
    fn magnitude_examples() {
        let c = PhysicalConstants::default();
        let b: f64 = field_magnitude(4.17, &c).unwrap();
        assert!((b - 6.004).abs() / 6.004 < 0.01, "{b}");
        assert_abs_diff_eq!(field_magnitude(8.34, &c).unwrap(), 2.0 * b, epsilon = 1e-12);
        assert!(field_magnitude(0.0, &c).is_err());
    }

    #[test]
    fn direction_examples() {
        let r = 0.5;
        assert_eq!(field_direction(0.0, 1.0, r).unwrap().theta_deg, 0.0);
        let a1 = std::f64::consts::FRAC_1_SQRT_2 * (1.0f64 / r).powi(2);
        assert_abs_diff_eq!(field_direction(a1, 1.0, r).unwrap().theta_deg, 45.0, epsilon = 1e-12);
        let d = field_direction(1.0, 0.0, r).unwrap();
        assert!(d.saturated && d.theta_deg == 90.0);
        assert!(field_direction(-1.0, 1.0, r).is_err());
    }

    #[test]
    fn threshold_rule() {
        let seven = set((-3..=3).map(|k| peak(k as f64 * 4.2, 1.0, k)).collect(), 4.2);
        assert!(!detect_threshold(&seven, &ThresholdConfig::default()).below_threshold);
        let sigma = set(vec![peak(-6.0, 1.0, -2), peak(0.0, 1.2, 0), peak(6.0, 1.0, 2)], 3.0);
        let r = detect_threshold(&sigma, &ThresholdConfig::default());
        assert!(r.below_threshold && r.pi_peaks == 0);
        let weak = set(vec![peak(-3.0, 0.05, -1), peak(0.0, 1.0, 0), peak(3.0, 0.05, 1)], 3.0);
        assert!(detect_threshold(&weak, &ThresholdConfig::default()).below_threshold);
    }

    #[test]
    fn invert_sigma_only() {
        let s = set(vec![peak(-6.0, 1.0, -2), peak(0.0, 1.2, 0), peak(6.0, 1.0, 2)], 3.0);
        let e = invert(&s, &PhysicalConstants::default(), &InversionConfig::default()).unwrap();
        assert_eq!(e.theta_deg, Some(0.0));
        assert!(e.below_threshold);
        assert_abs_diff_eq!(e.b_gauss, 3.0 / 0.6998, epsilon = 1e-12);
    }

    #[test]
    fn invert_withholds_theta_off_axis() {
        let s = set((-3..=3).map(|k| peak(k as f64 * 4.2, 1.0, k)).collect(), 4.2);
        let cfg = InversionConfig {
            phi_deg: Some(40.0),
            ..InversionConfig::default()
        };
        let e = invert(&s, &PhysicalConstants::default(), &cfg).unwrap();
        assert!(e.theta_deg.is_none() && e.diagnostics.note.is_some());
        assert_abs_diff_eq!(e.diagnostics.ratio.unwrap(), 1.0, epsilon = 1e-12);
        let json = serde_json::to_value(&e).unwrap();
        assert_eq!(json["method"], "amplitude_ratio");
        for key in ["spacing_mhz", "ratio", "residual"] {
            assert!(json["diagnostics"].get(key).is_some(), "{key}");
        }
    }

    #[test]
    fn extrema_of_sin_cos_squared() {
        let locus: Vec<(f64, f64)> = (0..=180)
            .map(|d| {
                (
                    d as f64,
                    (d as f64).to_radians().sin() * (d as f64).to_radians().cos().powi(2),
                )
            })
            .collect();
        let e = phi_extrema(&locus).unwrap();
        assert_eq!(e.zeros.len(), 3);
        for (z, want) in e.zeros.iter().zip([0.0, 90.0, 180.0]) {
            assert_abs_diff_eq!(*z, want, epsilon = 1e-6);
        }
        // sinφcos²φ peaks where tan²φ = 1/2
        let want = (0.5f64).sqrt().atan().to_degrees();
        assert_eq!(e.maxima.len(), 2);
        assert_abs_diff_eq!(e.maxima[0], want, epsilon = 0.05);
        assert_abs_diff_eq!(e.maxima[1], 180.0 - want, epsilon = 0.05);
    }

    #[test]
    fn extrema_edge_cases() {
        let flat: Vec<(f64, f64)> = (0..=36).map(|k| (5.0 * k as f64, 0.0)).collect();
        assert_eq!(phi_extrema(&flat).unwrap(), PhiExtrema::default());
        let flat: Vec<(f64, f64)> = (0..=36).map(|k| (5.0 * k as f64, 2.0)).collect();
        assert_eq!(phi_extrema(&flat).unwrap(), PhiExtrema::default());
        let sparse: Vec<(f64, f64)> = (0..=18).map(|k| (10.0 * k as f64, 1.0)).collect();
        assert!(matches!(phi_extrema(&sparse), Err(EitError::Resolution(_))));
        let short: Vec<(f64, f64)> = (0..=18).map(|k| (5.0 * k as f64, 1.0)).collect();
        assert!(matches!(phi_extrema(&short), Err(EitError::Resolution(_))));
    }
}
