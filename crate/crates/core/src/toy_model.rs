//! Nine-level analytic model: six Λ-subsystems sharing the probe ground
//! manifold, averaged over a Lorentzian velocity distribution in closed form.
//!
//! All ground populations sit in the probe manifold (1/3 each), so every
//! subsystem contributes `i/6 · μΩ / (γ + iΔ₁ + |Ω_c|² / 4(γ_gg′ + iΔ₂))` to
//! the coherence sum.

use num_complex::Complex;
use num_traits::Zero;

use crate::atomic_structure::{build_level_scheme, DipoleTable, Manifold, PhysicalConstants};
use crate::error::{EitError, Result};
use crate::quadrature::{integrate, QuadratureOptions};
use crate::scalar::Real;

/// √(π ln 2): peak ratio of a Gaussian to a Lorentzian of equal FWHM.
pub fn lambda0<T: Real>() -> T {
    T::lit((std::f64::consts::PI * std::f64::consts::LN_2).sqrt())
}

const BOLTZMANN: f64 = 1.380_649e-23;
const ATOMIC_MASS: f64 = 1.660_539_066_60e-27;
/// ⁸⁷Rb mass in atomic mass units.
pub const RB87_MASS_AMU: f64 = 86.909_180_527;
/// D₂ vacuum wavelength in nm.
pub const D2_WAVELENGTH_NM: f64 = 780.241_209_686;

/// Doppler half-width `W_D = √(ln 2)·u/λ` in MHz, with `u` the most probable
/// speed at `temperature` kelvin.
pub fn doppler_half_width<T: Real>(temperature: T) -> Result<T> {
    if !(temperature.is_finite() && temperature > T::zero()) {
        return Err(EitError::invalid("temperature must be positive"));
    }
    let u = (2.0 * BOLTZMANN * temperature.to_f64_lossy() / (RB87_MASS_AMU * ATOMIC_MASS)).sqrt();
    let hz = std::f64::consts::LN_2.sqrt() * u / (D2_WAVELENGTH_NM * 1e-9);
    Ok(T::lit(hz * 1e-6))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianVelocityDist<T> {
    pub w_d: T,
    pub n0: T,
}

impl<T: Real> LorentzianVelocityDist<T> {
    pub fn new(w_d: T, n0: T) -> Result<Self> {
        if !(w_d.is_finite() && w_d > T::zero()) {
            return Err(EitError::invalid("Doppler half-width must be positive"));
        }
        Ok(Self { w_d, n0 })
    }

    pub fn lambda0(&self) -> T {
        lambda0()
    }

    /// `N₀Λ₀ (W_D/π) / (W_D² + (kv)²)`
    pub fn density(&self, kv: T) -> T {
        self.n0 * lambda0::<T>() * self.w_d / T::PI() / (self.w_d * self.w_d + kv * kv)
    }
}

/// Velocity weight used by [`chi_quadrature`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum VelocityWeight {
    /// The Lorentzian of the closed form.
    #[default]
    Lorentzian,
    /// Maxwell–Boltzmann Gaussian with the same FWHM and peak height.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyParameters<T> {
    pub theta: T,
    pub phi: T,
    /// Zeeman spacing δ (MHz).
    pub delta: T,
    /// Probe field scale E_p (MHz).
    pub omega_p: T,
    /// Pump field scale E_c (MHz).
    pub omega_c: T,
    pub delta_c: T,
    pub gamma_eg: T,
    pub gamma_gg: T,
    pub w_d: T,
    pub n0: T,
}

impl<T: Real> ToyParameters<T> {
    /// Room-temperature defaults with the given angles and spacing.
    pub fn new(theta: T, phi: T, delta: T) -> Result<Self> {
        let c = PhysicalConstants::<T>::default();
        let p = Self {
            theta,
            phi,
            delta,
            omega_p: crate::liouville::rabi_amplitude(T::lit(0.1), &c)?,
            omega_c: crate::liouville::rabi_amplitude(T::lit(17.5), &c)?,
            delta_c: T::zero(),
            gamma_eg: c.gamma / T::lit(6.0),
            gamma_gg: T::lit(0.03),
            w_d: doppler_half_width(T::lit(294.0))?,
            n0: T::one(),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.theta,
            self.phi,
            self.delta,
            self.omega_p,
            self.omega_c,
            self.delta_c,
            self.n0,
        ]
        .iter()
        .all(|v| v.is_finite());
        if !finite {
            return Err(EitError::invalid("toy parameters must be finite"));
        }
        if !(self.gamma_eg > T::zero() && self.gamma_gg > T::zero() && self.w_d > T::zero()) {
            return Err(EitError::invalid("toy rates and Doppler width must be positive"));
        }
        if !(self.omega_p > T::zero()) || self.omega_c < T::zero() {
            return Err(EitError::invalid(
                "probe scale must be positive and pump scale nonnegative",
            ));
        }
        Ok(())
    }

    /// `N₀Λ₀ / 6E_p`
    pub fn prefactor(&self) -> T {
        self.n0 * lambda0::<T>() / (T::lit(6.0) * self.omega_p)
    }

    pub fn velocity(&self) -> LorentzianVelocityDist<T> {
        LorentzianVelocityDist {
            w_d: self.w_d,
            n0: self.n0,
        }
    }
}

/// Dipole magnitudes entering the toy model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyDipoles<T> {
    /// |μ(g±1 ↔ e0)|, probe σ
    pub g1_e0: T,
    /// |μ(g0 ↔ e0)|, probe π
    pub g0_e0: T,
    /// |μ(g0 ↔ e∓1)|, probe σ
    pub g0_e1: T,
    /// |μ(g′∓1 ↔ e0)|, pump σ
    pub gp1_e0: T,
    /// |μ(g′∓1 ↔ e∓1)|, pump π
    pub gp1_e1: T,
}

impl<T: Real> ToyDipoles<T> {
    pub fn rb87() -> Self {
        let scheme = build_level_scheme();
        let table = DipoleTable::<T>::build(&scheme);
        let mu = |g: Manifold, mg: i32, me: i32| {
            let e = scheme.index(Manifold::ExcitedF2, me).expect("excited sublevel");
            let g = scheme.index(g, mg).expect("ground sublevel");
            table.amplitude(e, g).abs()
        };
        Self {
            g1_e0: mu(Manifold::GroundF1, 1, 0),
            g0_e0: mu(Manifold::GroundF1, 0, 0),
            g0_e1: mu(Manifold::GroundF1, 0, -1),
            gp1_e0: mu(Manifold::GroundF2, -1, 0),
            gp1_e1: mu(Manifold::GroundF2, -1, -1),
        }
    }
}

/// Squared Rabi frequencies (MHz²) of the five distinct toy transitions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyRabiSet<T> {
    /// |Ω(g±1, e0)|²
    pub probe_sigma_e0: T,
    /// |Ω(g0, e0)|²
    pub probe_pi_e0: T,
    /// |Ω(g0, e∓1)|²
    pub probe_sigma_e1: T,
    /// |Ω(g′∓1, e0)|²
    pub pump_sigma_e0: T,
    /// |Ω(g′∓1, e∓1)|²
    pub pump_pi_e1: T,
}

/// Squared Rabi frequencies from the spherical decomposition of both beams.
pub fn toy_rabi_set<T: Real>(params: &ToyParameters<T>) -> ToyRabiSet<T> {
    toy_rabi_set_with(params, &ToyDipoles::rb87())
}

pub fn toy_rabi_set_with<T: Real>(p: &ToyParameters<T>, mu: &ToyDipoles<T>) -> ToyRabiSet<T> {
    let (sp, cp) = p.phi.sin_cos();
    let (st, ct) = p.theta.sin_cos();
    let half = T::lit(0.5);
    let probe_sigma = (sp * sp + cp * cp * ct * ct) * half;
    let probe_pi = cp * cp * st * st;
    let pump_sigma = (cp * cp + sp * sp * ct * ct) * half;
    let pump_pi = sp * sp * st * st;
    let ep2 = p.omega_p * p.omega_p;
    let ec2 = p.omega_c * p.omega_c;
    ToyRabiSet {
        probe_sigma_e0: mu.g1_e0 * mu.g1_e0 * ep2 * probe_sigma,
        probe_pi_e0: mu.g0_e0 * mu.g0_e0 * ep2 * probe_pi,
        probe_sigma_e1: mu.g0_e1 * mu.g0_e1 * ep2 * probe_sigma,
        pump_sigma_e0: mu.gp1_e0 * mu.gp1_e0 * ec2 * pump_sigma,
        pump_pi_e1: mu.gp1_e1 * mu.gp1_e1 * ec2 * pump_pi,
    }
}

/// Peak the subsystem feeds: A₀, A₊₁ or A₋₁.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ToyPeak {
    A0,
    APlus1,
    AMinus1,
}

impl ToyPeak {
    /// Two-photon resonance in units of δ.
    pub fn offset(self) -> i32 {
        match self {
            ToyPeak::A0 => 0,
            ToyPeak::APlus1 => 1,
            ToyPeak::AMinus1 => -1,
        }
    }
}

/// One Λ: pump ground `g′_{pump_m}` → `e_{excited_m}` → probe ground `g_{probe_m}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LambdaSubsystem {
    pub pump_m: i32,
    pub excited_m: i32,
    pub probe_m: i32,
    pub peak: ToyPeak,
}

/// The nine sublevels: g′±1, g−1, g0, g+1, e−1, e0, e+1 and one inert level.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyScheme {
    pub subsystems: [LambdaSubsystem; 6],
    pub level_count: usize,
}

impl Default for ToyScheme {
    fn default() -> Self {
        let l = |pump_m, excited_m, probe_m, peak| LambdaSubsystem {
            pump_m,
            excited_m,
            probe_m,
            peak,
        };
        Self {
            subsystems: [
                l(-1, 0, 1, ToyPeak::A0),
                l(1, 0, -1, ToyPeak::A0),
                l(-1, 0, 0, ToyPeak::APlus1),
                l(-1, -1, 0, ToyPeak::APlus1),
                l(1, 0, 0, ToyPeak::AMinus1),
                l(1, 1, 0, ToyPeak::AMinus1),
            ],
            level_count: 9,
        }
    }
}

struct Branch<T> {
    /// μ·|Ω| of the probe leg
    strength: T,
    /// |Ω_c|² of the pump leg
    pump: T,
    probe_m: i32,
    offset: i32,
}

fn branches<T: Real>(p: &ToyParameters<T>) -> Vec<Branch<T>> {
    let mu = ToyDipoles::rb87();
    let r = toy_rabi_set_with(p, &mu);
    ToyScheme::default()
        .subsystems
        .iter()
        .map(|s| {
            let (mu_p, omega_p2) = match (s.probe_m, s.excited_m) {
                (0, 0) => (mu.g0_e0, r.probe_pi_e0),
                (0, _) => (mu.g0_e1, r.probe_sigma_e1),
                _ => (mu.g1_e0, r.probe_sigma_e0),
            };
            let pump = if s.excited_m == 0 {
                r.pump_sigma_e0
            } else {
                r.pump_pi_e1
            };
            Branch {
                strength: mu_p * omega_p2.sqrt(),
                pump,
                probe_m: s.probe_m,
                offset: s.peak.offset(),
            }
        })
        .collect()
}

/// Single-velocity-class coherence sum `Σ μΩ / (γ + iΔ₁ + |Ω_c|²/4(γ_gg + iΔ₂))`
/// with the Doppler shift already folded into `gamma` and `shift`.
fn subsystem_sum<T: Real>(p: &ToyParameters<T>, bs: &[Branch<T>], delta_p: T, gamma: Complex<T>, kv: T) -> Complex<T> {
    bs.iter()
        .map(|b| {
            let d1 = delta_p + T::lit(b.probe_m as f64) * p.delta + kv;
            let d2 = delta_p - p.delta_c - T::lit(b.offset as f64) * p.delta;
            let eit = Complex::new(b.pump, T::zero()) / (Complex::new(p.gamma_gg, d2) * T::lit(4.0));
            Complex::new(b.strength, T::zero()) / (gamma + Complex::new(T::zero(), d1) + eit)
        })
        .fold(Complex::zero(), |a, x| a + x)
}

/// Closed-form Doppler-averaged susceptibility (only the `kv = −iW_D` pole of
/// the Lorentzian contributes).
pub fn chi_analytic<T: Real>(delta_p: T, params: &ToyParameters<T>) -> Result<Complex<T>> {
    params.validate()?;
    let bs = branches(params);
    let gamma = Complex::new(params.gamma_eg + params.w_d, T::zero());
    let s = subsystem_sum(params, &bs, delta_p, gamma, T::zero());
    Ok(Complex::new(T::zero(), params.prefactor()) * s)
}

/// Direct numerical velocity average, over `|kv| ≤ 8W_D` for the Gaussian
/// and `|kv| ≤ 400W_D` for the Lorentzian.
pub fn chi_quadrature<T: Real>(delta_p: T, params: &ToyParameters<T>, weight: VelocityWeight) -> Result<Complex<T>> {
    params.validate()?;
    let bs = branches(params);
    let gamma = Complex::new(params.gamma_eg, T::zero());
    let w = params.w_d;
    let lorentz = params.velocity();
    let ln2 = T::LN_2();
    let density = move |kv: T| match weight {
        VelocityWeight::Lorentzian => lorentz.density(kv),
        VelocityWeight::Gaussian => params.n0 * (ln2 / T::PI()).sqrt() / w * (-ln2 * kv * kv / (w * w)).exp(),
    };
    // scale for the absolute tolerance: the magnitude of the one-photon line
    let peak = bs.iter().map(|b| b.strength).fold(T::zero(), |a, x| a + x) / (params.gamma_eg + w);
    let opts = QuadratureOptions {
        abs_tol: T::lit(1e-8) * peak * params.n0.abs().max(T::min_positive_value()),
        rel_tol: T::lit(1e-9),
        max_intervals: 4000,
    };
    let scale = match weight {
        VelocityWeight::Lorentzian => T::lit(400.0) * w,
        VelocityWeight::Gaussian => T::lit(8.0) * w,
    };
    let r = integrate(
        |kv| subsystem_sum(params, &bs, delta_p, gamma, kv) * density(kv),
        -scale,
        scale,
        &opts,
    )?;
    Ok(Complex::new(T::zero(), T::one() / (T::lit(6.0) * params.omega_p)) * r.value)
}

/// Whether the closed-form amplitudes keep the `iδ` term of the one-photon
/// denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeltaTerm {
    #[default]
    Dropped,
    Retained,
}

fn lambda_amplitude<T: Real>(p: &ToyParameters<T>, strength: T, pump: T, one_photon: T, term: DeltaTerm) -> T {
    let wg = p.w_d + p.gamma_eg;
    let d0 = match term {
        DeltaTerm::Dropped => Complex::new(wg, T::zero()),
        DeltaTerm::Retained => Complex::new(wg, one_photon),
    };
    let den = d0 * (d0 * (T::lit(4.0) * p.gamma_gg) + pump);
    let v = Complex::new(T::zero(), p.prefactor() * strength * pump) / den;
    v.im
}

fn peak_amplitude<T: Real>(p: &ToyParameters<T>, peak: ToyPeak, term: DeltaTerm) -> Result<T> {
    p.validate()?;
    let delta_p = T::lit(peak.offset() as f64) * p.delta + p.delta_c;
    Ok(branches(p)
        .iter()
        .filter(|b| b.offset == peak.offset())
        .map(|b| {
            let one_photon = delta_p + T::lit(b.probe_m as f64) * p.delta;
            lambda_amplitude(p, b.strength, b.pump, one_photon, term)
        })
        .fold(T::zero(), |a, x| a + x))
}

/// Height of the σ transparency at Δ_p = 0 above the one-photon background.
pub fn peak_amplitude_a0<T: Real>(params: &ToyParameters<T>, term: DeltaTerm) -> Result<T> {
    peak_amplitude(params, ToyPeak::A0, term)
}

/// Height of the π transparency at Δ_p = +δ.
pub fn peak_amplitude_a1<T: Real>(params: &ToyParameters<T>, term: DeltaTerm) -> Result<T> {
    peak_amplitude(params, ToyPeak::APlus1, term)
}

/// Height of the π transparency at Δ_p = −δ.
pub fn peak_amplitude_am1<T: Real>(params: &ToyParameters<T>, term: DeltaTerm) -> Result<T> {
    peak_amplitude(params, ToyPeak::AMinus1, term)
}

/// `A₊₁/A₀ = (1/√2)(μ_{g0e0}/μ_{g+1e0})²·tan θ`, valid at φ = 0.
pub fn ratio_law<T: Real>(theta: T) -> T {
    let mu = ToyDipoles::<T>::rb87();
    let r = mu.g0_e0 / mu.g1_e0;
    r * r * theta.tan() * T::FRAC_1_SQRT_2()
}

/// Inverse of [`ratio_law`]: θ from the amplitude ratio A₊₁/A₀.
pub fn theta_from_ratio<T: Real>(ratio: T) -> T {
    let mu = ToyDipoles::<T>::rb87();
    let r = mu.g1_e0 / mu.g0_e0;
    (T::SQRT_2() * r * r * ratio).atan()
}

/// A₀ as a function of φ at θ = 90°, keeping the sign of sin φ.
pub fn a0_phi_locus<T: Real>(phis: &[T], params: &ToyParameters<T>) -> Result<Vec<T>> {
    params.validate()?;
    if (params.theta - T::FRAC_PI_2()).abs() > T::lit(1e-9) {
        return Err(EitError::invalid("the phi locus is defined for theta = 90 degrees"));
    }
    let mu = ToyDipoles::<T>::rb87();
    let wg = params.w_d + params.gamma_eg;
    let sat = T::lit(4.0) * params.gamma_gg * wg;
    let pump_scale = (mu.gp1_e0 * params.omega_c).powi(2) * T::lit(0.5);
    let front =
        params.n0 * lambda0::<T>() / (T::lit(6.0) * T::SQRT_2()) * (mu.g1_e0 * mu.gp1_e0 * params.omega_c).powi(2) / wg;
    Ok(phis
        .iter()
        .map(|&phi| {
            let (s, c) = phi.sin_cos();
            front * s * c * c / (sat + pump_scale * c * c)
        })
        .collect())
}

/// Worst analytic-vs-quadrature discrepancy for one pump strength.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DiscrepancyRow {
    pub omega_c: f64,
    pub weight: &'static str,
    pub max_relative_error: f64,
    pub worst_delta_p: f64,
}

/// Tabulates `max |χ_analytic − χ_quadrature| / |χ_quadrature|` over a
/// detuning grid for each pump scale.
pub fn discrepancy_table<T: Real>(
    params: &ToyParameters<T>,
    pump_scales: &[T],
    grid: &[T],
    weight: VelocityWeight,
) -> Result<Vec<DiscrepancyRow>> {
    pump_scales
        .iter()
        .map(|&oc| {
            let p = ToyParameters { omega_c: oc, ..*params };
            let mut worst = (0.0f64, 0.0f64);
            for &d in grid {
                let a = chi_analytic(d, &p)?;
                let q = chi_quadrature(d, &p, weight)?;
                let rel = ((a - q).norm() / q.norm()).to_f64_lossy();
                if rel > worst.0 || rel.is_nan() {
                    worst = (rel, d.to_f64_lossy());
                }
            }
            Ok(DiscrepancyRow {
                omega_c: oc.to_f64_lossy(),
                weight: match weight {
                    VelocityWeight::Lorentzian => "lorentzian",
                    VelocityWeight::Gaussian => "gaussian",
                },
                max_relative_error: worst.0,
                worst_delta_p: worst.1,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(theta_deg: f64, phi_deg: f64) -> ToyParameters<f64> {
        ToyParameters::new(theta_deg.to_radians(), phi_deg.to_radians(), 4.17).unwrap()
    }

    #[test]
    fn constants() {
        assert_abs_diff_eq!(
            lambda0::<f64>(),
            (std::f64::consts::PI * 2f64.ln()).sqrt(),
            epsilon = 1e-15
        );
        let w = doppler_half_width(294.0f64).unwrap();
        assert!((w - 256.0).abs() / 256.0 < 0.02, "{w}");
        let d = ToyDipoles::<f64>::rb87();
        assert_abs_diff_eq!(d.g0_e0, (2.0f64 / 15.0).sqrt(), epsilon = 1e-15);
        assert_abs_diff_eq!(d.g1_e0, (1.0f64 / 30.0).sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn lorentzian_density_is_normalized() {
        let v = LorentzianVelocityDist::new(250.0, 1.0).unwrap();
        let r = integrate(
            |x: f64| Complex::new(v.density(x), 0.0),
            -1e6,
            1e6,
            &QuadratureOptions::default(),
        )
        .unwrap();
        assert!((r.value.re / lambda0::<f64>() - 1.0).abs() < 1e-3);
        assert!(LorentzianVelocityDist::new(0.0, 1.0).is_err());
    }

    #[test]
    fn rabi_examples() {
        let r = toy_rabi_set(&params(0.0, 25.0));
        assert_eq!(r.probe_pi_e0, 0.0);
        assert_eq!(r.pump_pi_e1, 0.0);
        let r = toy_rabi_set(&params(90.0, 0.0));
        assert!(r.probe_sigma_e0 < 1e-30 && r.probe_sigma_e1 < 1e-30);
        let p = params(90.0, 0.0);
        let mu = ToyDipoles::<f64>::rb87();
        assert_abs_diff_eq!(r.probe_pi_e0, (mu.g0_e0 * p.omega_p).powi(2), epsilon = 1e-12);
    }

    #[test]
    fn rabi_values_at_the_oblique_geometry() {
        let p = params(44.8, 40.0);
        let r = toy_rabi_set(&p);
        let mu = ToyDipoles::<f64>::rb87();
        let (s, c) = (40f64.to_radians().sin(), 40f64.to_radians().cos());
        let (st, ct) = (44.8f64.to_radians().sin(), 44.8f64.to_radians().cos());
        let ep2 = p.omega_p * p.omega_p;
        assert_abs_diff_eq!(
            r.probe_sigma_e0,
            mu.g1_e0.powi(2) * ep2 * (s * s + c * c * ct * ct) / 2.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(r.probe_pi_e0, mu.g0_e0.powi(2) * ep2 * c * c * st * st, epsilon = 1e-12);
        assert!(r.pump_pi_e1 > 0.0 && r.pump_sigma_e0 > 0.0 && r.probe_sigma_e1 > 0.0);
    }

    #[test]
    fn no_pump_means_no_transparency() {
        let mut p = params(44.8, 40.0);
        p.omega_c = 0.0;
        let at = |d: f64| chi_analytic(d, &p).unwrap().im;
        // smooth Doppler line: monotone away from the centre over a few δ
        assert!(at(0.0) > at(2.0) && at(2.0) > at(4.17) && at(4.17) > at(6.0));
        assert_eq!(peak_amplitude_a0(&p, DeltaTerm::Dropped).unwrap(), 0.0);
    }

    #[test]
    fn oblique_geometry_shows_three_dips() {
        let p = params(44.8, 40.0);
        let at = |d: f64| chi_analytic(d, &p).unwrap().im;
        for centre in [-4.17, 0.0, 4.17] {
            assert!(
                at(centre) < at(centre - 0.3) && at(centre) < at(centre + 0.3),
                "{centre}"
            );
        }
        assert!(peak_amplitude_a0(&p, DeltaTerm::Dropped).unwrap() > 0.0);
        assert!(peak_amplitude_a1(&p, DeltaTerm::Dropped).unwrap() > 0.0);
    }

    #[test]
    fn a0_vanishes_on_the_axes() {
        for phi in [0.0, 90.0, 180.0] {
            let p = params(90.0, phi);
            assert!(peak_amplitude_a0(&p, DeltaTerm::Dropped).unwrap().abs() < 1e-15);
        }
        assert_eq!(peak_amplitude_a1(&params(0.0, 0.0), DeltaTerm::Dropped).unwrap(), 0.0);
    }

    #[test]
    fn a1_grows_with_theta_at_zero_phi() {
        let a: Vec<f64> = (0..=18)
            .map(|k| peak_amplitude_a1(&params(5.0 * k as f64, 0.0), DeltaTerm::Dropped).unwrap())
            .collect();
        assert!(a.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn ratio_law_at_45_degrees() {
        let p = params(45.0, 0.0);
        let r = peak_amplitude_a1(&p, DeltaTerm::Dropped).unwrap() / peak_amplitude_a0(&p, DeltaTerm::Dropped).unwrap();
        assert_abs_diff_eq!(r, 2.0 * std::f64::consts::SQRT_2, epsilon = 1e-10);
        assert_abs_diff_eq!(theta_from_ratio(ratio_law(0.3f64)), 0.3, epsilon = 1e-14);
    }

    #[test]
    fn locus_matches_a0_on_the_upper_half() {
        let p = params(90.0, 0.0);
        let phis: Vec<f64> = (1..18).map(|k| (10.0 * k as f64).to_radians()).collect();
        let locus = a0_phi_locus(&phis, &p).unwrap();
        let top = locus.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (&phi, &a) in phis.iter().zip(&locus) {
            let q = ToyParameters { phi, ..p };
            let direct = peak_amplitude_a0(&q, DeltaTerm::Dropped).unwrap();
            assert_abs_diff_eq!(a, direct, epsilon = 1e-12 * top);
        }
        assert!(a0_phi_locus(&phis, &params(80.0, 0.0)).is_err());
    }

    #[test]
    fn quadrature_agrees_with_pole_formula() {
        let mut p = params(44.8, 40.0);
        p.omega_c = 3.0;
        for d in [-20.0, -4.17, 0.0, 1.0, 4.17, 13.0] {
            let a = chi_analytic(d, &p).unwrap();
            let q = chi_quadrature(d, &p, VelocityWeight::Lorentzian).unwrap();
            assert!((a - q).norm() / q.norm() < 1e-7, "{d}: {a} vs {q}");
        }
    }

    #[test]
    fn gaussian_weight_differs_from_pole_formula() {
        let p = params(44.8, 40.0);
        let a = chi_analytic(0.0, &p).unwrap();
        let g = chi_quadrature(0.0, &p, VelocityWeight::Gaussian).unwrap();
        let rel = (a - g).norm() / g.norm();
        let l = chi_quadrature(0.0, &p, VelocityWeight::Lorentzian).unwrap();
        let exact = (a - l).norm() / l.norm();
        assert!(rel > 1e-4 && rel < 1e-2 && exact < 1e-2 * rel, "{rel} {exact}");
    }
}
