//! The 13 Zeeman sublevels of the ⁸⁷Rb D₂ line that take part in the
//! F=1 / F=2 → F′=2 Λ scheme, their dipole couplings and linear Zeeman shifts.
//!
//! All frequencies are in MHz and fields in Gauss, so ħ never appears.
//! Wigner 3j symbols are evaluated exactly (squared value as a big rational)
//! and only converted to floating point at the end.

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{EitError, Result};
use crate::scalar::Real;

/// Number of sublevels in the scheme.
pub const N_LEVELS: usize = 13;
/// Flat indices of the probe ground manifold (F=1).
pub const PROBE_GROUND: std::ops::Range<usize> = 0..3;
/// Flat indices of the pump ground manifold (F=2).
pub const PUMP_GROUND: std::ops::Range<usize> = 3..8;
/// All ground sublevels.
pub const GROUND: std::ops::Range<usize> = 0..8;
/// Flat indices of the excited manifold (F′=2).
pub const EXCITED: std::ops::Range<usize> = 8..13;

/// Rb D₂ constants in the MHz/Gauss unit system.
///
/// `epsilon0_scale` is the dimensionless susceptibility normalization; the
/// number density and ε₀ are folded into it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants<T> {
    /// Bohr magneton over h, MHz/G.
    pub mu_b: T,
    /// Natural linewidth Γ/2π of the D₂ line, MHz.
    pub gamma: T,
    /// Saturation intensity of the cycling transition, mW/cm².
    pub saturation_intensity: T,
    pub epsilon0_scale: T,
}

impl<T: Real> Default for PhysicalConstants<T> {
    fn default() -> Self {
        Self {
            mu_b: T::lit(1.3996),
            gamma: T::lit(6.066),
            saturation_intensity: T::lit(1.669),
            epsilon0_scale: T::one(),
        }
    }
}

impl<T: Real> PhysicalConstants<T> {
    pub fn validate(&self) -> Result<()> {
        let ok = [self.mu_b, self.gamma, self.saturation_intensity, self.epsilon0_scale]
            .iter()
            .all(|v| v.is_finite() && *v > T::zero());
        if ok {
            Ok(())
        } else {
            Err(EitError::invalid("physical constants must be finite and positive"))
        }
    }

    /// Uniform two-photon peak spacing per Gauss, μ_B·|g_F| with |g_F| = 1/2.
    pub fn spacing_slope(&self) -> T {
        self.mu_b * T::lit(0.5)
    }
}

// ---------------------------------------------------------------------------
// half-integers and the 3j symbol

/// A non-negative or negative half-integer stored as twice its value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct HalfInt(i32);

impl HalfInt {
    pub const fn from_int(n: i32) -> Self {
        HalfInt(2 * n)
    }

    pub const fn from_twice(two: i32) -> Self {
        HalfInt(two)
    }

    /// Accepts only exact multiples of ½.
    pub fn from_f64(x: f64) -> Result<Self> {
        let two = 2.0 * x;
        if !two.is_finite() || two.fract() != 0.0 || two.abs() > i32::MAX as f64 {
            return Err(EitError::invalid(format!("{x} is not a half-integer")));
        }
        Ok(HalfInt(two as i32))
    }

    pub const fn twice(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }
}

/// An exactly known real number of the form `sign · sqrt(square)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactCoefficient {
    pub sign: i8,
    pub square: BigRational,
}

impl ExactCoefficient {
    pub fn zero() -> Self {
        Self {
            sign: 0,
            square: BigRational::zero(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sign == 0
    }

    pub fn to_real<T: Real>(&self) -> T {
        if self.sign == 0 {
            return T::zero();
        }
        let num = self.square.numer().to_f64().unwrap_or(f64::NAN);
        let den = self.square.denom().to_f64().unwrap_or(f64::NAN);
        let magnitude = T::lit(num / den).sqrt();
        if self.sign < 0 {
            -magnitude
        } else {
            magnitude
        }
    }
}

fn factorial(n: i32) -> BigInt {
    debug_assert!(n >= 0);
    (1..=n.max(0)).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

/// Wigner 3j symbol `(j1 j2 j3; m1 m2 m3)` evaluated exactly with the Racah
/// factorial sum.
///
/// Returns an exact zero when the projections do not sum to zero or the
/// triangle condition fails. Projections outside `[-j, j]` or `j - m`
/// non-integral are rejected as invalid arguments.
pub fn wigner3j_exact(
    j1: HalfInt,
    j2: HalfInt,
    j3: HalfInt,
    m1: HalfInt,
    m2: HalfInt,
    m3: HalfInt,
) -> Result<ExactCoefficient> {
    let (tj1, tj2, tj3) = (j1.twice(), j2.twice(), j3.twice());
    let (tm1, tm2, tm3) = (m1.twice(), m2.twice(), m3.twice());
    for (tj, tm) in [(tj1, tm1), (tj2, tm2), (tj3, tm3)] {
        if tj < 0 {
            return Err(EitError::invalid(format!(
                "negative angular momentum {}",
                tj as f64 / 2.0
            )));
        }
        if tm.abs() > tj {
            return Err(EitError::invalid(format!(
                "projection {} exceeds j = {}",
                tm as f64 / 2.0,
                tj as f64 / 2.0
            )));
        }
        if (tj - tm).rem_euclid(2) != 0 {
            return Err(EitError::invalid(format!(
                "j - m must be integral (j = {}, m = {})",
                tj as f64 / 2.0,
                tm as f64 / 2.0
            )));
        }
    }
    if tm1 + tm2 + tm3 != 0 {
        return Ok(ExactCoefficient::zero());
    }
    if tj3 > tj1 + tj2 || tj3 < (tj1 - tj2).abs() || (tj1 + tj2 + tj3).rem_euclid(2) != 0 {
        return Ok(ExactCoefficient::zero());
    }

    // every combination below is an integer once the checks above pass
    let h = |two: i32| two / 2;
    let a = h(tj1 + tj2 - tj3);
    let b = h(tj1 - tj2 + tj3);
    let c = h(-tj1 + tj2 + tj3);
    let big_j = h(tj1 + tj2 + tj3);

    let triangle = BigRational::new(factorial(a) * factorial(b) * factorial(c), factorial(big_j + 1));
    let projections = factorial(h(tj1 + tm1))
        * factorial(h(tj1 - tm1))
        * factorial(h(tj2 + tm2))
        * factorial(h(tj2 - tm2))
        * factorial(h(tj3 + tm3))
        * factorial(h(tj3 - tm3));

    let k_min = 0.max(h(tj2 - tj3 - tm1)).max(h(tj1 - tj3 + tm2));
    let k_max = a.min(h(tj1 - tm1)).min(h(tj2 + tm2));
    let mut sum = BigRational::zero();
    for k in k_min..=k_max {
        let den = factorial(k)
            * factorial(h(tj3 - tj2 + tm1) + k)
            * factorial(h(tj3 - tj1 - tm2) + k)
            * factorial(a - k)
            * factorial(h(tj1 - tm1) - k)
            * factorial(h(tj2 + tm2) - k);
        let term = BigRational::new(BigInt::one(), den);
        if k % 2 == 0 {
            sum += term;
        } else {
            sum -= term;
        }
    }
    if sum.is_zero() {
        return Ok(ExactCoefficient::zero());
    }
    let phase_exp = h(tj1 - tj2 - tm3);
    let mut sign: i8 = if sum.is_negative() { -1 } else { 1 };
    if phase_exp.rem_euclid(2) == 1 {
        sign = -sign;
    }
    let square = triangle * BigRational::from_integer(projections) * &sum * &sum;
    Ok(ExactCoefficient { sign, square })
}

/// Floating-point front end for [`wigner3j_exact`]; arguments must be
/// half-integers.
pub fn wigner3j<T: Real>(j1: f64, j2: f64, j3: f64, m1: f64, m2: f64, m3: f64) -> Result<T> {
    let h = HalfInt::from_f64;
    Ok(wigner3j_exact(h(j1)?, h(j2)?, h(j3)?, h(m1)?, h(m2)?, h(m3)?)?.to_real())
}

// ---------------------------------------------------------------------------
// levels

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Manifold {
    GroundF1,
    GroundF2,
    ExcitedF2,
}

impl Manifold {
    pub const ALL: [Manifold; 3] = [Manifold::GroundF1, Manifold::GroundF2, Manifold::ExcitedF2];

    pub const fn f(self) -> i32 {
        match self {
            Manifold::GroundF1 => 1,
            Manifold::GroundF2 | Manifold::ExcitedF2 => 2,
        }
    }

    pub const fn is_excited(self) -> bool {
        matches!(self, Manifold::ExcitedF2)
    }

    /// Landé g_F of the hyperfine level from g_J of the fine-structure level
    /// (5S₁/₂: g_J = 2, 5P₃/₂: g_J = 4/3) and I = 3/2.
    pub fn g_f_exact(self) -> Ratio<i64> {
        let (g_j, two_j) = match self {
            Manifold::GroundF1 | Manifold::GroundF2 => (Ratio::from_integer(2), 1),
            Manifold::ExcitedF2 => (Ratio::new(4, 3), 3),
        };
        lande_g_f(g_j, two_j, 3, 2 * self.f() as i64)
    }

    pub fn g_f<T: Real>(self) -> T {
        let g = self.g_f_exact();
        T::lit(*g.numer() as f64 / *g.denom() as f64)
    }
}

/// `g_F = g_J · [F(F+1) + J(J+1) − I(I+1)] / [2F(F+1)]`, nuclear moment neglected.
/// Angular momenta are passed doubled.
pub fn lande_g_f(g_j: Ratio<i64>, two_j: i64, two_i: i64, two_f: i64) -> Ratio<i64> {
    // x(x+1) with x = two_x / 2  ->  two_x (two_x + 2) / 4
    let jj = |two: i64| Ratio::new(two * (two + 2), 4);
    let ff = jj(two_f);
    g_j * (ff + jj(two_j) - jj(two_i)) / (Ratio::from_integer(2) * ff)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct QuantumLevel {
    pub manifold: Manifold,
    pub m: i32,
}

impl QuantumLevel {
    pub fn new(manifold: Manifold, m: i32) -> Result<Self> {
        if m.abs() > manifold.f() {
            return Err(EitError::invalid(format!(
                "|m_F| = {} exceeds F = {}",
                m.abs(),
                manifold.f()
            )));
        }
        Ok(Self { manifold, m })
    }

    pub const fn f(&self) -> i32 {
        self.manifold.f()
    }

    pub fn g_f<T: Real>(&self) -> T {
        self.manifold.g_f()
    }

    pub const fn is_excited(&self) -> bool {
        self.manifold.is_excited()
    }
}

/// Linear Zeeman shift μ_B·g_F·m_F·B in MHz.
pub fn zeeman_shift<T: Real>(level: &QuantumLevel, b_gauss: T, constants: &PhysicalConstants<T>) -> T {
    constants.mu_b * level.g_f::<T>() * T::lit(level.m as f64) * b_gauss
}

/// The 13 sublevels in canonical order: F=1 (m = −1…1), F=2 (m = −2…2),
/// F′=2 (m = −2…2).
#[derive(Debug, Clone, PartialEq)]
pub struct LevelScheme {
    levels: Vec<QuantumLevel>,
}

impl LevelScheme {
    pub fn levels(&self) -> &[QuantumLevel] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn level(&self, index: usize) -> &QuantumLevel {
        &self.levels[index]
    }

    pub fn index(&self, manifold: Manifold, m: i32) -> Option<usize> {
        if m.abs() > manifold.f() {
            return None;
        }
        let offset = match manifold {
            Manifold::GroundF1 => 0,
            Manifold::GroundF2 => 3,
            Manifold::ExcitedF2 => 8,
        };
        Some(offset + (m + manifold.f()) as usize)
    }

    pub fn indices_of(&self, manifold: Manifold) -> std::ops::Range<usize> {
        match manifold {
            Manifold::GroundF1 => PROBE_GROUND,
            Manifold::GroundF2 => PUMP_GROUND,
            Manifold::ExcitedF2 => EXCITED,
        }
    }
}

pub fn build_level_scheme() -> LevelScheme {
    let levels = Manifold::ALL
        .iter()
        .flat_map(|&manifold| {
            let f = manifold.f();
            (-f..=f).map(move |m| QuantumLevel { manifold, m })
        })
        .collect();
    LevelScheme { levels }
}

// ---------------------------------------------------------------------------
// dipoles

/// `(−1)^{F_e−1+m_g} · (F_e 1 F_g; −m_e q m_g)` with unit reduced element.
pub fn dipole_element_exact(e: &QuantumLevel, g: &QuantumLevel, q: i32) -> Result<ExactCoefficient> {
    if !(-1..=1).contains(&q) {
        return Err(EitError::invalid(format!(
            "polarization index q = {q} outside {{-1, 0, 1}}"
        )));
    }
    if !e.is_excited() || g.is_excited() {
        return Err(EitError::invalid("dipole element needs an excited and a ground level"));
    }
    let mut c = wigner3j_exact(
        HalfInt::from_int(e.f()),
        HalfInt::from_int(1),
        HalfInt::from_int(g.f()),
        HalfInt::from_int(-e.m),
        HalfInt::from_int(q),
        HalfInt::from_int(g.m),
    )?;
    if (e.f() - 1 + g.m).rem_euclid(2) == 1 {
        c.sign = -c.sign;
    }
    Ok(c)
}

pub fn dipole_element<T: Real>(e: &QuantumLevel, g: &QuantumLevel, q: i32) -> Result<T> {
    Ok(dipole_element_exact(e, g, q)?.to_real())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DipoleEntry<T> {
    pub excited: usize,
    pub ground: usize,
    /// m_e − m_g
    pub q: i32,
    pub amplitude: T,
}

/// Every dipole-allowed (excited, ground) pair of the scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct DipoleTable<T> {
    entries: Vec<DipoleEntry<T>>,
    lookup: Vec<Option<usize>>,
}

impl<T: Real> DipoleTable<T> {
    pub fn build(scheme: &LevelScheme) -> Self {
        let mut entries = Vec::new();
        let mut lookup = vec![None; N_LEVELS * N_LEVELS];
        for e in EXCITED {
            for g in GROUND {
                let (le, lg) = (scheme.level(e), scheme.level(g));
                let q = le.m - lg.m;
                if q.abs() > 1 {
                    continue;
                }
                let amp = dipole_element_exact(le, lg, q).expect("valid scheme levels");
                if amp.is_zero() {
                    continue;
                }
                lookup[e * N_LEVELS + g] = Some(entries.len());
                entries.push(DipoleEntry {
                    excited: e,
                    ground: g,
                    q,
                    amplitude: amp.to_real(),
                });
            }
        }
        Self { entries, lookup }
    }

    pub fn entries(&self) -> &[DipoleEntry<T>] {
        &self.entries
    }

    pub fn get(&self, excited: usize, ground: usize) -> Option<&DipoleEntry<T>> {
        self.lookup
            .get(excited * N_LEVELS + ground)
            .copied()
            .flatten()
            .map(|k| &self.entries[k])
    }

    /// Amplitude, or zero for a forbidden pair.
    pub fn amplitude(&self, excited: usize, ground: usize) -> T {
        self.get(excited, ground).map_or(T::zero(), |d| d.amplitude)
    }

    /// |μ_{g′ e}| / |μ_{g e}| between two probe-ground sublevels coupled to
    /// the same excited sublevel; `dipole_ratio(scheme, 0, 1, 0)` is the
    /// μ_{g₊₁e₀}/μ_{g₀e₀} constant of the direction formula.
    pub fn probe_ratio(&self, scheme: &LevelScheme, m_e: i32, m_num: i32, m_den: i32) -> T {
        let e = scheme.index(Manifold::ExcitedF2, m_e).expect("excited sublevel");
        let gn = scheme.index(Manifold::GroundF1, m_num).expect("ground sublevel");
        let gd = scheme.index(Manifold::GroundF1, m_den).expect("ground sublevel");
        self.amplitude(e, gn).abs() / self.amplitude(e, gd).abs()
    }
}

/// μ_{g₊₁e₀}/μ_{g₀e₀} on the probe transition (exactly 1/2 for F=1 → F′=2).
pub fn direction_dipole_ratio<T: Real>() -> T {
    let scheme = build_level_scheme();
    DipoleTable::<T>::build(&scheme).probe_ratio(&scheme, 0, 1, 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn hi(n: i32) -> HalfInt {
        HalfInt::from_int(n)
    }

    /// Independent oracle: closed form for (j1 j2 j3; 0 0 0) with J even.
    fn three_j_zero_projections(j1: i32, j2: i32, j3: i32) -> f64 {
        let f = |n: i32| (1..=n).map(|k| k as f64).product::<f64>();
        let big = j1 + j2 + j3;
        if big % 2 == 1 {
            return 0.0;
        }
        let g = big / 2;
        let sign = if g % 2 == 0 { 1.0 } else { -1.0 };
        sign * (f(big - 2 * j1) * f(big - 2 * j2) * f(big - 2 * j3) / f(big + 1)).sqrt() * f(g)
            / (f(g - j1) * f(g - j2) * f(g - j3))
    }

    #[test]
    fn three_j_vanishing_cases() {
        assert_eq!(wigner3j::<f64>(1.0, 1.0, 1.0, 0.0, 0.0, 0.0).unwrap(), 0.0);
        assert_eq!(wigner3j::<f64>(2.0, 1.0, 1.0, 0.0, 0.0, -1.0).unwrap(), 0.0);
        // triangle violation
        assert_eq!(wigner3j::<f64>(3.0, 1.0, 1.0, 0.0, 0.0, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn three_j_matches_zero_projection_closed_form() {
        // (2 1 1; 0 0 0) = sqrt(2/15)
        let v = wigner3j::<f64>(2.0, 1.0, 1.0, 0.0, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(v, three_j_zero_projections(2, 1, 1), epsilon = 1e-15);
        assert_abs_diff_eq!(v, 0.365_148_371_670_110_7, epsilon = 1e-15);
        for (a, b, c) in [(2, 2, 2), (3, 2, 1), (4, 2, 2), (1, 1, 2), (3, 3, 2)] {
            let v = wigner3j::<f64>(a as f64, b as f64, c as f64, 0.0, 0.0, 0.0).unwrap();
            assert_abs_diff_eq!(v, three_j_zero_projections(a, b, c), epsilon = 1e-14);
        }
    }

    #[test]
    fn three_j_known_half_integer_value() {
        // (1/2 1/2 1; 1/2 -1/2 0) = 1/sqrt(6)
        let v = wigner3j::<f64>(0.5, 0.5, 1.0, 0.5, -0.5, 0.0).unwrap();
        assert_abs_diff_eq!(v, 1.0 / 6f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn three_j_rejects_bad_arguments() {
        assert!(matches!(
            wigner3j::<f64>(1.3, 1.0, 1.0, 0.0, 0.0, 0.0),
            Err(EitError::InvalidArgument(_))
        ));
        assert!(wigner3j::<f64>(1.0, 1.0, 1.0, 2.0, -2.0, 0.0).is_err());
        assert!(wigner3j::<f64>(1.0, 1.0, 1.0, 0.5, -0.5, 0.0).is_err());
    }

    #[test]
    fn orthogonality_sums_are_exactly_one() {
        for (j1, j2, j3) in [(2, 1, 1), (2, 1, 2), (1, 1, 1), (1, 1, 2), (2, 2, 2)] {
            for m3 in -j3..=j3 {
                let mut acc = BigRational::zero();
                for m1 in -j1..=j1 {
                    let m2 = -m1 - m3;
                    if m2.abs() > j2 {
                        continue;
                    }
                    let c = wigner3j_exact(hi(j1), hi(j2), hi(j3), hi(m1), hi(m2), hi(m3)).unwrap();
                    acc += c.square;
                }
                acc *= BigRational::from_integer(BigInt::from(2 * j3 + 1));
                assert_eq!(acc, BigRational::one(), "({j1} {j2} {j3}) m3={m3}");
            }
        }
    }

    #[test]
    fn lande_factors() {
        assert_eq!(Manifold::GroundF1.g_f_exact(), Ratio::new(-1, 2));
        assert_eq!(Manifold::GroundF2.g_f_exact(), Ratio::new(1, 2));
        assert_eq!(Manifold::ExcitedF2.g_f_exact(), Ratio::new(2, 3));
    }

    #[test]
    fn scheme_layout() {
        let s = build_level_scheme();
        assert_eq!(s.len(), N_LEVELS);
        let mut seen = std::collections::HashSet::new();
        for (i, l) in s.levels().iter().enumerate() {
            assert_eq!(s.index(l.manifold, l.m), Some(i));
            assert!(seen.insert((l.manifold, l.m)));
        }
        assert_eq!(s.index(Manifold::ExcitedF2, 0), Some(10));
        assert_eq!(s.index(Manifold::GroundF1, 2), None);
    }

    #[test]
    fn zeeman_examples() {
        let c = PhysicalConstants::<f64>::default();
        let f2p1 = QuantumLevel::new(Manifold::GroundF2, 1).unwrap();
        let f1p1 = QuantumLevel::new(Manifold::GroundF1, 1).unwrap();
        assert_abs_diff_eq!(zeeman_shift(&f2p1, 6.004, &c), 4.2016, epsilon = 1e-4);
        // within 1% of the 4.17 MHz spacing observed at that field
        assert!((zeeman_shift(&f2p1, 6.004, &c) - 4.17).abs() / 4.17 < 0.01);
        assert_abs_diff_eq!(zeeman_shift(&f1p1, 10.0, &c), -6.998, epsilon = 1e-12);
        let m0 = QuantumLevel::new(Manifold::ExcitedF2, 0).unwrap();
        assert_eq!(zeeman_shift(&m0, 123.0, &c), 0.0);
        assert_abs_diff_eq!(c.spacing_slope(), 0.6998, epsilon = 1e-12);
    }

    #[test]
    fn dipole_selection_and_errors() {
        let e0 = QuantumLevel::new(Manifold::ExcitedF2, 0).unwrap();
        let g0 = QuantumLevel::new(Manifold::GroundF1, 0).unwrap();
        let gm1 = QuantumLevel::new(Manifold::GroundF1, -1).unwrap();
        let em1 = QuantumLevel::new(Manifold::ExcitedF2, 1).unwrap();
        // m_e = m_g + 2 with q = +1
        assert_eq!(dipole_element::<f64>(&em1, &gm1, 1).unwrap(), 0.0);
        // (F_e=2, 0) <-> (F_g=1, 0), q=0: (-1)^{1} (2 1 1; 0 0 0)
        assert_abs_diff_eq!(
            dipole_element::<f64>(&e0, &g0, 0).unwrap(),
            -three_j_zero_projections(2, 1, 1),
            epsilon = 1e-15
        );
        assert!(dipole_element::<f64>(&e0, &g0, 2).is_err());
        assert!(dipole_element::<f64>(&g0, &e0, 0).is_err());
    }

    #[test]
    fn dipole_row_sums() {
        let s = build_level_scheme();
        let t = DipoleTable::<f64>::build(&s);
        for e in EXCITED {
            for manifold in [Manifold::GroundF1, Manifold::GroundF2] {
                let sum: f64 = s.indices_of(manifold).map(|g| t.amplitude(e, g).powi(2)).sum();
                assert_abs_diff_eq!(5.0 * sum, 1.0, epsilon = 1e-14);
            }
        }
        assert_abs_diff_eq!(direction_dipole_ratio::<f64>(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn dipole_table_is_exhaustive_and_respects_selection_rules() {
        let s = build_level_scheme();
        let t = DipoleTable::<f64>::build(&s);
        for e in EXCITED {
            for g in GROUND {
                let (le, lg) = (s.level(e), s.level(g));
                for q in -1..=1 {
                    let v = dipole_element::<f64>(le, lg, q).unwrap();
                    if le.m != lg.m + q {
                        assert_eq!(v, 0.0);
                    } else if v != 0.0 {
                        let entry = t.get(e, g).expect("allowed pair must be tabulated");
                        assert_eq!(entry.q, q);
                        assert_eq!(entry.amplitude, v);
                    }
                }
            }
        }
    }
}
