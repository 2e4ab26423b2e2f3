//! Rotating-frame master equation for the 13-level scheme and its steady state.
//!
//! ρ is flattened row-major (`ρ_ij` at `i*13 + j`) into 169 complex unknowns.
//! The generator is
//!
//! ```text
//! dρ/dt = −i[H, ρ] − ½{R, ρ} + Λ_A(ρ) + Λ_γ(ρ) − γ_extra·(ground coherences)
//! ```
//!
//! and the steady state is the kernel vector with unit trace.

use num_complex::Complex;
use num_traits::{Float, One, Zero};
use rayon::prelude::*;

use crate::atomic_structure::{
    zeeman_shift, DipoleTable, LevelScheme, PhysicalConstants, EXCITED, GROUND, N_LEVELS, PROBE_GROUND,
};
use crate::error::{EitError, Result};
use crate::field_geometry::{decompose_probe, decompose_pump, FieldGeometry, SphericalComponents};
use crate::linalg::{hermitian_eigenvalues, is_positive_above, DenseMatrix, LuFactors};
use crate::scalar::{LinScalar, Real};

const N: usize = N_LEVELS;
const NN: usize = N_LEVELS * N_LEVELS;

/// Largest pivot ratio accepted from the steady-state LU.
pub const MAX_PIVOT_RATIO: f64 = 1e13;
/// Largest ∞-norm residual accepted from the steady-state solve.
pub const MAX_RESIDUAL: f64 = 1e-9;
/// Eigenvalue floor for a physical density matrix.
pub const EIGENVALUE_FLOOR: f64 = -1e-8;

/// Total Rabi frequency (MHz) of a beam of the given intensity (mW/cm²):
/// `Γ·sqrt(I / 2 I_sat)`.
pub fn rabi_amplitude<T: Real>(intensity: T, constants: &PhysicalConstants<T>) -> Result<T> {
    if !(intensity.is_finite() && intensity >= T::zero()) {
        return Err(EitError::invalid("intensity must be finite and nonnegative"));
    }
    Ok(constants.gamma * (intensity / (T::lit(2.0) * constants.saturation_intensity)).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Coupling {
    Probe,
    Pump,
}

fn ground_beam(g: usize) -> Coupling {
    if PROBE_GROUND.contains(&g) {
        Coupling::Probe
    } else {
        Coupling::Pump
    }
}

/// Complex Rabi frequencies Ω_eg = E^q·μ(e, g, q) for every allowed pair.
#[derive(Debug, Clone, PartialEq)]
pub struct RabiSet<T> {
    omega: Vec<Complex<T>>,
}

impl<T: Real> RabiSet<T> {
    pub fn build(probe: &SphericalComponents<T>, pump: &SphericalComponents<T>, dipoles: &DipoleTable<T>) -> Self {
        let mut omega = vec![Complex::zero(); NN];
        for d in dipoles.entries() {
            let field = match ground_beam(d.ground) {
                Coupling::Probe => probe.component(d.q),
                Coupling::Pump => pump.component(d.q),
            };
            omega[d.excited * N + d.ground] = field * d.amplitude;
        }
        Self { omega }
    }

    /// Ω for an (excited, ground) pair; zero for forbidden pairs.
    pub fn get(&self, excited: usize, ground: usize) -> Complex<T> {
        self.omega[excited * N + ground]
    }

    /// Nonzero probe-branch couplings `(e, g, Ω)`.
    pub fn probe_pairs(&self) -> impl Iterator<Item = (usize, usize, Complex<T>)> + '_ {
        EXCITED
            .flat_map(move |e| PROBE_GROUND.map(move |g| (e, g, self.get(e, g))))
            .filter(|(_, _, w)| !w.is_zero())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RwaHamiltonian<T> {
    pub h: DenseMatrix<Complex<T>>,
    pub delta_p: T,
    pub delta_c: T,
}

fn level_energies<T: Real>(
    scheme: &LevelScheme,
    b: T,
    delta_p: T,
    delta_c: T,
    constants: &PhysicalConstants<T>,
) -> [T; N] {
    let mut out = [T::zero(); N];
    for (i, level) in scheme.levels().iter().enumerate() {
        let detuning = if PROBE_GROUND.contains(&i) {
            delta_p
        } else if GROUND.contains(&i) {
            delta_c
        } else {
            T::zero()
        };
        out[i] = detuning + zeeman_shift(level, b, constants);
    }
    out
}

fn hamiltonian_from_parts<T: Real>(energies: &[T; N], rabi: &RabiSet<T>) -> DenseMatrix<Complex<T>> {
    let mut h = DenseMatrix::zeros(N, N);
    for (i, &e) in energies.iter().enumerate() {
        h[(i, i)] = Complex::new(e, T::zero());
    }
    let half = T::lit(0.5);
    for e in EXCITED {
        for g in GROUND {
            let w = rabi.get(e, g);
            if !w.is_zero() {
                h[(e, g)] = -w * half;
                h[(g, e)] = -w.conj() * half;
            }
        }
    }
    h
}

/// Rotating-frame Hamiltonian in MHz. Probe-ground levels carry Δ_p, pump-ground
/// levels Δ_c, and every level its linear Zeeman shift.
#[allow(clippy::too_many_arguments)]
pub fn build_hamiltonian<T: Real>(
    scheme: &LevelScheme,
    probe: &SphericalComponents<T>,
    pump: &SphericalComponents<T>,
    dipoles: &DipoleTable<T>,
    delta_p: T,
    delta_c: T,
    b: T,
    constants: &PhysicalConstants<T>,
) -> Result<RwaHamiltonian<T>> {
    if !(delta_p.is_finite() && delta_c.is_finite()) {
        return Err(EitError::invalid("detunings must be finite"));
    }
    if !(b.is_finite() && b >= T::zero()) {
        return Err(EitError::invalid("field magnitude must be finite and nonnegative"));
    }
    let rabi = RabiSet::build(probe, pump, dipoles);
    let h = hamiltonian_from_parts(&level_energies(scheme, b, delta_p, delta_c, constants), &rabi);
    let res = h.hermiticity_residual();
    if !(res <= T::epsilon() * T::lit(16.0) * (T::one() + h.max_modulus())) {
        return Err(EitError::Assembly(format!(
            "hamiltonian not Hermitian (residual {res})"
        )));
    }
    Ok(RwaHamiltonian { h, delta_p, delta_c })
}

/// Depopulation, repopulation and dephasing rates (MHz).
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxationModel<T> {
    pub gamma: T,
    pub gamma_transit: T,
    pub gamma_ground: T,
    /// Diagonal of R.
    pub depopulation: [T; N],
    /// Λ_A as `(excited, ground, rate)`; rates from one excited level sum to Γ.
    pub branching: Vec<(usize, usize, T)>,
}

impl<T: Real> RelaxationModel<T> {
    /// Extra decay of ground–ground coherences beyond the transit rate.
    pub fn extra_ground_dephasing(&self) -> T {
        self.gamma_ground - self.gamma_transit
    }

    /// Decay rate of the optical coherence ρ_eg (Γ/2 + γ_transit).
    pub fn optical_coherence_decay(&self) -> T {
        self.gamma * T::lit(0.5) + self.gamma_transit
    }
}

pub fn build_relaxation<T: Real>(
    scheme: &LevelScheme,
    dipoles: &DipoleTable<T>,
    constants: &PhysicalConstants<T>,
    gamma_transit: T,
    gamma_ground: T,
) -> Result<RelaxationModel<T>> {
    constants.validate()?;
    if !(gamma_transit.is_finite() && gamma_transit >= T::zero()) {
        return Err(EitError::invalid("transit rate must be finite and nonnegative"));
    }
    if !(gamma_ground.is_finite() && gamma_ground >= gamma_transit) {
        return Err(EitError::invalid(format!(
            "ground decoherence ({gamma_ground}) must be at least the transit rate ({gamma_transit})"
        )));
    }
    let gamma = constants.gamma;
    let mut depopulation = [gamma_transit; N];
    for e in EXCITED {
        depopulation[e] += gamma;
    }
    let mut branching = Vec::new();
    for e in EXCITED {
        let weights: Vec<(usize, T)> = GROUND
            .map(|g| (g, dipoles.amplitude(e, g).powi(2)))
            .filter(|(_, w)| *w > T::zero())
            .collect();
        let total: T = weights.iter().map(|(_, w)| *w).sum();
        if total <= T::zero() {
            return Err(EitError::Assembly(format!("excited level {e} has no decay channel")));
        }
        branching.extend(weights.into_iter().map(|(g, w)| (e, g, gamma * w / total)));
    }
    debug_assert_eq!(scheme.len(), N);
    Ok(RelaxationModel {
        gamma,
        gamma_transit,
        gamma_ground,
        depopulation,
        branching,
    })
}

/// The 169×169 generator without the level energies on the commutator
/// diagonal; [`LiouvillianBase::add_energies`] completes it.
#[derive(Debug, Clone)]
pub struct LiouvillianBase<T> {
    matrix: DenseMatrix<Complex<T>>,
}

impl<T: Real> LiouvillianBase<T> {
    pub fn new(rabi: &RabiSet<T>, relax: &RelaxationModel<T>) -> Self {
        let zero_energy = [T::zero(); N];
        let h = hamiltonian_from_parts(&zero_energy, rabi);
        Self {
            matrix: generator(&h, relax),
        }
    }

    pub fn matrix(&self) -> &DenseMatrix<Complex<T>> {
        &self.matrix
    }

    /// Full generator for the given diagonal of H.
    pub fn with_energies(&self, energies: &[T; N]) -> DenseMatrix<Complex<T>> {
        let mut m = self.matrix.clone();
        add_energies(&mut m, energies);
        m
    }
}

fn add_energies<T: Real>(m: &mut DenseMatrix<Complex<T>>, energies: &[T; N]) {
    for i in 0..N {
        for j in 0..N {
            let r = i * N + j;
            m[(r, r)] += Complex::new(T::zero(), energies[j] - energies[i]);
        }
    }
}

/// Full Liouvillian for a Hamiltonian and relaxation model.
pub fn liouvillian<T: Real>(h: &RwaHamiltonian<T>, relax: &RelaxationModel<T>) -> DenseMatrix<Complex<T>> {
    generator(&h.h, relax)
}

fn generator<T: Real>(h: &DenseMatrix<Complex<T>>, relax: &RelaxationModel<T>) -> DenseMatrix<Complex<T>> {
    let mut l = DenseMatrix::zeros(NN, NN);
    let minus_i = Complex::new(T::zero(), -T::one());
    let half = T::lit(0.5);
    let extra = relax.extra_ground_dephasing();
    for i in 0..N {
        for j in 0..N {
            let r = i * N + j;
            for k in 0..N {
                let hik = h[(i, k)];
                if !hik.is_zero() {
                    l[(r, k * N + j)] += minus_i * hik;
                }
                let hkj = h[(k, j)];
                if !hkj.is_zero() {
                    l[(r, i * N + k)] -= minus_i * hkj;
                }
            }
            let mut decay = (relax.depopulation[i] + relax.depopulation[j]) * half;
            if i != j && GROUND.contains(&i) && GROUND.contains(&j) {
                decay += extra;
            }
            l[(r, r)] -= Complex::new(decay, T::zero());
        }
    }
    for &(e, g, rate) in &relax.branching {
        l[(g * N + g, e * N + e)] += Complex::new(rate, T::zero());
    }
    let refill = relax.gamma_transit / T::lit(GROUND.len() as f64);
    for g in GROUND {
        for k in 0..N {
            l[(g * N + g, k * N + k)] += Complex::new(refill, T::zero());
        }
    }
    l
}

/// A 13×13 density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix<T> {
    rho: DenseMatrix<Complex<T>>,
}

impl<T: Real> DensityMatrix<T> {
    pub fn from_matrix(rho: DenseMatrix<Complex<T>>) -> Result<Self> {
        if rho.rows() != N || rho.cols() != N {
            return Err(EitError::invalid("density matrix must be 13x13"));
        }
        Ok(Self { rho })
    }

    fn from_flat(x: Vec<Complex<T>>) -> Self {
        Self {
            rho: DenseMatrix::from_row_major(N, N, x),
        }
    }

    pub fn matrix(&self) -> &DenseMatrix<Complex<T>> {
        &self.rho
    }

    pub fn get(&self, i: usize, j: usize) -> Complex<T> {
        self.rho[(i, j)]
    }

    pub fn population(&self, i: usize) -> T {
        self.rho[(i, i)].re
    }

    pub fn trace(&self) -> Complex<T> {
        self.rho.trace()
    }

    pub fn hermiticity_residual(&self) -> T {
        self.rho.hermiticity_residual()
    }

    pub fn min_eigenvalue(&self) -> T {
        hermitian_eigenvalues(&self.rho)[0]
    }

    /// Cheap positivity test against the default eigenvalue floor.
    pub fn is_positive(&self) -> bool {
        is_positive_above(&self.rho, -T::lit(EIGENVALUE_FLOOR))
    }

    pub fn as_flat(&self) -> &[Complex<T>] {
        self.rho.as_slice()
    }

    /// Convex combination `Σ w_k ρ_k`.
    pub fn weighted_sum<'a>(parts: impl IntoIterator<Item = (T, &'a DensityMatrix<T>)>) -> Self {
        let mut acc = vec![Complex::zero(); NN];
        for (w, rho) in parts {
            for (a, &x) in acc.iter_mut().zip(rho.as_flat()) {
                *a += x * w;
            }
        }
        Self::from_flat(acc)
    }
}

/// Steady state plus the numbers needed to trust it.
#[derive(Debug, Clone)]
pub struct SteadyState<T> {
    pub rho: DensityMatrix<T>,
    pub residual: T,
    pub pivot_ratio: T,
}

/// Solves `L ρ = 0`, `Tr ρ = 1` for a Hamiltonian and relaxation model.
pub fn steady_state<T: Real>(h: &RwaHamiltonian<T>, relax: &RelaxationModel<T>) -> Result<DensityMatrix<T>> {
    Ok(solve_generator(liouvillian(h, relax))?.rho)
}

/// Steady state of an explicit 169×169 generator.
///
/// Hermiticity is imposed through the real parametrization
/// (`Re ρ_ij` in the upper triangle, `Im ρ_ij` in the lower, populations on
/// the diagonal), which keeps the system at 169 real unknowns.
pub fn solve_generator<T: Real>(l: DenseMatrix<Complex<T>>) -> Result<SteadyState<T>> {
    if l.rows() != NN || l.cols() != NN {
        return Err(EitError::invalid("generator must be 169x169"));
    }
    let mut a = realify(&l);
    replace_trace_row(&mut a, T::one());
    let (y, residual, (lo, hi)) = solve_checked(a)?;
    Ok(SteadyState {
        rho: rho_from_real(&y),
        residual,
        pivot_ratio: hi / lo,
    })
}

/// Same steady state from the complex system, without assuming ρ = ρ†.
pub fn solve_generator_complex<T: Real>(l: DenseMatrix<Complex<T>>) -> Result<SteadyState<T>> {
    if l.rows() != NN || l.cols() != NN {
        return Err(EitError::invalid("generator must be 169x169"));
    }
    let mut a = l;
    replace_trace_row(&mut a, Complex::one());
    let (x, residual, (lo, hi)) = solve_checked(a)?;
    Ok(SteadyState {
        rho: DensityMatrix::from_flat(x),
        residual,
        pivot_ratio: hi / lo,
    })
}

fn rho_from_real<T: Real>(y: &[T]) -> DensityMatrix<T> {
    let mut rho = vec![Complex::zero(); NN];
    for i in 0..N {
        rho[i * N + i] = Complex::new(y[i * N + i], T::zero());
        for j in i + 1..N {
            let z = Complex::new(y[i * N + j], y[j * N + i]);
            rho[i * N + j] = z;
            rho[j * N + i] = z.conj();
        }
    }
    DensityMatrix::from_flat(rho)
}

/// Real form of the generator acting on the Hermitian parametrization.
fn realify<T: Real>(l: &DenseMatrix<Complex<T>>) -> DenseMatrix<T> {
    let mut m = DenseMatrix::zeros(NN, NN);
    for i in 0..N {
        for j in i..N {
            let src = l.row(i * N + j);
            let (re_row, im_row) = (i * N + j, j * N + i);
            for k in 0..N {
                let c = src[k * N + k];
                m[(re_row, k * N + k)] = c.re;
                if i != j {
                    m[(im_row, k * N + k)] = c.im;
                }
                for q in k + 1..N {
                    let (u, v) = (src[k * N + q], src[q * N + k]);
                    let re_coef = u + v;
                    // i·(u − v)
                    let im_coef = Complex::new(v.im - u.im, u.re - v.re);
                    m[(re_row, k * N + q)] = re_coef.re;
                    m[(re_row, q * N + k)] = im_coef.re;
                    if i != j {
                        m[(im_row, k * N + q)] = re_coef.im;
                        m[(im_row, q * N + k)] = im_coef.im;
                    }
                }
            }
        }
    }
    m
}

/// Row 0 becomes `Σ x_ii = 1`.
fn replace_trace_row<S: LinScalar>(a: &mut DenseMatrix<S>, one: S) {
    for c in a.row_mut(0) {
        *c = S::zero();
    }
    for i in 0..N {
        a[(0, i * N + i)] = one;
    }
}

fn check_pivots<U: Real>(lo: U, hi: U) -> Result<()> {
    let ratio = hi / lo;
    if ratio.to_f64_lossy() < MAX_PIVOT_RATIO {
        Ok(())
    } else {
        Err(EitError::numerical(
            "steady state",
            format!("ill-conditioned Liouvillian (pivot ratio {ratio:e})"),
        ))
    }
}

fn check_residual<U: Real>(residual: U) -> Result<()> {
    if residual.to_f64_lossy() < MAX_RESIDUAL {
        Ok(())
    } else {
        Err(EitError::numerical(
            "steady state",
            format!("residual {residual:e} exceeds {MAX_RESIDUAL:e}"),
        ))
    }
}

fn max_modulus<S: LinScalar>(v: impl IntoIterator<Item = S>) -> S::Modulus {
    v.into_iter()
        .map(|x| x.modulus())
        .fold(S::Modulus::zero(), |m, r| if r > m || r.is_nan() { r } else { m })
}

/// Solves `a x = e_0` and checks conditioning and residual.
#[allow(clippy::type_complexity)]
fn solve_checked<S: LinScalar>(a: DenseMatrix<S>) -> Result<(Vec<S>, S::Modulus, (S::Modulus, S::Modulus))> {
    let mut b = vec![S::zero(); NN];
    b[0] = S::one();
    let keep = a.clone();
    let lu =
        LuFactors::factor(a).map_err(|e| EitError::numerical("steady state", format!("singular Liouvillian: {e}")))?;
    let (lo, hi) = lu.pivot_range();
    check_pivots(lo, hi)?;
    let x = lu.solve(&b);
    let residual = max_modulus(keep.mul_vec(&x).into_iter().zip(&b).map(|(u, &v)| u - v));
    check_residual(residual)?;
    Ok((x, residual, (lo, hi)))
}

/// Steady states of one velocity class over many probe detunings.
///
/// Writing the real system as `M(x) = M₀ + x·D` with `x` the probe-ground
/// detuning, `D` only touches the 60 real unknowns of coherences between a
/// probe-ground level and any other manifold. The other 109 unknowns are
/// eliminated once; each detuning then costs a 60×60 Schur-complement solve.
/// Falls back to a full solve whenever the reduced path is unreliable.
#[derive(Debug, Clone)]
pub struct ClassSolver<T> {
    m0: DenseMatrix<T>,
    /// `(re index, im index, s)`: `D[re, im] = −s`, `D[im, re] = s`.
    rotations: Vec<(usize, usize, T)>,
    reduced: Option<Reduced<T>>,
}

#[derive(Debug, Clone)]
struct Reduced<T> {
    stat: Vec<usize>,
    dynamic: Vec<usize>,
    /// `P⁻¹ Q`, static × dynamic
    z: DenseMatrix<T>,
    /// `P⁻¹ b`
    z0: Vec<T>,
    /// `S − R P⁻¹ Q`
    schur: DenseMatrix<T>,
    /// `−R P⁻¹ b`
    rhs: Vec<T>,
    /// rotations in dynamic-local indices
    local: Vec<(usize, usize, T)>,
    p_range: (T, T),
}

impl<T: Real> ClassSolver<T> {
    /// `energies` are the level energies at zero probe-ground detuning.
    pub fn new(base: &LiouvillianBase<T>, energies: &[T; N]) -> Self {
        let mut m0 = realify(&base.with_energies(energies));
        replace_trace_row(&mut m0, T::one());
        let mut rotations = Vec::new();
        for i in 0..N {
            for j in i + 1..N {
                let s = indicator(PROBE_GROUND.contains(&j)) - indicator(PROBE_GROUND.contains(&i));
                if s != 0 {
                    rotations.push((i * N + j, j * N + i, T::lit(s as f64)));
                }
            }
        }
        let reduced = Reduced::build(&m0, &rotations);
        Self { m0, rotations, reduced }
    }

    fn apply(&self, x: T, y: &[T]) -> Vec<T> {
        let mut out = self.m0.mul_vec(y);
        for &(re, im, s) in &self.rotations {
            out[re] -= x * s * y[im];
            out[im] += x * s * y[re];
        }
        out
    }

    fn full_matrix(&self, x: T) -> DenseMatrix<T> {
        let mut m = self.m0.clone();
        for &(re, im, s) in &self.rotations {
            m[(re, im)] -= x * s;
            m[(im, re)] += x * s;
        }
        m
    }

    /// Steady state at probe-ground detuning `x`.
    pub fn solve(&self, x: T) -> Result<SteadyState<T>> {
        if let Some(r) = &self.reduced {
            if let Ok(y) = r.solve(x) {
                let (y, (lo, hi)) = y;
                let mut res = self.apply(x, &y);
                res[0] -= T::one();
                let residual = max_modulus(res);
                if residual.to_f64_lossy() < MAX_RESIDUAL && check_pivots(lo, hi).is_ok() {
                    return Ok(SteadyState {
                        rho: rho_from_real(&y),
                        residual,
                        pivot_ratio: hi / lo,
                    });
                }
            }
        }
        let (y, residual, (lo, hi)) = solve_checked(self.full_matrix(x))?;
        Ok(SteadyState {
            rho: rho_from_real(&y),
            residual,
            pivot_ratio: hi / lo,
        })
    }

    /// Whether the reduced path is available.
    pub fn is_reduced(&self) -> bool {
        self.reduced.is_some()
    }
}

fn indicator(b: bool) -> i32 {
    i32::from(b)
}

impl<T: Real> Reduced<T> {
    fn build(m0: &DenseMatrix<T>, rotations: &[(usize, usize, T)]) -> Option<Self> {
        let mut is_dyn = [false; NN];
        for &(re, im, _) in rotations {
            is_dyn[re] = true;
            is_dyn[im] = true;
        }
        let stat: Vec<usize> = (0..NN).filter(|&k| !is_dyn[k]).collect();
        let dynamic: Vec<usize> = (0..NN).filter(|&k| is_dyn[k]).collect();
        let (ns, nd) = (stat.len(), dynamic.len());
        if is_dyn[0] {
            return None;
        }
        let p = DenseMatrix::from_fn(ns, ns, |a, b| m0[(stat[a], stat[b])]);
        let lu = p.lu().ok()?;
        let p_range = lu.pivot_range();
        let mut z = DenseMatrix::zeros(ns, nd);
        let mut col = vec![T::zero(); ns];
        for (b, &d) in dynamic.iter().enumerate() {
            for (a, &st) in stat.iter().enumerate() {
                col[a] = m0[(st, d)];
            }
            for (a, v) in lu.solve(&col).into_iter().enumerate() {
                z[(a, b)] = v;
            }
        }
        let mut e0 = vec![T::zero(); ns];
        // row 0 (the trace row) is static and first in `stat`
        e0[0] = T::one();
        let z0 = lu.solve(&e0);
        let mut schur = DenseMatrix::from_fn(nd, nd, |a, b| m0[(dynamic[a], dynamic[b])]);
        let mut rhs = vec![T::zero(); nd];
        for (a, &d) in dynamic.iter().enumerate() {
            let row = m0.row(d);
            let mut acc = T::zero();
            for (k, &st) in stat.iter().enumerate() {
                let r = row[st];
                if r == T::zero() {
                    continue;
                }
                acc += r * z0[k];
                let zrow = z.row(k);
                for (s, &zv) in schur.row_mut(a).iter_mut().zip(zrow) {
                    *s -= r * zv;
                }
            }
            rhs[a] = -acc;
        }
        let mut local_index = vec![usize::MAX; NN];
        for (a, &d) in dynamic.iter().enumerate() {
            local_index[d] = a;
        }
        let local = rotations
            .iter()
            .map(|&(re, im, s)| (local_index[re], local_index[im], s))
            .collect();
        Some(Self {
            stat,
            dynamic,
            z,
            z0,
            schur,
            rhs,
            local,
            p_range,
        })
    }

    #[allow(clippy::type_complexity)]
    fn solve(&self, x: T) -> std::result::Result<(Vec<T>, (T, T)), crate::linalg::SingularMatrix> {
        let mut s = self.schur.clone();
        for &(re, im, sg) in &self.local {
            s[(re, im)] -= x * sg;
            s[(im, re)] += x * sg;
        }
        let lu = s.lu()?;
        let (lo, hi) = lu.pivot_range();
        let yd = lu.solve(&self.rhs);
        let mut y = vec![T::zero(); NN];
        for (a, &st) in self.stat.iter().enumerate() {
            let zrow = self.z.row(a);
            let mut v = self.z0[a];
            for (&zv, &d) in zrow.iter().zip(&yd) {
                v -= zv * d;
            }
            y[st] = v;
        }
        for (a, &d) in self.dynamic.iter().enumerate() {
            y[d] = yd[a];
        }
        Ok((y, (lo.min(self.p_range.0), hi.max(self.p_range.1))))
    }
}

/// `χ = N0 Σ conj(Ω_eg) ρ_eg / E_p²` over the probe branch.
///
/// Projecting each coherence on its own drive makes Im χ positive for
/// absorption regardless of the polarization phase.
pub fn susceptibility<T: Real>(
    rho: &DensityMatrix<T>,
    rabi: &RabiSet<T>,
    probe_amplitude: T,
    n0: T,
) -> Result<Complex<T>> {
    if !(probe_amplitude.is_finite() && probe_amplitude > T::zero()) {
        return Err(EitError::invalid(
            "probe amplitude must be positive to normalize the susceptibility",
        ));
    }
    let s: Complex<T> = rabi.probe_pairs().map(|(e, g, w)| w.conj() * rho.get(e, g)).sum();
    Ok(s * (n0 / (probe_amplitude * probe_amplitude)))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SusceptibilitySample<T> {
    pub delta_p: T,
    pub chi: Complex<T>,
}

impl<T: Real> SusceptibilitySample<T> {
    pub fn absorption(&self) -> T {
        self.chi.im
    }
}

/// Discrete velocity classes `(k·v in MHz, weight)` with weights summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityGrid<T> {
    classes: Vec<(T, T)>,
}

impl<T: Real> VelocityGrid<T> {
    /// Only atoms at rest.
    pub fn zero_velocity() -> Self {
        Self {
            classes: vec![(T::zero(), T::one())],
        }
    }

    pub fn from_classes(classes: Vec<(T, T)>) -> Result<Self> {
        if classes.is_empty() {
            return Err(EitError::invalid("velocity grid is empty"));
        }
        let total: T = classes.iter().map(|c| c.1).sum();
        if classes.iter().any(|c| !c.0.is_finite() || !(c.1 >= T::zero())) || !(total > T::zero()) {
            return Err(EitError::invalid(
                "velocity weights must be nonnegative with positive sum",
            ));
        }
        Ok(Self {
            classes: classes.into_iter().map(|(v, w)| (v, w / total)).collect(),
        })
    }

    /// Gauss–Hermite nodes for a Gaussian Doppler profile of the given FWHM.
    pub fn gauss_hermite(fwhm: T, n: usize) -> Result<Self> {
        check_fwhm(fwhm)?;
        if n == 0 {
            return Err(EitError::invalid("need at least one velocity class"));
        }
        let sigma = fwhm / fwhm_per_sigma::<T>();
        let (x, w) = gauss_hermite_rule(n);
        let s2 = sigma * T::SQRT_2();
        Self::from_classes(x.iter().zip(&w).map(|(&x, &w)| (s2 * T::lit(x), T::lit(w))).collect())
    }

    /// Classes on `kv = a·sinh(t)` with uniform `t`, clustering nodes near
    /// zero velocity where the sub-natural features live. `core` is the
    /// spacing of the innermost classes (MHz); the grid reaches ±4σ.
    pub fn sinh_mapped(fwhm: T, n: usize, core: T) -> Result<Self> {
        check_fwhm(fwhm)?;
        if n < 3 || n.is_multiple_of(2) {
            return Err(EitError::invalid("sinh velocity grid needs an odd count of at least 3"));
        }
        if !(core.is_finite() && core > T::zero()) {
            return Err(EitError::invalid("core spacing must be positive"));
        }
        let sigma = fwhm / fwhm_per_sigma::<T>();
        let t_max = (T::lit(4.0) * sigma / core).asinh();
        let dt = T::lit(2.0) * t_max / T::lit((n - 1) as f64);
        let classes = (0..n)
            .map(|k| {
                let t = -t_max + dt * T::lit(k as f64);
                let v = core * t.sinh();
                let w = (-(v * v) / (T::lit(2.0) * sigma * sigma)).exp() * core * t.cosh() * dt;
                (v, w)
            })
            .collect();
        Self::from_classes(classes)
    }

    pub fn classes(&self) -> &[(T, T)] {
        &self.classes
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }
}

fn check_fwhm<T: Real>(fwhm: T) -> Result<()> {
    if fwhm.is_finite() && fwhm > T::zero() {
        Ok(())
    } else {
        Err(EitError::invalid("Doppler FWHM must be positive"))
    }
}

fn fwhm_per_sigma<T: Real>() -> T {
    T::lit(2.0 * (2.0 * std::f64::consts::LN_2).sqrt())
}

/// Nodes and weights for ∫ e^{−x²} f(x) dx, weights normalized to sum 1.
fn gauss_hermite_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let m = n.div_ceil(2);
    let mut z = 0.0f64;
    for i in 0..m {
        z = match i {
            0 => (2.0 * n as f64 + 1.0).sqrt() - 1.85575 * (2.0 * n as f64 + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * (n as f64).powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let mut p1 = pim4;
            let mut p2 = 0.0;
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
            }
            pp = (2.0 * n as f64).sqrt() * p2;
            let dz = p1 / pp;
            z -= dz;
            if dz.abs() < 1e-15 {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    x.reverse();
    w.reverse();
    (x, w)
}

/// How thoroughly [`probe_scan`] checks positivity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PositivityCheck {
    /// Cholesky test on every velocity class and exact minimum eigenvalue of
    /// the velocity-averaged state at every detuning.
    #[default]
    Full,
    /// Exact minimum eigenvalue of the averaged state only.
    AveragedOnly,
    Off,
}

/// Everything needed for a probe scan.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanConfig<T> {
    pub geometry: FieldGeometry<T>,
    /// Total probe Rabi frequency E_p (MHz).
    pub probe_rabi: T,
    /// Total pump Rabi frequency E_c (MHz).
    pub pump_rabi: T,
    pub delta_c: T,
    pub gamma_transit: T,
    pub gamma_ground: T,
    pub constants: PhysicalConstants<T>,
    pub n0: T,
    pub velocity: VelocityGrid<T>,
    pub positivity: PositivityCheck,
}

impl<T: Real> ScanConfig<T> {
    /// Default rates and zero-velocity atoms for beams of the given intensities (mW/cm²).
    pub fn from_intensities(geometry: FieldGeometry<T>, probe_intensity: T, pump_intensity: T) -> Result<Self> {
        let constants = PhysicalConstants::default();
        Ok(Self {
            geometry,
            probe_rabi: rabi_amplitude(probe_intensity, &constants)?,
            pump_rabi: rabi_amplitude(pump_intensity, &constants)?,
            delta_c: T::zero(),
            gamma_transit: T::lit(0.01),
            gamma_ground: T::lit(0.03),
            constants,
            n0: T::one(),
            velocity: VelocityGrid::zero_velocity(),
            positivity: PositivityCheck::default(),
        })
    }

    /// Two-photon peak spacing δ for this field (MHz).
    pub fn spacing(&self) -> T {
        self.constants.spacing_slope() * self.geometry.b_mag
    }
}

/// Worst-case invariant numbers over a scan.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ScanDiagnostics {
    pub solves: usize,
    /// max |Tr ρ − 1| over every solve.
    pub worst_trace_error: f64,
    /// max ‖ρ − ρ†‖ over every solve.
    pub worst_hermiticity: f64,
    pub worst_residual: f64,
    pub worst_pivot_ratio: f64,
    /// Smallest eigenvalue of the velocity-averaged state over the scan.
    pub min_eigenvalue: f64,
    /// Individual solves failing the Cholesky positivity test.
    pub positivity_violations: usize,
}

impl ScanDiagnostics {
    fn new() -> Self {
        Self {
            solves: 0,
            worst_trace_error: 0.0,
            worst_hermiticity: 0.0,
            worst_residual: 0.0,
            worst_pivot_ratio: 0.0,
            min_eigenvalue: f64::INFINITY,
            positivity_violations: 0,
        }
    }

    fn merge(mut self, o: Self) -> Self {
        self.solves += o.solves;
        self.worst_trace_error = self.worst_trace_error.max(o.worst_trace_error);
        self.worst_hermiticity = self.worst_hermiticity.max(o.worst_hermiticity);
        self.worst_residual = self.worst_residual.max(o.worst_residual);
        self.worst_pivot_ratio = self.worst_pivot_ratio.max(o.worst_pivot_ratio);
        self.min_eigenvalue = self.min_eigenvalue.min(o.min_eigenvalue);
        self.positivity_violations += o.positivity_violations;
        self
    }

    fn absorb_solve<T: Real>(&mut self, s: &SteadyState<T>) {
        self.solves += 1;
        self.worst_trace_error = self
            .worst_trace_error
            .max((s.rho.trace() - Complex::one()).norm().to_f64_lossy());
        self.worst_hermiticity = self.worst_hermiticity.max(s.rho.hermiticity_residual().to_f64_lossy());
        self.worst_residual = self.worst_residual.max(s.residual.to_f64_lossy());
        self.worst_pivot_ratio = self.worst_pivot_ratio.max(s.pivot_ratio.to_f64_lossy());
    }

    /// True when every tracked invariant is within the density-matrix tolerances.
    pub fn invariants_hold(&self) -> bool {
        self.worst_trace_error <= 1e-9
            && self.worst_hermiticity < 1e-10
            && self.min_eigenvalue >= EIGENVALUE_FLOOR
            && self.positivity_violations == 0
    }
}

#[derive(Debug, Clone)]
pub struct ScanResult<T> {
    pub samples: Vec<SusceptibilitySample<T>>,
    pub diagnostics: ScanDiagnostics,
}

/// Per-scan state shared by every detuning: the scheme, couplings and the
/// detuning-independent part of the generator.
#[derive(Debug, Clone)]
pub struct ScanModel<T> {
    scheme: LevelScheme,
    rabi: RabiSet<T>,
    base: LiouvillianBase<T>,
    config: ScanConfig<T>,
}

impl<T: Real> ScanModel<T> {
    pub fn new(config: &ScanConfig<T>) -> Result<Self> {
        let scheme = crate::atomic_structure::build_level_scheme();
        let dipoles = DipoleTable::build(&scheme);
        let g = &config.geometry;
        let probe = decompose_probe(config.probe_rabi, g.phi, g.theta)?;
        let pump = decompose_pump(config.pump_rabi, g.phi, g.theta)?;
        let rabi = RabiSet::build(&probe, &pump, &dipoles);
        let relax = build_relaxation(
            &scheme,
            &dipoles,
            &config.constants,
            config.gamma_transit,
            config.gamma_ground,
        )?;
        if !config.delta_c.is_finite() || !config.n0.is_finite() {
            return Err(EitError::invalid("pump detuning and density scale must be finite"));
        }
        Ok(Self {
            base: LiouvillianBase::new(&rabi, &relax),
            scheme,
            rabi,
            config: config.clone(),
        })
    }

    pub fn rabi(&self) -> &RabiSet<T> {
        &self.rabi
    }

    /// Reduced solver for one velocity class; its argument is the probe-ground
    /// detuning `Δ_p − kv`.
    pub fn class_solver(&self, kv: T) -> ClassSolver<T> {
        let c = &self.config;
        let energies = level_energies(&self.scheme, c.geometry.b_mag, T::zero(), c.delta_c - kv, &c.constants);
        ClassSolver::new(&self.base, &energies)
    }

    /// Steady state of one velocity class by a direct 169-unknown solve. Both
    /// beams co-propagate, so each detuning is shifted by −kv.
    pub fn solve_class(&self, delta_p: T, kv: T) -> Result<SteadyState<T>> {
        let c = &self.config;
        let energies = level_energies(
            &self.scheme,
            c.geometry.b_mag,
            delta_p - kv,
            c.delta_c - kv,
            &c.constants,
        );
        solve_generator(self.base.with_energies(&energies))
    }

    fn finish_point(&self, acc: Vec<Complex<T>>, diag: &mut ScanDiagnostics) -> Result<(DensityMatrix<T>, Complex<T>)> {
        let c = &self.config;
        let rho = DensityMatrix::from_flat(acc);
        if c.positivity != PositivityCheck::Off {
            diag.min_eigenvalue = diag.min_eigenvalue.min(rho.min_eigenvalue().to_f64_lossy());
        }
        let chi = if c.probe_rabi > T::zero() {
            susceptibility(&rho, &self.rabi, c.probe_rabi, c.n0)?
        } else {
            Complex::zero()
        };
        Ok((rho, chi))
    }

    fn accumulate(&self, s: &SteadyState<T>, w: T, acc: &mut [Complex<T>], diag: &mut ScanDiagnostics) {
        diag.absorb_solve(s);
        if self.config.positivity == PositivityCheck::Full && !s.rho.is_positive() {
            diag.positivity_violations += 1;
        }
        for (a, &x) in acc.iter_mut().zip(s.rho.as_flat()) {
            *a += x * w;
        }
    }

    /// Velocity-averaged state, susceptibility and diagnostics at one detuning.
    pub fn solve_point(&self, delta_p: T) -> Result<(DensityMatrix<T>, Complex<T>, ScanDiagnostics)> {
        let mut diag = ScanDiagnostics::new();
        let mut acc = vec![Complex::<T>::zero(); NN];
        for &(kv, w) in self.config.velocity.classes() {
            let s = self.solve_class(delta_p, kv)?;
            self.accumulate(&s, w, &mut acc, &mut diag);
        }
        let (rho, chi) = self.finish_point(acc, &mut diag)?;
        Ok((rho, chi, diag))
    }
}

/// Probe-absorption scan over a sorted detuning grid (MHz). Velocity classes
/// are processed in turn; within a class the grid points are solved in
/// parallel and accumulated in grid order.
pub fn probe_scan<T: Real>(config: &ScanConfig<T>, grid: &[T]) -> Result<ScanResult<T>> {
    if grid.is_empty() {
        return Err(EitError::invalid("detuning grid is empty"));
    }
    if grid.iter().any(|d| !d.is_finite()) || grid.windows(2).any(|w| w[1] < w[0]) {
        return Err(EitError::invalid("detuning grid must be finite and sorted ascending"));
    }
    let model = ScanModel::new(config)?;
    let tag = |index: usize, e: EitError| EitError::ScanPoint {
        index,
        delta_p: grid[index].to_f64_lossy(),
        source: Box::new(e),
    };
    let mut points: Vec<(Vec<Complex<T>>, ScanDiagnostics)> = grid
        .iter()
        .map(|_| (vec![Complex::zero(); NN], ScanDiagnostics::new()))
        .collect();
    for &(kv, w) in config.velocity.classes() {
        let solver = model.class_solver(kv);
        points
            .par_iter_mut()
            .zip(grid.par_iter())
            .enumerate()
            .try_for_each(|(index, ((acc, diag), &delta_p))| {
                let s = solver.solve(delta_p - kv).map_err(|e| tag(index, e))?;
                model.accumulate(&s, w, acc, diag);
                Ok::<(), EitError>(())
            })?;
    }
    let finished: Vec<(SusceptibilitySample<T>, ScanDiagnostics)> = points
        .into_par_iter()
        .zip(grid.par_iter())
        .enumerate()
        .map(|(index, ((acc, mut diag), &delta_p))| {
            let (_, chi) = model.finish_point(acc, &mut diag).map_err(|e| tag(index, e))?;
            Ok((SusceptibilitySample { delta_p, chi }, diag))
        })
        .collect::<Result<_>>()?;
    let diagnostics = finished
        .iter()
        .fold(ScanDiagnostics::new(), |acc, (_, d)| acc.merge(*d));
    Ok(ScanResult {
        samples: finished.into_iter().map(|(s, _)| s).collect(),
        diagnostics,
    })
}

/// `n` evenly spaced points on `[lo, hi]`.
pub fn linear_grid<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => {
            let step = (hi - lo) / T::lit((n - 1) as f64);
            (0..n).map(|k| lo + step * T::lit(k as f64)).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::atomic_structure::{build_level_scheme, PUMP_GROUND};
    use crate::field_geometry::geometry_from_fields;
    use approx::assert_abs_diff_eq;

    struct Fixture {
        scheme: LevelScheme,
        dipoles: DipoleTable<f64>,
        constants: PhysicalConstants<f64>,
    }

    fn fixture() -> Fixture {
        let scheme = build_level_scheme();
        let dipoles = DipoleTable::build(&scheme);
        Fixture {
            scheme,
            dipoles,
            constants: PhysicalConstants::default(),
        }
    }

    fn components(
        ep: f64,
        ec: f64,
        phi_deg: f64,
        theta_deg: f64,
    ) -> (SphericalComponents<f64>, SphericalComponents<f64>) {
        let (p, t) = (phi_deg.to_radians(), theta_deg.to_radians());
        (decompose_probe(ep, p, t).unwrap(), decompose_pump(ec, p, t).unwrap())
    }

    #[test]
    fn rabi_from_intensity() {
        let c = PhysicalConstants::default();
        assert_abs_diff_eq!(rabi_amplitude(17.5, &c).unwrap(), 13.889, epsilon = 1e-3);
        assert_abs_diff_eq!(rabi_amplitude(0.1, &c).unwrap(), 1.0500, epsilon = 1e-3);
        assert!(rabi_amplitude(-1.0, &c).is_err());
    }

    #[test]
    fn pi_couplings_vanish_along_beam_axis() {
        let f = fixture();
        let (p, c) = components(1.0, 10.0, 0.0, 0.0);
        let h = build_hamiltonian(&f.scheme, &p, &c, &f.dipoles, 0.0, 0.0, 4.26, &f.constants).unwrap();
        for e in EXCITED {
            for g in GROUND {
                if f.scheme.level(e).m == f.scheme.level(g).m {
                    assert_eq!(h.h[(e, g)], Complex::zero());
                }
            }
        }
    }

    #[test]
    fn transverse_field_selects_probe_pi_and_pump_sigma() {
        let f = fixture();
        let (p, c) = components(1.0, 10.0, 0.0, 90.0);
        let h = build_hamiltonian(&f.scheme, &p, &c, &f.dipoles, 0.0, 0.0, 6.0, &f.constants).unwrap();
        for e in EXCITED {
            for g in GROUND {
                let q = f.scheme.level(e).m - f.scheme.level(g).m;
                let v = h.h[(e, g)].norm();
                if PROBE_GROUND.contains(&g) && q != 0 || PUMP_GROUND.contains(&g) && q == 0 {
                    assert!(v < 1e-15, "e={e} g={g}");
                }
            }
        }
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        let f = fixture();
        let (p, c) = components(1.05, 13.9, 40.0, 44.8);
        let h = build_hamiltonian(&f.scheme, &p, &c, &f.dipoles, 3.0, 0.0, 6.004, &f.constants).unwrap();
        assert!(h.h.hermiticity_residual() < 1e-14);
        assert!(build_hamiltonian(&f.scheme, &p, &c, &f.dipoles, f64::NAN, 0.0, 1.0, &f.constants).is_err());
    }

    #[test]
    fn branching_sums_to_gamma() {
        let f = fixture();
        let r = build_relaxation(&f.scheme, &f.dipoles, &f.constants, 0.01, 0.03).unwrap();
        for e in EXCITED {
            let total: f64 = r.branching.iter().filter(|b| b.0 == e).map(|b| b.2).sum();
            assert_abs_diff_eq!(total, f.constants.gamma, epsilon = 1e-12);
        }
        assert!(build_relaxation(&f.scheme, &f.dipoles, &f.constants, 0.05, 0.03).is_err());
    }

    #[test]
    fn generator_conserves_population() {
        let f = fixture();
        let (p, c) = components(1.0, 10.0, 40.0, 44.8);
        let h = build_hamiltonian(&f.scheme, &p, &c, &f.dipoles, 1.0, 0.5, 6.0, &f.constants).unwrap();
        let r = build_relaxation(&f.scheme, &f.dipoles, &f.constants, 0.01, 0.03).unwrap();
        let l = liouvillian(&h, &r);
        for col in 0..NN {
            let s: Complex<f64> = (0..N).map(|i| l[(i * N + i, col)]).sum();
            assert!(s.norm() < 1e-12, "column {col}");
        }
    }

    #[test]
    fn dark_fields_give_uniform_ground_populations() {
        let f = fixture();
        let (p, c) = components(0.0, 0.0, 0.0, 30.0);
        let h = build_hamiltonian(&f.scheme, &p, &c, &f.dipoles, 2.0, 0.0, 5.0, &f.constants).unwrap();
        let r = build_relaxation(&f.scheme, &f.dipoles, &f.constants, 0.01, 0.03).unwrap();
        let rho = steady_state(&h, &r).unwrap();
        for g in GROUND {
            assert_abs_diff_eq!(rho.population(g), 0.125, epsilon = 1e-12);
        }
        for e in EXCITED {
            assert!(rho.population(e).abs() < 1e-12);
        }
        for i in 0..N {
            for j in 0..N {
                if i != j {
                    assert!(rho.get(i, j).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pump_alone_empties_its_ground_manifold() {
        let f = fixture();
        let (p, c) = components(0.0, 13.9, 0.0, 0.0);
        let h = build_hamiltonian(&f.scheme, &p, &c, &f.dipoles, 0.0, 0.0, 4.26, &f.constants).unwrap();
        let r = build_relaxation(&f.scheme, &f.dipoles, &f.constants, 0.01, 0.03).unwrap();
        let rho = steady_state(&h, &r).unwrap();
        let f1: f64 = PROBE_GROUND.map(|i| rho.population(i)).sum();
        let f2: f64 = PUMP_GROUND.map(|i| rho.population(i)).sum();
        assert!(f2 < f1, "F=2 {f2} vs F=1 {f1}");
        assert_abs_diff_eq!(rho.trace().re, 1.0, epsilon = 1e-12);
        assert!(rho.min_eigenvalue() > -1e-10);
    }

    #[test]
    fn real_and_complex_solvers_agree() {
        let f = fixture();
        let (p, c) = components(1.05, 13.9, 40.0, 44.8);
        let h = build_hamiltonian(&f.scheme, &p, &c, &f.dipoles, 2.1, -0.4, 6.004, &f.constants).unwrap();
        let r = build_relaxation(&f.scheme, &f.dipoles, &f.constants, 0.01, 0.03).unwrap();
        let a = solve_generator(liouvillian(&h, &r)).unwrap();
        let b = solve_generator_complex(liouvillian(&h, &r)).unwrap();
        for (x, y) in a.rho.as_flat().iter().zip(b.rho.as_flat()) {
            assert!((x - y).norm() < 1e-12);
        }
        assert!(b.rho.hermiticity_residual() < 1e-12);
    }

    #[test]
    fn reduced_class_solver_matches_direct_solve() {
        let g = geometry_from_fields(4.26, 4.23, 40f64.to_radians()).unwrap();
        let cfg = ScanConfig::from_intensities(g, 0.1, 17.5).unwrap();
        let model = ScanModel::new(&cfg).unwrap();
        for kv in [0.0, -37.0, 250.0] {
            let solver = model.class_solver(kv);
            assert!(solver.is_reduced());
            for d in [-12.0, 0.0, 4.2016, 9.5] {
                let a = solver.solve(d - kv).unwrap();
                let b = model.solve_class(d, kv).unwrap();
                for (x, y) in a.rho.as_flat().iter().zip(b.rho.as_flat()) {
                    assert!((x - y).norm() < 1e-11, "kv={kv} d={d}");
                }
            }
        }
    }

    #[test]
    fn susceptibility_guards_and_zero_coherence() {
        let f = fixture();
        let (p, c) = components(1.0, 10.0, 0.0, 0.0);
        let rabi = RabiSet::build(&p, &c, &f.dipoles);
        let mut m = DenseMatrix::zeros(N, N);
        m[(0, 0)] = Complex::one();
        let rho = DensityMatrix::from_matrix(m).unwrap();
        assert_eq!(susceptibility(&rho, &rabi, 1.0, 1.0).unwrap(), Complex::zero());
        assert!(susceptibility(&rho, &rabi, 0.0, 1.0).is_err());
    }

    #[test]
    fn eit_dip_at_two_photon_resonance() {
        let g = geometry_from_fields(4.26, 0.0, 0.0).unwrap();
        let cfg = ScanConfig::from_intensities(g, 0.1, 17.5).unwrap();
        let model = ScanModel::new(&cfg).unwrap();
        let at = |d: f64| model.solve_point(d).unwrap().1.im;
        // the m-symmetric σσ resonance sits at zero detuning
        assert!(at(0.0) < at(0.3) && at(0.0) < at(-0.3));
    }

    #[test]
    fn weak_probe_is_linear() {
        // probe-driven Zeeman pumping competes with the 10 kHz transit refill,
        // so the deviation from linearity grows as E_p²
        let g = geometry_from_fields(4.26, 4.23, 40f64.to_radians()).unwrap();
        let mut cfg = ScanConfig::from_intensities(g, 0.1, 17.5).unwrap();
        let mut deviation = |ep: f64| {
            cfg.probe_rabi = ep;
            let full = ScanModel::new(&cfg).unwrap().solve_point(1.3).unwrap().1;
            cfg.probe_rabi = ep / 2.0;
            let half = ScanModel::new(&cfg).unwrap().solve_point(1.3).unwrap().1;
            (full.im / half.im - 1.0).abs()
        };
        let small = deviation(6.066 / 200.0);
        assert!(small < 1e-3, "{small}");
        let large = deviation(6.066 / 20.0);
        assert_abs_diff_eq!(large / small, 100.0, epsilon = 5.0);
    }

    #[test]
    fn scan_validates_grid() {
        let g = geometry_from_fields(1.0, 0.0, 0.0).unwrap();
        let cfg = ScanConfig::from_intensities(g, 0.1, 17.5).unwrap();
        assert!(probe_scan(&cfg, &[]).is_err());
        assert!(probe_scan(&cfg, &[1.0, 0.0]).is_err());
    }

    #[test]
    fn velocity_grids_are_normalized() {
        let gh = VelocityGrid::<f64>::gauss_hermite(512.0, 21).unwrap();
        let sum: f64 = gh.classes().iter().map(|c| c.1).sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
        let var: f64 = gh.classes().iter().map(|c| c.0 * c.0 * c.1).sum();
        let sigma = 512.0 / (2.0 * (2.0 * std::f64::consts::LN_2).sqrt());
        assert_abs_diff_eq!(var.sqrt(), sigma, epsilon = 1e-9 * sigma);
        let sh = VelocityGrid::<f64>::sinh_mapped(512.0, 61, 4.0).unwrap();
        let var: f64 = sh.classes().iter().map(|c| c.0 * c.0 * c.1).sum();
        assert!((var.sqrt() / sigma - 1.0).abs() < 1e-3);
        assert!(VelocityGrid::<f64>::sinh_mapped(512.0, 60, 4.0).is_err());
    }

    #[test]
    fn gauss_hermite_matches_low_order_rule() {
        // n = 3: nodes 0, ±sqrt(3/2); weights 2/3, 1/6, 1/6 after normalization
        let (x, w) = gauss_hermite_rule(3);
        assert_abs_diff_eq!(x[0], -(1.5f64).sqrt(), epsilon = 1e-13);
        assert_abs_diff_eq!(x[1], 0.0, epsilon = 1e-13);
        assert_abs_diff_eq!(w[1], 2.0 / 3.0, epsilon = 1e-13);
        assert_abs_diff_eq!(w[2], 1.0 / 6.0, epsilon = 1e-13);
    }
}
