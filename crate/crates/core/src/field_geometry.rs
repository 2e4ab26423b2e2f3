//! Beam polarizations expressed in the frame whose z′ axis is the static field.
//!
//! Both beams propagate along z. The probe is polarized along
//! (cos φ, sin φ, 0), the pump along (−sin φ, cos φ, 0), and the field lies in
//! the x–z plane at angle θ from z.

use num_complex::Complex;

use crate::error::{EitError, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldGeometry<T> {
    /// Longitudinal field component along the beams, Gauss.
    pub beta_l: T,
    /// Transverse field component, Gauss.
    pub beta_t: T,
    /// Angle between B and the propagation axis, radians.
    pub theta: T,
    pub b_mag: T,
    /// Rotation of the probe polarization away from x, radians.
    pub phi: T,
}

/// Builds the geometry from coil fields. Both components must be
/// nonnegative and not both zero.
pub fn geometry_from_fields<T: Real>(beta_l: T, beta_t: T, phi: T) -> Result<FieldGeometry<T>> {
    for (name, v) in [("beta_l", beta_l), ("beta_t", beta_t), ("phi", phi)] {
        if !v.is_finite() {
            return Err(EitError::invalid(format!("{name} must be finite")));
        }
    }
    if beta_l < T::zero() || beta_t < T::zero() {
        return Err(EitError::invalid("field components must be nonnegative"));
    }
    if beta_l == T::zero() && beta_t == T::zero() {
        return Err(EitError::DegenerateQuantizationAxis);
    }
    Ok(FieldGeometry {
        beta_l,
        beta_t,
        theta: beta_t.atan2(beta_l),
        b_mag: beta_l.hypot(beta_t),
        phi,
    })
}

impl<T: Real> FieldGeometry<T> {
    /// Geometry from magnitude and polar angle θ ∈ [0, π/2].
    pub fn from_polar(b_mag: T, theta: T, phi: T) -> Result<Self> {
        if !(b_mag.is_finite() && b_mag > T::zero()) {
            return Err(EitError::invalid("field magnitude must be positive"));
        }
        if !(theta >= T::zero() && theta <= T::FRAC_PI_2()) {
            return Err(EitError::invalid("theta must lie in [0, 90] degrees"));
        }
        let mut g = geometry_from_fields(b_mag * theta.cos(), b_mag * theta.sin(), phi)?;
        g.theta = theta;
        g.b_mag = b_mag;
        Ok(g)
    }

    pub fn theta_deg(&self) -> T {
        self.theta.to_degrees()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BeamRole {
    Probe,
    Pump,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamField<T> {
    pub amplitude: T,
    pub role: BeamRole,
}

impl<T: Real> BeamField<T> {
    pub fn new(amplitude: T, role: BeamRole) -> Result<Self> {
        if !(amplitude.is_finite() && amplitude >= T::zero()) {
            return Err(EitError::invalid("beam amplitude must be finite and nonnegative"));
        }
        Ok(Self { amplitude, role })
    }

    pub fn decompose(&self, phi: T, theta: T) -> Result<SphericalComponents<T>> {
        match self.role {
            BeamRole::Probe => decompose_probe(self.amplitude, phi, theta),
            BeamRole::Pump => decompose_pump(self.amplitude, phi, theta),
        }
    }
}

/// π, σ₊, σ₋ amplitudes of one beam.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SphericalComponents<T> {
    pub pi: Complex<T>,
    pub sigma_plus: Complex<T>,
    pub sigma_minus: Complex<T>,
}

impl<T: Real> SphericalComponents<T> {
    /// Component driving Δm = q (q = m_e − m_g).
    pub fn component(&self, q: i32) -> Complex<T> {
        match q {
            0 => self.pi,
            1 => self.sigma_plus,
            -1 => self.sigma_minus,
            _ => Complex::new(T::zero(), T::zero()),
        }
    }

    pub fn power(&self) -> T {
        self.pi.norm_sqr() + self.sigma_plus.norm_sqr() + self.sigma_minus.norm_sqr()
    }

    /// ⟨self, other⟩ = Σ_q conj(self_q)·other_q
    pub fn inner(&self, other: &Self) -> Complex<T> {
        self.pi.conj() * other.pi
            + self.sigma_plus.conj() * other.sigma_plus
            + self.sigma_minus.conj() * other.sigma_minus
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            pi: self.pi * s,
            sigma_plus: self.sigma_plus * s,
            sigma_minus: self.sigma_minus * s,
        }
    }
}

fn check_amplitude<T: Real>(e: T) -> Result<()> {
    if e.is_finite() && e >= T::zero() {
        Ok(())
    } else {
        Err(EitError::invalid("beam amplitude must be finite and nonnegative"))
    }
}

pub fn decompose_probe<T: Real>(e_p: T, phi: T, theta: T) -> Result<SphericalComponents<T>> {
    check_amplitude(e_p)?;
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let h = e_p * T::FRAC_1_SQRT_2();
    Ok(SphericalComponents {
        pi: Complex::new(e_p * cp * st, T::zero()),
        sigma_plus: Complex::new(-h * cp * ct, -h * sp),
        sigma_minus: Complex::new(h * cp * ct, -h * sp),
    })
}

/// Pump decomposition. The π component is −E_c·sin φ·sin θ, the projection
/// of (−sin φ, cos φ, 0) onto the field direction.
pub fn decompose_pump<T: Real>(e_c: T, phi: T, theta: T) -> Result<SphericalComponents<T>> {
    check_amplitude(e_c)?;
    let (sp, cp) = phi.sin_cos();
    let (st, ct) = theta.sin_cos();
    let h = e_c * T::FRAC_1_SQRT_2();
    Ok(SphericalComponents {
        pi: Complex::new(-e_c * sp * st, T::zero()),
        sigma_plus: Complex::new(h * sp * ct, -h * cp),
        sigma_minus: Complex::new(-h * sp * ct, -h * cp),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn deg(x: f64) -> f64 {
        x.to_radians()
    }

    #[test]
    fn geometry_examples() {
        let g = geometry_from_fields(4.26, 4.23, deg(40.0)).unwrap();
        assert_abs_diff_eq!(g.theta_deg(), 44.8, epsilon = 0.05);
        assert_abs_diff_eq!(g.b_mag, 6.004, epsilon = 1e-3);
        assert_eq!(geometry_from_fields(1.0, 0.0, 0.3).unwrap().theta, 0.0);
        let g = geometry_from_fields(4.26, 14.1, 0.0).unwrap();
        assert_abs_diff_eq!(g.theta_deg(), 73.2, epsilon = 0.05);
        assert_abs_diff_eq!(g.b_mag, 14.73, epsilon = 5e-3);
    }

    #[test]
    fn geometry_errors() {
        assert_eq!(
            geometry_from_fields(0.0, 0.0, 0.0),
            Err(EitError::DegenerateQuantizationAxis)
        );
        assert!(matches!(
            geometry_from_fields(-1.0, 0.0, 0.0),
            Err(EitError::InvalidArgument(_))
        ));
        assert!(FieldGeometry::from_polar(1.0, 2.0, 0.0).is_err());
    }

    #[test]
    fn from_polar_round_trip() {
        let g = FieldGeometry::from_polar(6.0, deg(30.0), 0.1).unwrap();
        assert_abs_diff_eq!(g.beta_l, 6.0 * deg(30.0).cos(), epsilon = 1e-12);
        assert_abs_diff_eq!(g.beta_t, 3.0, epsilon = 1e-12);
    }

    #[test]
    fn probe_examples() {
        let s = decompose_probe(1.0, 0.0, 0.0).unwrap();
        assert_eq!(s.pi, Complex::new(0.0, 0.0));
        assert_abs_diff_eq!(s.sigma_plus.re, -std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(s.sigma_minus.re, std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);

        let s = decompose_probe(1.0, 0.0, deg(90.0)).unwrap();
        assert_abs_diff_eq!(s.pi.re, 1.0, epsilon = 1e-15);
        assert!(s.sigma_plus.norm() < 1e-15 && s.sigma_minus.norm() < 1e-15);

        let s = decompose_probe(1.0, deg(40.0), deg(44.8)).unwrap();
        assert_abs_diff_eq!(s.pi.re, 0.5397, epsilon = 5e-4);
        assert_abs_diff_eq!(s.sigma_plus.re, -0.3842, epsilon = 5e-4);
        assert_abs_diff_eq!(s.sigma_plus.im, -0.4546, epsilon = 5e-4);
        assert_abs_diff_eq!(s.sigma_minus.re, 0.3842, epsilon = 5e-4);
        assert_abs_diff_eq!(s.sigma_minus.im, -0.4546, epsilon = 5e-4);
    }

    #[test]
    fn pump_examples() {
        let s = decompose_pump(1.0, 0.0, deg(90.0)).unwrap();
        assert!(s.pi.norm() < 1e-15);
        assert_abs_diff_eq!(s.sigma_plus.norm(), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_abs_diff_eq!(s.sigma_minus.norm(), std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);

        let s = decompose_pump(1.0, deg(90.0), deg(90.0)).unwrap();
        assert_abs_diff_eq!(s.pi.norm(), 1.0, epsilon = 1e-15);
        assert!(s.sigma_plus.norm() < 1e-15 && s.sigma_minus.norm() < 1e-15);

        let s = decompose_pump(1.0, deg(40.0), deg(44.8)).unwrap();
        assert_abs_diff_eq!(s.pi.norm(), 0.4529, epsilon = 5e-4);
    }

    #[test]
    fn lin_perp_lin_stays_orthogonal() {
        let p = decompose_probe(1.0, deg(40.0), deg(44.8)).unwrap();
        let c = decompose_pump(1.0, deg(40.0), deg(44.8)).unwrap();
        assert!(p.inner(&c).norm() < 1e-15);
    }

    #[test]
    fn rejects_negative_amplitude() {
        assert!(decompose_probe(-1.0, 0.0, 0.0).is_err());
        assert!(BeamField::new(f64::NAN, BeamRole::Pump).is_err());
    }

    #[test]
    fn single_precision_agrees() {
        let a = decompose_probe(1.0f32, 0.7, 0.4).unwrap();
        let b = decompose_probe(1.0f64, 0.7, 0.4).unwrap();
        assert!((a.sigma_plus.im as f64 - b.sigma_plus.im).abs() < 1e-6);
    }
}
