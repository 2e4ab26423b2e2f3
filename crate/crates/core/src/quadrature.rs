//! Globally adaptive Gauss–Kronrod (7/15) integration of complex-valued
//! functions on a finite interval.

use num_complex::Complex;
use num_traits::Zero;

use crate::error::{EitError, Result};
use crate::scalar::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
// Gauss weights for the odd Kronrod nodes (1, 3, 5) and the centre.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureOptions<T> {
    /// Absolute error target.
    pub abs_tol: T,
    /// Relative error target (against |integral|).
    pub rel_tol: T,
    pub max_intervals: usize,
}

impl<T: Real> Default for QuadratureOptions<T> {
    fn default() -> Self {
        Self {
            abs_tol: T::zero(),
            rel_tol: T::lit(1e-10),
            max_intervals: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureResult<T> {
    pub value: Complex<T>,
    pub error: T,
    pub evaluations: usize,
}

struct Segment<T> {
    a: T,
    b: T,
    value: Complex<T>,
    error: T,
}

fn kronrod<T: Real, F: Fn(T) -> Complex<T>>(f: &F, a: T, b: T) -> Segment<T> {
    let half = (b - a) * T::lit(0.5);
    let centre = (a + b) * T::lit(0.5);
    let fc = f(centre);
    let mut kron = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for (j, (&x, &w)) in XGK[..7].iter().zip(&WGK[..7]).enumerate() {
        let dx = half * T::lit(x);
        let pair = f(centre - dx) + f(centre + dx);
        kron += pair * T::lit(w);
        if j % 2 == 1 {
            gauss += pair * T::lit(WG[j / 2]);
        }
    }
    let value = kron * half;
    let error = ((kron - gauss) * half).norm();
    Segment { a, b, value, error }
}

/// ∫ₐᵇ f. Bisects the interval with the largest error estimate until the
/// summed estimate meets `max(abs_tol, rel_tol·|I|)`.
pub fn integrate<T: Real, F: Fn(T) -> Complex<T>>(
    f: F,
    a: T,
    b: T,
    opts: &QuadratureOptions<T>,
) -> Result<QuadratureResult<T>> {
    if !(a.is_finite() && b.is_finite() && b > a) {
        return Err(EitError::invalid("integration bounds must be finite with a < b"));
    }
    let mut segments = vec![kronrod(&f, a, b)];
    let mut evaluations = 15;
    loop {
        let value: Complex<T> = segments.iter().fold(Complex::zero(), |s, g| s + g.value);
        let error: T = segments.iter().map(|g| g.error).sum();
        let target = opts.abs_tol.max(opts.rel_tol * value.norm());
        if !value.re.is_finite() || !value.im.is_finite() {
            return Err(EitError::numerical("quadrature", "integrand is not finite"));
        }
        if error <= target {
            return Ok(QuadratureResult {
                value,
                error,
                evaluations,
            });
        }
        if segments.len() >= opts.max_intervals {
            return Err(EitError::numerical(
                "quadrature",
                format!(
                    "no convergence after {} intervals (error {error:e}, target {target:e})",
                    segments.len()
                ),
            ));
        }
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.partial_cmp(&y.1.error).unwrap_or(std::cmp::Ordering::Equal))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let s = segments.swap_remove(worst);
        let mid = (s.a + s.b) * T::lit(0.5);
        if !(mid > s.a && mid < s.b) {
            return Err(EitError::numerical(
                "quadrature",
                "interval collapsed below machine resolution",
            ));
        }
        segments.push(kronrod(&f, s.a, mid));
        segments.push(kronrod(&f, mid, s.b));
        evaluations += 30;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_is_exact() {
        let r = integrate(
            |x: f64| Complex::new(x.powi(6), -x),
            -1.0,
            2.0,
            &QuadratureOptions::default(),
        )
        .unwrap();
        assert!((r.value.re - (128.0 + 1.0) / 7.0).abs() < 1e-12);
        assert!((r.value.im + 1.5).abs() < 1e-12);
    }

    #[test]
    fn sharp_lorentzian() {
        // ∫ 1/(g + i x) over a symmetric window = 2 atan(L/g)
        let g = 1e-3;
        let r = integrate(
            |x: f64| Complex::new(g, x).inv(),
            -50.0,
            50.0,
            &QuadratureOptions::default(),
        )
        .unwrap();
        let exact = 2.0 * (50.0f64 / g).atan();
        assert!((r.value.re - exact).abs() < 1e-8 * exact);
        assert!(r.value.im.abs() < 1e-8);
    }

    #[test]
    fn reports_non_convergence() {
        let opts = QuadratureOptions {
            max_intervals: 3,
            ..QuadratureOptions::default()
        };
        let r = integrate(|x: f64| Complex::new(1e-9, x).inv(), -1.0, 1.3, &opts);
        assert!(matches!(r, Err(EitError::Numerical { .. })));
        assert!(integrate(|x: f64| Complex::new(x, 0.0), 1.0, 1.0, &opts).is_err());
    }
}
