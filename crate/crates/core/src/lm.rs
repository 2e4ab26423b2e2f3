//! Levenberg–Marquardt least squares with Marquardt diagonal scaling.

use crate::error::{EitError, Result};
use crate::linalg::{solve_real, DenseMatrix};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions<T> {
    pub max_iterations: usize,
    /// Stop when the relative drop in the sum of squares falls below this.
    pub ftol: T,
    /// Stop when the relative step falls below this.
    pub xtol: T,
    pub initial_lambda: T,
}

impl<T: Real> Default for LmOptions<T> {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            ftol: T::lit(1e-14),
            xtol: T::lit(1e-12),
            initial_lambda: T::lit(1e-3),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmReport<T> {
    pub params: Vec<T>,
    /// Sum of squared residuals at `params`.
    pub cost: T,
    pub iterations: usize,
}

/// Residual model: `eval(p, r, jac)` fills `r` (length `m`) and, when given,
/// the row-major `m × n` Jacobian `∂r/∂p`.
pub trait LeastSquares<T> {
    fn residual_count(&self) -> usize;
    fn eval(&self, params: &[T], residuals: &mut [T], jacobian: Option<&mut [T]>);
}

fn sum_sq<T: Real>(r: &[T]) -> T {
    r.iter().map(|&x| x * x).sum()
}

/// Minimizes `Σ r²`. Fails with [`EitError::Fit`] when the iteration budget
/// runs out or the cost becomes non-finite.
pub fn levenberg_marquardt<T: Real, M: LeastSquares<T>>(
    model: &M,
    p0: &[T],
    opts: &LmOptions<T>,
) -> Result<LmReport<T>> {
    let n = p0.len();
    let m = model.residual_count();
    if n == 0 || m < n {
        return Err(EitError::invalid(format!(
            "least squares needs 0 < parameters ({n}) <= residuals ({m})"
        )));
    }
    let mut p = p0.to_vec();
    let mut r = vec![T::zero(); m];
    let mut jac = vec![T::zero(); m * n];
    model.eval(&p, &mut r, Some(&mut jac));
    let mut cost = sum_sq(&r);
    if !cost.is_finite() {
        return Err(EitError::Fit {
            iterations: 0,
            best_residual: f64::INFINITY,
        });
    }
    let mut lambda = opts.initial_lambda;
    let mut trial = vec![T::zero(); n];
    let mut r_trial = vec![T::zero(); m];
    for it in 1..=opts.max_iterations {
        let mut jtj = DenseMatrix::<T>::zeros(n, n);
        let mut jtr = vec![T::zero(); n];
        for row in 0..m {
            let jr = &jac[row * n..(row + 1) * n];
            for a in 0..n {
                jtr[a] += jr[a] * r[row];
                for b in a..n {
                    jtj[(a, b)] += jr[a] * jr[b];
                }
            }
        }
        for a in 0..n {
            for b in 0..a {
                jtj[(a, b)] = jtj[(b, a)];
            }
        }
        let diag: Vec<T> = (0..n).map(|a| jtj[(a, a)].max(T::lit(1e-30))).collect();
        let mut accepted = false;
        while lambda < T::lit(1e16) {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * diag[k];
            }
            let rhs: Vec<T> = jtr.iter().map(|&g| -g).collect();
            let Ok(step) = solve_real(a, &rhs) else {
                lambda *= T::lit(10.0);
                continue;
            };
            for k in 0..n {
                trial[k] = p[k] + step[k];
            }
            model.eval(&trial, &mut r_trial, None);
            let c = sum_sq(&r_trial);
            if c.is_finite() && c < cost {
                let pnorm = p.iter().map(|&x| x * x).sum::<T>().sqrt();
                let snorm = step.iter().map(|&x| x * x).sum::<T>().sqrt();
                let drop = (cost - c) / cost.max(T::min_positive_value());
                p.copy_from_slice(&trial);
                cost = c;
                model.eval(&p, &mut r, Some(&mut jac));
                lambda = (lambda / T::lit(10.0)).max(T::lit(1e-12));
                accepted = true;
                if drop < opts.ftol || snorm <= opts.xtol * (pnorm + opts.xtol) || cost == T::zero() {
                    return Ok(LmReport {
                        params: p,
                        cost,
                        iterations: it,
                    });
                }
                break;
            }
            lambda *= T::lit(10.0);
        }
        if !accepted {
            // no downhill step at any damping: already at a minimum
            return Ok(LmReport {
                params: p,
                cost,
                iterations: it,
            });
        }
    }
    Err(EitError::Fit {
        iterations: opts.max_iterations,
        best_residual: cost.to_f64_lossy(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Exp {
        x: Vec<f64>,
        y: Vec<f64>,
    }

    impl LeastSquares<f64> for Exp {
        fn residual_count(&self) -> usize {
            self.x.len()
        }
        fn eval(&self, p: &[f64], r: &mut [f64], jac: Option<&mut [f64]>) {
            for (i, (&x, &y)) in self.x.iter().zip(&self.y).enumerate() {
                r[i] = p[0] * (-p[1] * x).exp() - y;
            }
            if let Some(j) = jac {
                for (i, &x) in self.x.iter().enumerate() {
                    let e = (-p[1] * x).exp();
                    j[2 * i] = e;
                    j[2 * i + 1] = -p[0] * x * e;
                }
            }
        }
    }

    #[test]
    fn recovers_exponential() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let y = x.iter().map(|&x| 2.5 * (-1.3 * x).exp()).collect();
        let rep = levenberg_marquardt(&Exp { x, y }, &[1.0, 0.1], &LmOptions::default()).unwrap();
        assert!((rep.params[0] - 2.5).abs() < 1e-8 && (rep.params[1] - 1.3).abs() < 1e-8);
        assert!(rep.cost < 1e-16);
    }

    #[test]
    fn rosenbrock() {
        struct R;
        impl LeastSquares<f64> for R {
            fn residual_count(&self) -> usize {
                2
            }
            fn eval(&self, p: &[f64], r: &mut [f64], jac: Option<&mut [f64]>) {
                r[0] = 10.0 * (p[1] - p[0] * p[0]);
                r[1] = 1.0 - p[0];
                if let Some(j) = jac {
                    j.copy_from_slice(&[-20.0 * p[0], 10.0, -1.0, 0.0]);
                }
            }
        }
        let rep = levenberg_marquardt(&R, &[-1.2, 1.0], &LmOptions::default()).unwrap();
        assert!((rep.params[0] - 1.0).abs() < 1e-6 && (rep.params[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn budget_exhaustion_reports_best_residual() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let y = x.iter().map(|&x| 2.5 * (-1.3 * x).exp()).collect();
        let opts = LmOptions {
            max_iterations: 1,
            ..LmOptions::default()
        };
        match levenberg_marquardt(&Exp { x, y }, &[1.0, 0.1], &opts) {
            Err(EitError::Fit {
                iterations,
                best_residual,
            }) => {
                assert_eq!(iterations, 1);
                assert!(best_residual.is_finite());
            }
            other => panic!("{other:?}"),
        }
    }
}
