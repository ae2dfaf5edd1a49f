//! Damped Newton ascent on an affine subspace, used by every smooth solver in
//! the crate. Steps are restricted to the span of a null-space basis so linear
//! equality constraints hold exactly; the line search keeps all coordinates
//! strictly positive.

use nalgebra::{DMatrix, DVector};

/// Objective for [`maximize`]. Returning `None` marks a point outside the domain.
pub(crate) trait Smooth {
    fn value(&self, x: &[f64]) -> Option<f64>;
    fn derivatives(&self, x: &[f64]) -> Option<(f64, DVector<f64>, DMatrix<f64>)>;
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NewtonSettings {
    pub max_iterations: usize,
    /// Stop when half the squared Newton decrement falls below this.
    pub tolerance: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct NewtonOutcome {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub(crate) fn maximize<F: Smooth + ?Sized>(
    f: &F,
    x0: DVector<f64>,
    basis: &DMatrix<f64>,
    settings: NewtonSettings,
) -> NewtonOutcome {
    let mut x = x0;
    if f.value(x.as_slice()).is_none() {
        return NewtonOutcome {
            x,
            iterations: 0,
            converged: false,
        };
    }
    if basis.ncols() == 0 {
        return NewtonOutcome {
            x,
            iterations: 0,
            converged: true,
        };
    }

    for iter in 0..settings.max_iterations {
        let Some((v, grad, hess)) = f.derivatives(x.as_slice()) else {
            break;
        };
        let value = v;
        let reduced_grad = basis.transpose() * &grad;
        let neg_hess = -(basis.transpose() * &hess * basis);
        let Some(step) = regularized_solve(neg_hess, &reduced_grad) else {
            break;
        };
        let decrement_sq = reduced_grad.dot(&step);
        let rounding_floor = 1e3 * f64::EPSILON * value.abs().max(1.0);
        if decrement_sq / 2.0 <= settings.tolerance {
            return NewtonOutcome {
                x,
                iterations: iter,
                converged: true,
            };
        }
        let direction = basis * step;

        // Largest step keeping every coordinate strictly positive.
        let mut alpha: f64 = 1.0;
        for (xi, di) in x.iter().zip(direction.iter()) {
            if *di < 0.0 {
                alpha = alpha.min(0.99 * -xi / di);
            }
        }
        let mut accepted = None;
        while alpha > 1e-14 {
            let trial = &x + &direction * alpha;
            if let Some(tv) = f.value(trial.as_slice()) {
                if tv >= value + 0.1 * alpha * decrement_sq {
                    accepted = Some((trial, tv));
                    break;
                }
            }
            alpha *= 0.5;
        }
        match accepted {
            Some((trial, _)) if trial != x => x = trial,
            _ => {
                // No representable ascent (or the step rounds to zero): converged up to rounding.
                return NewtonOutcome {
                    x,
                    iterations: iter + 1,
                    converged: decrement_sq / 2.0 <= settings.tolerance.max(rounding_floor),
                };
            }
        }
    }
    NewtonOutcome {
        x,
        iterations: settings.max_iterations,
        converged: false,
    }
}

/// Solve `(M + τI) δ = g` with the smallest τ ≥ 0 (on a coarse ladder) making
/// the matrix positive definite.
fn regularized_solve(m: DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    let n = m.nrows();
    let scale = m.diagonal().amax().max(1e-12);
    let mut tau = 0.0;
    for _ in 0..40 {
        let shifted = &m + DMatrix::identity(n, n) * tau;
        if let Some(chol) = shifted.cholesky() {
            let step = chol.solve(g);
            if step.iter().all(|v| v.is_finite()) {
                return Some(step);
            }
        }
        tau = if tau == 0.0 { scale * 1e-10 } else { tau * 10.0 };
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simplex::zero_sum_basis;

    struct Entropy {
        weights: Vec<f64>,
    }

    impl Smooth for Entropy {
        fn value(&self, x: &[f64]) -> Option<f64> {
            if x.iter().any(|v| *v <= 0.0) {
                return None;
            }
            Some(self.weights.iter().zip(x).map(|(w, v)| w * v.ln()).sum())
        }

        fn derivatives(&self, x: &[f64]) -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
            let v = self.value(x)?;
            let g = DVector::from_iterator(x.len(), self.weights.iter().zip(x).map(|(w, v)| w / v));
            let h = DMatrix::from_diagonal(&DVector::from_iterator(
                x.len(),
                self.weights.iter().zip(x).map(|(w, v)| -w / (v * v)),
            ));
            Some((v, g, h))
        }
    }

    #[test]
    fn multinomial_mle_on_simplex() {
        let f = Entropy {
            weights: vec![3.0, 1.0, 6.0],
        };
        let out = maximize(
            &f,
            DVector::from_element(3, 1.0 / 3.0),
            &zero_sum_basis(3),
            NewtonSettings {
                max_iterations: 100,
                tolerance: 1e-14,
            },
        );
        assert!(out.converged);
        for (got, want) in out.x.iter().zip([0.3, 0.1, 0.6]) {
            assert!((got - want).abs() < 1e-9);
        }
    }
}
