//! Log-barrier path following for `max σ·wᵀx` subject to `C(x) ≥ log c`,
//! `x > 0` and linear equalities encoded by a null-space basis.

use nalgebra::{DMatrix, DVector};

use crate::newton::{self, NewtonSettings, Smooth};
use crate::options::BarrierSchedule;

struct Barrier<'a, C: Smooth + ?Sized> {
    level: &'a C,
    log_c: f64,
    w: &'a DVector<f64>,
    mu: f64,
}

impl<C: Smooth + ?Sized> Smooth for Barrier<'_, C> {
    fn value(&self, x: &[f64]) -> Option<f64> {
        if x.iter().any(|v| *v <= 0.0) {
            return None;
        }
        let slack = self.level.value(x)? - self.log_c;
        if !(slack > 0.0) {
            return None;
        }
        let logs: f64 = x.iter().map(|v| v.ln()).sum();
        Some(self.w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + self.mu * (slack.ln() + logs))
    }

    fn derivatives(&self, x: &[f64]) -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
        if x.iter().any(|v| *v <= 0.0) {
            return None;
        }
        let (c, grad_c, hess_c) = self.level.derivatives(x)?;
        let slack = c - self.log_c;
        if !(slack > 0.0) {
            return None;
        }
        let mu = self.mu;
        let mut value = self.w.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + mu * slack.ln();
        let mut grad = self.w + &grad_c * (mu / slack);
        let mut hess = hess_c * (mu / slack) - (&grad_c * grad_c.transpose()) * (mu / (slack * slack));
        for (k, &v) in x.iter().enumerate() {
            value += mu * v.ln();
            grad[k] += mu / v;
            hess[(k, k)] -= mu / (v * v);
        }
        Some((value, grad, hess))
    }
}

pub(crate) struct PathOutcome {
    pub x: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Follow the central path from the strictly feasible `x0`.
///
/// `w` already carries the direction sign. Converged means every Newton
/// centering succeeded and the gap proxy `μ·(dim + 1)` fell below tolerance.
pub(crate) fn follow_path<C: Smooth + ?Sized>(
    level: &C,
    log_c: f64,
    w: &DVector<f64>,
    x0: DVector<f64>,
    basis: &DMatrix<f64>,
    schedule: &BarrierSchedule,
    newton_max_iterations: usize,
    tolerance: f64,
) -> PathOutcome {
    let constraints = (x0.len() + 1) as f64;
    let settings = NewtonSettings {
        max_iterations: newton_max_iterations,
        tolerance,
    };
    let mut x = x0;
    let mut iterations = 0;
    let mut all_converged = true;
    let mut mu = schedule.mu0;
    let mut gap_closed = false;
    for _ in 0..schedule.max_rounds {
        let f = Barrier { level, log_c, w, mu };
        let out = newton::maximize(&f, x, basis, settings);
        iterations += out.iterations;
        all_converged &= out.converged;
        x = out.x;
        if mu * constraints < schedule.gap_tolerance {
            gap_closed = true;
            break;
        }
        mu *= schedule.factor;
    }
    PathOutcome {
        x,
        iterations,
        converged: all_converged && gap_closed,
    }
}
