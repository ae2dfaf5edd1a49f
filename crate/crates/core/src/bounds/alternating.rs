//! Cyclic optimization: `d` with `p̃` fixed, then `p̃` with `d` fixed.
//!
//! Each step is a convex level-set program. With `d` fixed every row of `p̃`
//! carries two equalities, so for two outcomes the `p̃`-step cannot move and
//! the scheme stalls at the start's `p̃`.

use nalgebra::{DMatrix, DVector};

use super::fixed_sim::{level_set_extreme, maximize_level, row_constraint_basis, DiscrepancyLevel};
use super::{joint_residual, BoundSolution, Direction, QueryFunctional, SolverStatus};
use crate::error::Result;
use crate::mode::ModeResult;
use crate::newton::Smooth;
use crate::options::SolverOptions;
use crate::posterior::{GaussianPrior, PosteriorModel, Table};

/// `offset + Σ (n + ñ) log p̃ + f(p̃)` as a function of the flat `p̃`.
struct SimulatorLevel<'a> {
    prior: &'a GaussianPrior,
    counts: Vec<f64>,
    offset: f64,
}

impl Smooth for SimulatorLevel<'_> {
    fn value(&self, pt: &[f64]) -> Option<f64> {
        let mut v = self.offset + self.prior.log_f(pt);
        for (n, x) in self.counts.iter().zip(pt) {
            if !(*x > 0.0) {
                return None;
            }
            v += n * x.ln();
        }
        v.is_finite().then_some(v)
    }

    fn derivatives(&self, pt: &[f64]) -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
        let v = self.value(pt)?;
        let mut grad = self.prior.grad_f(pt);
        let mut hess = self.prior.hess_f();
        for (k, (n, x)) in self.counts.iter().zip(pt).enumerate() {
            grad[k] += n / x;
            hess[(k, k)] -= n / (x * x);
        }
        Some((v, grad, hess))
    }
}

fn log_sum(counts: &[f64], x: &[f64]) -> f64 {
    counts.iter().zip(x).filter(|(n, _)| **n > 0.0).map(|(n, v)| n * v.ln()).sum()
}

pub(super) fn solve(
    model: &PosteriorModel,
    functional: &QueryFunctional,
    log_c: f64,
    direction: Direction,
    mode: &ModeResult,
    opts: &SolverOptions,
) -> Result<BoundSolution> {
    let (s, m) = (model.s(), model.m());
    let prior = model.prior();
    let real: Vec<f64> = model.data().real_counts().as_slice().iter().map(|c| *c as f64).collect();
    let sim: Vec<f64> = model.data().sim_counts().as_slice().iter().map(|c| *c as f64).collect();
    let both: Vec<f64> = real.iter().zip(&sim).map(|(a, b)| a + b).collect();
    let z = functional.z.as_slice();
    let sign = direction.sign();

    let mut d: Vec<f64> = mode.d_star.as_slice().to_vec();
    let mut pt: Vec<f64> = mode.p_tilde_star.as_slice().to_vec();
    let zeta = |d: &[f64], pt: &[f64]| -> f64 { z.iter().zip(d).zip(pt).map(|((a, b), c)| a * b * c).sum() };
    let mut objective = zeta(&d, &pt);
    let mut iterations = 0;
    let mut converged = false;
    let mut steps_ok = true;

    for _ in 0..opts.max_iterations {
        // d-step.
        let pt_table = Table::new(s, m, pt.clone())?;
        let level = DiscrepancyLevel {
            prior,
            counts: real.clone(),
            offset: log_sum(&both, &pt) + prior.log_f(&pt),
        };
        let basis = row_constraint_basis(&pt_table, false);
        let (d_top, _, ok, it) = maximize_level(&level, &basis, d.clone(), opts);
        iterations += it;
        steps_ok &= ok;
        let w = DVector::from_iterator(z.len(), z.iter().zip(&pt).map(|(a, b)| sign * a * b));
        if let Some((next, it, ok)) = level_set_extreme(&level, &basis, &w, log_c, &d_top, &vec![1.0; d.len()], opts) {
            iterations += it;
            steps_ok &= ok;
            if level.value(&next).is_some_and(|v| v >= log_c) {
                d = next;
            }
        }

        // p̃-step.
        let d_table = Table::new(s, m, d.clone())?;
        let level = SimulatorLevel {
            prior,
            counts: both.clone(),
            offset: log_sum(&real, &d) + prior.log_g(&d),
        };
        let basis = row_constraint_basis(&d_table, true);
        let (pt_top, _, ok, it) = maximize_level(&level, &basis, pt.clone(), opts);
        iterations += it;
        steps_ok &= ok;
        let w = DVector::from_iterator(z.len(), z.iter().zip(&d).map(|(a, b)| sign * a * b));
        if let Some((next, it, ok)) = level_set_extreme(&level, &basis, &w, log_c, &pt_top, &pt_top, opts) {
            iterations += it;
            steps_ok &= ok;
            if level.value(&next).is_some_and(|v| v >= log_c) {
                pt = next;
            }
        }

        let updated = zeta(&d, &pt);
        let change = (updated - objective).abs();
        objective = updated;
        if change < opts.gradient_tolerance {
            converged = true;
            break;
        }
    }

    let mut x: Vec<f64> = d.iter().zip(&pt).map(|(a, b)| a * b).collect();
    x.extend_from_slice(&pt);
    Ok(BoundSolution {
        value: functional.value_p(&x[..s * m]),
        status: if converged && steps_ok {
            SolverStatus::Optimal
        } else {
            SolverStatus::MaxIter
        },
        iterations,
        feasibility_residual: joint_residual(model, &x, log_c).max(0.0),
        x,
    })
}
