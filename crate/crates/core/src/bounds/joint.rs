use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;

use super::barrier::follow_path;
use super::{joint_residual, BoundSolution, Direction, QueryFunctional, SolverStatus};
use crate::error::Result;
use crate::mode::ModeResult;
use crate::newton::Smooth;
use crate::options::SolverOptions;
use crate::posterior::PosteriorModel;
use crate::simplex::block_zero_sum_basis;

pub(super) struct StackedPosterior<'a>(pub &'a PosteriorModel);

impl Smooth for StackedPosterior<'_> {
    fn value(&self, x: &[f64]) -> Option<f64> {
        let v = self.0.log_posterior_stacked(x);
        v.is_finite().then_some(v)
    }

    fn derivatives(&self, x: &[f64]) -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
        let der = self.0.derivatives_pp(x)?;
        Some((der.value, der.gradient, der.hessian))
    }
}

/// Barrier solve in `(p, p̃)`, started from the mode and from one perturbed
/// point inside the level set; the better end point wins.
pub(super) fn solve(
    model: &PosteriorModel,
    functional: &QueryFunctional,
    log_c: f64,
    direction: Direction,
    mode: &ModeResult,
    opts: &SolverOptions,
) -> Result<BoundSolution> {
    let x_star = mode.stacked();
    let slack = mode.log_post_star - log_c;
    if slack <= 1e-12 * mode.log_post_star.abs().max(1.0) {
        return Ok(at_mode(model, functional, log_c, x_star));
    }

    let n = model.cells();
    let m = model.m();
    let sign = direction.sign();
    let mut w = DVector::zeros(2 * n);
    for (k, z) in functional.z.as_slice().iter().enumerate() {
        w[k] = sign * z;
    }
    let basis = block_zero_sum_basis(2 * model.s(), m);
    let level = StackedPosterior(model);

    let mut starts = Vec::new();
    if let Some(x0) = interior_start(model, &x_star, log_c, slack) {
        starts.push(x0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(1 + direction as u64);
    if let Some(x1) = perturbed_start(model, &x_star, log_c, slack, &mut rng) {
        starts.push(x1);
    }
    if starts.is_empty() {
        return Ok(at_mode(model, functional, log_c, x_star));
    }

    let mut best: Option<(f64, BoundSolution)> = None;
    let mut total_iterations = 0;
    for x0 in starts {
        let out = follow_path(
            &level,
            log_c,
            &w,
            DVector::from_vec(x0),
            &basis,
            &opts.barrier,
            opts.newton_max_iterations,
            opts.gradient_tolerance * 1e-3,
        );
        total_iterations += out.iterations;
        let x: Vec<f64> = out.x.iter().copied().collect();
        let value = functional.value_p(&x[..n]);
        let residual = joint_residual(model, &x, log_c);
        let status = if out.converged {
            SolverStatus::Optimal
        } else {
            SolverStatus::MaxIter
        };
        let score = sign * value;
        let better = match &best {
            None => true,
            Some((s, b)) => {
                (status == SolverStatus::Optimal && b.status != SolverStatus::Optimal)
                    || (status == b.status && score > *s)
            }
        };
        if better {
            best = Some((
                score,
                BoundSolution {
                    value,
                    status,
                    iterations: 0,
                    feasibility_residual: residual,
                    x,
                },
            ));
        }
    }
    let (_, mut solution) = best.expect("at least one start");
    solution.iterations = total_iterations;
    Ok(solution)
}

fn at_mode(model: &PosteriorModel, functional: &QueryFunctional, log_c: f64, x: Vec<f64>) -> BoundSolution {
    let n = model.cells();
    BoundSolution {
        value: functional.value_p(&x[..n]),
        status: SolverStatus::Optimal,
        iterations: 0,
        feasibility_residual: joint_residual(model, &x, log_c).max(0.0),
        x,
    }
}

/// Shrink the mode slightly toward the uniform point so no coordinate sits on
/// the boundary, keeping at least half the slack.
fn interior_start(model: &PosteriorModel, x_star: &[f64], log_c: f64, slack: f64) -> Option<Vec<f64>> {
    let m = model.m() as f64;
    let mut theta = 1e-3;
    while theta > 1e-14 {
        let x: Vec<f64> = x_star.iter().map(|v| (1.0 - theta) * v + theta / m).collect();
        if model.log_posterior_stacked(&x) - log_c >= 0.5 * slack {
            return Some(x);
        }
        theta *= 0.1;
    }
    x_star.iter().all(|v| *v > 0.0).then(|| x_star.to_vec())
}

/// Move from the mode toward a random interior point, stopping where half
/// the slack remains.
fn perturbed_start(
    model: &PosteriorModel,
    x_star: &[f64],
    log_c: f64,
    slack: f64,
    rng: &mut ChaCha8Rng,
) -> Option<Vec<f64>> {
    let m = model.m();
    let mut target = Vec::with_capacity(x_star.len());
    for _ in 0..x_star.len() / m {
        let draw: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = draw.iter().sum();
        target.extend(draw.into_iter().map(|v| v / total));
    }
    let mut t = 1.0;
    while t > 1e-6 {
        let x: Vec<f64> = x_star.iter().zip(&target).map(|(a, b)| a + t * (b - a)).collect();
        let h = model.log_posterior_stacked(&x) - log_c;
        if h >= 0.5 * slack && h.is_finite() {
            return Some(x);
        }
        t *= 0.5;
    }
    None
}
