//! Discrepancy bounds when the simulator distribution is taken as exact.
//!
//! With `p̃` fixed the level-set constraint `g(d) + Σ n log d ≥ log c` is
//! concave in `d`, so the program is convex.

use nalgebra::{DMatrix, DVector};

use super::barrier::follow_path;
use super::{BoundSolution, Direction, QueryFunctional, SolverStatus, INFEASIBILITY_SLACK};
use crate::error::{Error, Result};
use crate::newton::{self, NewtonSettings, Smooth};
use crate::options::SolverOptions;
use crate::posterior::{GaussianPrior, GaussianPriorSpec, ProbTable, ProblemData, Table};
use crate::simplex::null_space;

/// `offset + Σ n log d + g(d)` as a function of the flat `d`.
pub(super) struct DiscrepancyLevel<'a> {
    pub prior: &'a GaussianPrior,
    pub counts: Vec<f64>,
    pub offset: f64,
}

impl Smooth for DiscrepancyLevel<'_> {
    fn value(&self, d: &[f64]) -> Option<f64> {
        let mut v = self.offset + self.prior.log_g(d);
        for (n, x) in self.counts.iter().zip(d) {
            if *x < 0.0 || (*n > 0.0 && *x == 0.0) {
                return None;
            }
            if *n > 0.0 {
                v += n * x.ln();
            }
        }
        v.is_finite().then_some(v)
    }

    fn derivatives(&self, d: &[f64]) -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
        let v = self.value(d)?;
        let mut grad = self.prior.grad_g(d);
        let mut hess = self.prior.hess_g();
        for (k, (n, x)) in self.counts.iter().zip(d).enumerate() {
            if *n > 0.0 {
                grad[k] += n / x;
                hess[(k, k)] -= n / (x * x);
            }
        }
        Some((v, grad, hess))
    }
}

/// Orthonormal basis of `{δ : Σ_i a_j(i) δ_j(i) = 0 for every row j}`, or of
/// the intersection with `Σ_i δ_j(i) = 0` when `with_sum` is set.
pub(super) fn row_constraint_basis(weights: &Table, with_sum: bool) -> DMatrix<f64> {
    let (s, m) = (weights.rows(), weights.cols());
    let mut basis = DMatrix::zeros(s * m, s * m);
    let mut col = 0;
    for j in 0..s {
        let rows = if with_sum { 2 } else { 1 };
        let mut a = DMatrix::zeros(rows, m);
        for i in 0..m {
            a[(0, i)] = weights.get(j, i);
            if with_sum {
                a[(1, i)] = 1.0;
            }
        }
        let ns = null_space(&a);
        for c in 0..ns.ncols() {
            for i in 0..m {
                basis[(j * m + i, col)] = ns[(i, c)];
            }
            col += 1;
        }
    }
    basis.columns(0, col).into_owned()
}

/// Maximizer of the concave level function under the row constraints.
pub(super) fn maximize_level<C: Smooth>(
    level: &C,
    basis: &DMatrix<f64>,
    start: Vec<f64>,
    opts: &SolverOptions,
) -> (Vec<f64>, f64, bool, usize) {
    struct WithBarrier<'a, C: Smooth> {
        level: &'a C,
        mu: f64,
    }
    impl<C: Smooth> Smooth for WithBarrier<'_, C> {
        fn value(&self, x: &[f64]) -> Option<f64> {
            if x.iter().any(|v| *v <= 0.0) {
                return None;
            }
            Some(self.level.value(x)? + self.mu * x.iter().map(|v| v.ln()).sum::<f64>())
        }
        fn derivatives(&self, x: &[f64]) -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
            if x.iter().any(|v| *v <= 0.0) {
                return None;
            }
            let (mut v, mut g, mut h) = self.level.derivatives(x)?;
            for (k, &xk) in x.iter().enumerate() {
                v += self.mu * xk.ln();
                g[k] += self.mu / xk;
                h[(k, k)] -= self.mu / (xk * xk);
            }
            Some((v, g, h))
        }
    }

    let settings = NewtonSettings {
        max_iterations: opts.newton_max_iterations,
        tolerance: opts.gradient_tolerance,
    };
    let mut x = DVector::from_vec(start);
    let mut converged = false;
    let mut iterations = 0;
    for mu in [1e-8, 1e-12] {
        let out = newton::maximize(&WithBarrier { level, mu }, x, basis, settings);
        iterations += out.iterations;
        converged = out.converged;
        x = out.x;
    }
    let x: Vec<f64> = x.iter().copied().collect();
    let value = level.value(&x).unwrap_or(f64::NEG_INFINITY);
    (x, value, converged, iterations)
}

/// Extreme of `σ·wᵀx` over the level set, starting near `x_star`.
///
/// `toward` is a strictly positive point satisfying the equalities; the
/// start is shrunk toward it until at least half the slack remains.
#[allow(clippy::too_many_arguments)]
pub(super) fn level_set_extreme<C: Smooth>(
    level: &C,
    basis: &DMatrix<f64>,
    w: &DVector<f64>,
    log_c: f64,
    x_star: &[f64],
    toward: &[f64],
    opts: &SolverOptions,
) -> Option<(Vec<f64>, usize, bool)> {
    let top = level.value(x_star)?;
    let slack = top - log_c;
    if slack <= 1e-12 * top.abs().max(1.0) {
        return Some((x_star.to_vec(), 0, true));
    }
    let mut theta = 1e-3;
    let mut x0 = None;
    while theta > 1e-14 {
        let x: Vec<f64> = x_star.iter().zip(toward).map(|(a, b)| (1.0 - theta) * a + theta * b).collect();
        if let Some(v) = level.value(&x) {
            if v - log_c >= 0.5 * slack && x.iter().all(|v| *v > 0.0) {
                x0 = Some(x);
                break;
            }
        }
        theta *= 0.1;
    }
    let x0 = match x0 {
        Some(x) => x,
        None if x_star.iter().all(|v| *v > 0.0) => x_star.to_vec(),
        None => return None,
    };
    let out = follow_path(
        level,
        log_c,
        w,
        DVector::from_vec(x0),
        basis,
        &opts.barrier,
        opts.newton_max_iterations,
        opts.gradient_tolerance * 1e-3,
    );
    Some((out.x.iter().copied().collect(), out.iterations, out.converged))
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedSimMode {
    pub d_star: Table,
    /// `max g(d) + Σ n log d`.
    pub value: f64,
    pub converged: bool,
}

struct FixedSimProblem {
    prior: GaussianPrior,
    counts: Vec<f64>,
    basis: DMatrix<f64>,
    s: usize,
    m: usize,
}

impl FixedSimProblem {
    fn new(pi_tilde: &ProbTable, data: &ProblemData, prior: &GaussianPriorSpec) -> Result<Self> {
        let (s, m) = (data.s(), data.m());
        if (pi_tilde.rows(), pi_tilde.cols()) != (s, m) {
            return Err(Error::InvalidData("simulator table shape does not match the data".into()));
        }
        if pi_tilde.as_slice().iter().any(|v| !(*v > 0.0)) {
            return Err(Error::InvalidData("simulator probabilities must be strictly positive".into()));
        }
        Ok(Self {
            prior: GaussianPrior::build(prior, data.design_coords(), m)?,
            counts: data.real_counts().as_slice().iter().map(|c| *c as f64).collect(),
            basis: row_constraint_basis(pi_tilde, false),
            s,
            m,
        })
    }

    fn level(&self) -> DiscrepancyLevel<'_> {
        DiscrepancyLevel {
            prior: &self.prior,
            counts: self.counts.clone(),
            offset: 0.0,
        }
    }

    fn mode(&self, opts: &SolverOptions) -> FixedSimMode {
        let (d, value, converged, _) = maximize_level(&self.level(), &self.basis, vec![1.0; self.s * self.m], opts);
        FixedSimMode {
            d_star: Table::new(self.s, self.m, d).expect("shape"),
            value,
            converged,
        }
    }
}

pub fn fixed_sim_mode(
    pi_tilde: &ProbTable,
    data: &ProblemData,
    prior: &GaussianPriorSpec,
    opts: &SolverOptions,
) -> Result<FixedSimMode> {
    opts.validate()?;
    Ok(FixedSimProblem::new(pi_tilde, data, prior)?.mode(opts))
}

#[allow(clippy::too_many_arguments)]
pub fn solve_bound_fixed_sim(
    pi_tilde: &ProbTable,
    data: &ProblemData,
    prior: &GaussianPriorSpec,
    functional: &QueryFunctional,
    log_c: f64,
    direction: Direction,
    opts: &SolverOptions,
) -> Result<BoundSolution> {
    opts.validate()?;
    let problem = FixedSimProblem::new(pi_tilde, data, prior)?;
    functional.check_shape(problem.s, problem.m)?;
    let mode = problem.mode(opts);
    if !log_c.is_finite() || log_c > mode.value + INFEASIBILITY_SLACK {
        return Err(Error::Infeasible {
            log_c,
            log_post_star: mode.value,
        });
    }
    let weights: Vec<f64> = functional
        .z
        .as_slice()
        .iter()
        .zip(pi_tilde.as_slice())
        .map(|(z, p)| direction.sign() * z * p)
        .collect();
    let w = DVector::from_vec(weights);
    let level = problem.level();
    let n = problem.s * problem.m;
    let ones = vec![1.0; n];
    let Some((d, iterations, converged)) =
        level_set_extreme(&level, &problem.basis, &w, log_c, mode.d_star.as_slice(), &ones, opts)
    else {
        return Ok(BoundSolution {
            value: f64::NAN,
            status: SolverStatus::Infeasible,
            iterations: 0,
            feasibility_residual: f64::INFINITY,
            x: mode.d_star.as_slice().to_vec(),
        });
    };

    let mut residual: f64 = 0.0;
    for j in 0..problem.s {
        let row = j * problem.m..(j + 1) * problem.m;
        let total: f64 = d[row.clone()].iter().zip(pi_tilde.row(j)).map(|(a, b)| a * b).sum();
        residual = residual.max((total - 1.0).abs());
    }
    for v in &d {
        residual = residual.max(-v);
    }
    residual = residual.max(log_c - level.value(&d).unwrap_or(f64::NEG_INFINITY));
    let value: f64 = functional
        .z
        .as_slice()
        .iter()
        .zip(pi_tilde.as_slice())
        .zip(&d)
        .map(|((z, p), d)| z * p * d)
        .sum();
    Ok(BoundSolution {
        value,
        status: if converged { SolverStatus::Optimal } else { SolverStatus::MaxIter },
        iterations,
        feasibility_residual: residual,
        x: d,
    })
}
