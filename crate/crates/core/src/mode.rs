//! Constrained maximizer of the log posterior.
//!
//! The search runs in the `(p, p̃)` parameterization where both blocks are
//! rows on the probability simplex. Each restart does projected gradient
//! ascent followed by a log-barrier Newton polish; the best restart wins.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::newton::{self, NewtonSettings, Smooth};
use crate::options::{SolverOptions, StepRule};
use crate::posterior::{DiscrepancyTable, PosteriorModel, ProbTable, Table};
use crate::simplex::{block_zero_sum_basis, project_onto_simplex};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModeResult {
    pub d_star: DiscrepancyTable,
    pub p_star: Table,
    pub p_tilde_star: ProbTable,
    pub log_post_star: f64,
    pub iterations: usize,
    pub converged: bool,
    pub kkt_residual: f64,
    /// Index of the restart that produced the returned point.
    pub restart: usize,
}

impl ModeResult {
    /// The mode as a stacked `[p; p̃]` vector.
    pub fn stacked(&self) -> Vec<f64> {
        [self.p_star.as_slice(), self.p_tilde_star.as_slice()].concat()
    }
}

/// Log posterior plus `μ Σ log x`, keeping iterates off the simplex boundary.
struct BarrierLogPosterior<'a> {
    model: &'a PosteriorModel,
    mu: f64,
}

impl Smooth for BarrierLogPosterior<'_> {
    fn value(&self, x: &[f64]) -> Option<f64> {
        if x.iter().any(|v| *v <= 0.0) {
            return None;
        }
        let v = self.model.log_posterior_stacked(x);
        v.is_finite().then(|| v + self.mu * x.iter().map(|v| v.ln()).sum::<f64>())
    }

    fn derivatives(&self, x: &[f64]) -> Option<(f64, DVector<f64>, DMatrix<f64>)> {
        if x.iter().any(|v| *v <= 0.0) {
            return None;
        }
        let der = self.model.derivatives_pp(x)?;
        let mut value = der.value;
        let mut grad = der.gradient;
        let mut hess = der.hessian;
        for (k, &v) in x.iter().enumerate() {
            value += self.mu * v.ln();
            grad[k] += self.mu / v;
            hess[(k, k)] -= self.mu / (v * v);
        }
        Some((value, grad, hess))
    }
}

pub fn find_posterior_mode(model: &PosteriorModel, opts: &SolverOptions) -> Result<ModeResult> {
    opts.validate()?;
    let (s, m) = (model.s(), model.m());
    if m < 2 || s == 0 {
        return Err(Error::Degenerate(format!("cannot optimize over {s}x{m} tables")));
    }
    if opts.interior_floor * m as f64 >= 1.0 {
        return Err(Error::Config("interior_floor too large for the outcome count".into()));
    }

    let base = initial_point(model);
    let restarts = opts.restarts.max(1);
    let mut best: Option<(Vec<f64>, f64, usize, bool, usize)> = None;
    for r in 0..restarts {
        let start = match r {
            0 => base.clone(),
            1 => real_frequency_point(model),
            _ => {
                let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
                rng.set_stream(r as u64);
                perturb(&base, m, &mut rng)
            }
        };
        let (x, value, iterations, converged) = ascend(model, start, opts);
        let better = match &best {
            None => true,
            Some((_, bv, ..)) => value > *bv,
        };
        if better {
            best = Some((x, value, iterations, converged, r));
        }
    }
    let (x, value, iterations, converged, restart) = best.expect("at least one restart");
    if !value.is_finite() {
        return Err(Error::Degenerate("log posterior is -inf at every start".into()));
    }

    let n = s * m;
    let p_star = Table::new(s, m, x[..n].to_vec())?;
    let p_tilde = Table::new(s, m, x[n..].to_vec())?;
    let d_star = DiscrepancyTable::from_ratio(&p_star, &p_tilde);
    let kkt_residual = kkt_residual(model, &x);
    Ok(ModeResult {
        d_star,
        p_star,
        p_tilde_star: ProbTable::new(p_tilde)?,
        log_post_star: value,
        iterations,
        converged,
        kkt_residual,
        restart,
    })
}

/// `p` from pooled real + simulated counts, `p̃` from simulated counts, both
/// additively smoothed. Designs without real data start at `d = 1`.
fn initial_point(model: &PosteriorModel) -> Vec<f64> {
    let data = model.data();
    let pooled = data.real_counts().merged(data.sim_counts()).expect("same shape");
    let m = data.m() as f64;
    let p: Vec<f64> = (0..data.s())
        .flat_map(|j| {
            let total = pooled.row_total(j) as f64 + m;
            pooled.row(j).iter().map(move |c| (*c as f64 + 1.0) / total).collect::<Vec<_>>()
        })
        .collect();
    [p.as_slice(), data.smoothed_sim_frequencies(1.0).as_slice()].concat()
}

/// Smoothed real and simulated frequencies, stacked.
fn real_frequency_point(model: &PosteriorModel) -> Vec<f64> {
    let data = model.data();
    [
        data.smoothed_real_frequencies(1.0).as_slice(),
        data.smoothed_sim_frequencies(1.0).as_slice(),
    ]
    .concat()
}

/// Mix each simplex row half-and-half with a Dirichlet(1, …, 1) draw.
fn perturb(x: &[f64], m: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for row in x.chunks(m) {
        let draw: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = draw.iter().sum();
        out.extend(row.iter().zip(&draw).map(|(a, b)| 0.5 * a + 0.5 * b / total));
    }
    out
}

fn project_rows(x: &[f64], m: usize, floor: f64) -> Vec<f64> {
    x.chunks(m)
        .flat_map(|row| project_onto_simplex(row, floor))
        .collect()
}

/// Projected gradient ascent then barrier Newton polish from `start`.
fn ascend(model: &PosteriorModel, start: Vec<f64>, opts: &SolverOptions) -> (Vec<f64>, f64, usize, bool) {
    let m = model.m();
    let floor = opts.interior_floor;
    let mut x = project_rows(&start, m, floor);
    let Some((mut value, mut grad)) = model.gradient_pp(&x) else {
        return (x, f64::NEG_INFINITY, 0, false);
    };

    let mut step = 1e-3 / grad.amax().max(1.0);
    let mut iterations = 0;
    for _ in 0..opts.max_iterations {
        iterations += 1;
        let candidate = match opts.step_rule {
            StepRule::Fixed(a) => {
                let y = project_rows(&trial(&x, &grad, a), m, floor);
                model.gradient_pp(&y).map(|(v, g)| (y, v, g))
            }
            StepRule::Backtracking => {
                let mut alpha = step * 2.0;
                let mut found = None;
                while alpha > 1e-20 {
                    let y = project_rows(&trial(&x, &grad, alpha), m, floor);
                    let predicted: f64 = y.iter().zip(&x).zip(grad.iter()).map(|((a, b), g)| (a - b) * g).sum();
                    let v = model.log_posterior_stacked(&y);
                    if v.is_finite() && v >= value + 1e-4 * predicted {
                        found = model.gradient_pp(&y).map(|(v, g)| (y, v, g));
                        step = alpha;
                        break;
                    }
                    alpha *= 0.5;
                }
                found
            }
        };
        let Some((y, v, g)) = candidate else { break };
        let moved = y.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        x = y;
        value = v;
        grad = g;
        if moved < 1e-15 || kkt_residual(model, &x) <= opts.gradient_tolerance {
            break;
        }
    }

    // Newton polish on the barrier-augmented objective.
    let basis = block_zero_sum_basis(2 * model.s(), m);
    let settings = NewtonSettings {
        max_iterations: opts.newton_max_iterations,
        tolerance: opts.gradient_tolerance,
    };
    let mut polished = DVector::from_vec(x.clone());
    let mut converged = false;
    // Continuation in μ: cells with no counts on either side shrink toward the
    // boundary, and their ratio `d` must settle while they are still resolvable.
    for mu in [1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12] {
        let f = BarrierLogPosterior { model, mu };
        let out = newton::maximize(&f, polished, &basis, settings);
        iterations += out.iterations;
        converged = out.converged;
        polished = out.x;
    }
    let polished: Vec<f64> = polished.iter().copied().collect();
    let polished_value = model.log_posterior_stacked(&polished);
    if polished_value >= value {
        (polished, polished_value, iterations, converged)
    } else {
        (x, value, iterations, false)
    }
}

fn trial(x: &[f64], g: &DVector<f64>, alpha: f64) -> Vec<f64> {
    x.iter().zip(g.iter()).map(|(a, b)| a + alpha * b).collect()
}

/// `‖x − Π(x + ∇L)‖_∞` with Π the row-wise simplex projection.
pub fn kkt_residual(model: &PosteriorModel, x: &[f64]) -> f64 {
    let Some((_, grad)) = model.gradient_pp(x) else {
        return f64::INFINITY;
    };
    let moved = trial(x, &grad, 1.0);
    let projected = project_rows(&moved, model.m(), 0.0);
    projected
        .iter()
        .zip(x)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posterior::{validate_discrepancy, validate_distribution, CountTable, GaussianPriorSpec, ProblemData};

    fn model(n: &[Vec<u64>], nt: &[Vec<u64>], prior: GaussianPriorSpec) -> PosteriorModel {
        let s = n.len();
        let data = ProblemData::new(
            (0..s).map(|j| j as f64).collect(),
            CountTable::from_rows(n).unwrap(),
            CountTable::from_rows(nt).unwrap(),
        )
        .unwrap();
        PosteriorModel::new(data, &prior).unwrap()
    }

    #[test]
    fn zero_counts_recover_prior_mean() {
        let mdl = model(&[vec![0, 0, 0], vec![0, 0, 0]], &[vec![0, 0, 0], vec![0, 0, 0]],
                        GaussianPriorSpec::new(1.0, 1.0, 0.75, 0.75));
        let mode = find_posterior_mode(&mdl, &SolverOptions::default()).unwrap();
        for v in mode.d_star.as_slice() {
            assert!((v - 1.0).abs() < 1e-6, "{v}");
        }
        for v in mode.p_tilde_star.as_slice() {
            assert!((v - 1.0 / 3.0).abs() < 1e-6);
        }
        assert!(mode.log_post_star.abs() < 1e-9);
        assert!(mode.converged);
    }

    #[test]
    fn flat_prior_gives_empirical_frequencies() {
        let mdl = model(&[vec![3, 1]], &[vec![1, 1]], GaussianPriorSpec::identity(1e-9, 1e-9, 2));
        let mode = find_posterior_mode(&mdl, &SolverOptions::default()).unwrap();
        assert!((mode.p_star.get(0, 0) - 0.75).abs() < 1e-5);
        assert!((mode.p_tilde_star.get(0, 0) - 0.5).abs() < 1e-5);

        // Dense grid oracle over both simplices at step 0.001.
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for a in 1..1000 {
            for b in 1..1000 {
                let (p, t) = (a as f64 / 1000.0, b as f64 / 1000.0);
                let v = mdl.log_posterior_pp(&[p, 1.0 - p], &[t, 1.0 - t]);
                if v > best.0 {
                    best = (v, p, t);
                }
            }
        }
        assert!((best.1 - 0.75).abs() < 1e-9 && (best.2 - 0.5).abs() < 1e-9);
        assert!(mode.log_post_star >= best.0 - 1e-9);
    }

    #[test]
    fn strong_discrepancy_prior_pins_d() {
        let mdl = model(&[vec![30, 10]], &[vec![10, 10]], GaussianPriorSpec::identity(1e6, 1e-3, 2));
        let mode = find_posterior_mode(&mdl, &SolverOptions::default()).unwrap();
        for v in mode.d_star.as_slice() {
            assert!((v - 1.0).abs() < 1e-3);
        }
        assert!((mode.p_star.get(0, 0) - mode.p_tilde_star.get(0, 0)).abs() < 1e-3);
    }

    #[test]
    fn mode_is_feasible_and_improves_on_start() {
        let mdl = model(
            &[vec![3, 0, 5, 1], vec![0, 0, 0, 0], vec![10, 4, 1, 0]],
            &[vec![40, 30, 20, 10], vec![5, 50, 5, 40], vec![25, 25, 25, 25]],
            GaussianPriorSpec::new(0.25, 0.01, 0.75, 0.75),
        );
        let mode = find_posterior_mode(&mdl, &SolverOptions::default()).unwrap();
        assert!(validate_distribution(&mode.p_tilde_star, 1e-7));
        assert!(validate_discrepancy(&mode.d_star, &mode.p_tilde_star, 1e-7));
        let start = initial_point(&mdl);
        assert!(mode.log_post_star >= mdl.log_posterior_stacked(&start));
        let recomputed = mdl.log_posterior(&mode.d_star, &mode.p_tilde_star);
        assert!((recomputed - mode.log_post_star).abs() < 1e-8);
        assert!(mode.converged);
    }

    #[test]
    fn fixed_step_rule_also_reaches_mode() {
        let mdl = model(&[vec![4, 2, 1]], &[vec![10, 10, 10]], GaussianPriorSpec::new(0.5, 0.1, 0.75, 0.75));
        let a = find_posterior_mode(&mdl, &SolverOptions::default()).unwrap();
        let opts = SolverOptions {
            step_rule: StepRule::Fixed(1e-3),
            ..SolverOptions::default()
        };
        let b = find_posterior_mode(&mdl, &opts).unwrap();
        assert!((a.log_post_star - b.log_post_star).abs() < 1e-8);
    }

    #[test]
    fn deterministic_given_seed() {
        let mdl = model(&[vec![4, 2, 1]], &[vec![1, 10, 3]], GaussianPriorSpec::new(0.5, 0.1, 0.75, 0.75));
        let opts = SolverOptions { seed: 17, ..SolverOptions::default() };
        let a = find_posterior_mode(&mdl, &opts).unwrap();
        let b = find_posterior_mode(&mdl, &opts).unwrap();
        assert_eq!(a.stacked(), b.stacked());
    }

    #[test]
    fn grid_oracle_three_outcomes() {
        let mdl = model(&[vec![2, 5, 1]], &[vec![3, 3, 6]], GaussianPriorSpec::new(0.25, 0.01, 0.75, 0.75));
        let mode = find_posterior_mode(&mdl, &SolverOptions::default()).unwrap();
        // Profile the grid around a coarse optimum: coarse scan at 0.02, then 0.002 locally.
        let grid = |c: [f64; 4], h: f64, r: i32| {
            let mut best = (f64::NEG_INFINITY, c);
            for a in -r..=r {
                for b in -r..=r {
                    for e in -r..=r {
                        for f in -r..=r {
                            let p = [c[0] + a as f64 * h, c[1] + b as f64 * h];
                            let t = [c[2] + e as f64 * h, c[3] + f as f64 * h];
                            let v = mdl.log_posterior_pp(&[p[0], p[1], 1.0 - p[0] - p[1]], &[t[0], t[1], 1.0 - t[0] - t[1]]);
                            if v > best.0 {
                                best = (v, [p[0], p[1], t[0], t[1]]);
                            }
                        }
                    }
                }
            }
            best
        };
        let coarse = grid([0.34, 0.34, 0.34, 0.34], 0.02, 16);
        let fine = grid(coarse.1, 0.002, 10);
        assert!((mode.log_post_star - fine.0).abs() < 1e-3);
        assert!(mode.log_post_star >= fine.0 - 1e-9);
    }
}
