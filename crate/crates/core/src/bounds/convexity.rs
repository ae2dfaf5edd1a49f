//! Empirical midpoint-convexity check of the level set in `(p, p̃)`.
//!
//! Posterior draws are pushed along the ray from the mode to the level-set
//! boundary (bisection, keeping the feasible end), paired up, and each
//! midpoint is tested for membership.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mode::find_posterior_mode;
use crate::options::SolverOptions;
use crate::posterior::PosteriorModel;
use crate::sampler::{mh_sample_from, SamplerOptions};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub pass_fraction: f64,
    pub n_pairs: usize,
    pub passed: usize,
    pub acceptance_rate: f64,
}

pub fn convexity_probe(model: &PosteriorModel, log_c: f64, n_pairs: usize, seed: u64) -> Result<ConvexityReport> {
    if n_pairs == 0 {
        return Ok(ConvexityReport {
            pass_fraction: 1.0,
            n_pairs: 0,
            passed: 0,
            acceptance_rate: 1.0,
        });
    }
    let mode = find_posterior_mode(
        model,
        &SolverOptions {
            seed,
            ..SolverOptions::default()
        },
    )?;
    if log_c > mode.log_post_star {
        return Err(Error::Infeasible {
            log_c,
            log_post_star: mode.log_post_star,
        });
    }
    let center = mode.stacked();
    let chain = mh_sample_from(
        model,
        &center,
        &SamplerOptions {
            n_draws: 2 * n_pairs,
            burn_in: 1000,
            thin: 5,
            seed,
            ..SamplerOptions::default()
        },
    )?;

    let mut boundary = Vec::with_capacity(chain.len());
    for draw in &chain.draws {
        if let Some(b) = push_to_boundary(model, &center, draw, log_c) {
            boundary.push(b);
        }
    }
    if boundary.len() < 2 * n_pairs {
        return Err(Error::Degenerate(format!(
            "only {} of {} boundary points found",
            boundary.len(),
            2 * n_pairs
        )));
    }
    let mut passed = 0;
    for pair in boundary.chunks(2) {
        let mid: Vec<f64> = pair[0].iter().zip(&pair[1]).map(|(a, b)| 0.5 * (a + b)).collect();
        if model.log_posterior_stacked(&mid) >= log_c {
            passed += 1;
        }
    }
    Ok(ConvexityReport {
        pass_fraction: passed as f64 / n_pairs as f64,
        n_pairs,
        passed,
        acceptance_rate: chain.acceptance_rate,
    })
}

/// Last feasible point on the ray `center + t·(x − center)`, `t ≥ 0`.
fn push_to_boundary(model: &PosteriorModel, center: &[f64], x: &[f64], log_c: f64) -> Option<Vec<f64>> {
    let dir: Vec<f64> = x.iter().zip(center).map(|(a, b)| a - b).collect();
    if dir.iter().all(|v| v.abs() < 1e-15) {
        return None;
    }
    let at = |t: f64| -> Vec<f64> { center.iter().zip(&dir).map(|(c, d)| c + t * d).collect() };
    let feasible = |t: f64| model.log_posterior_stacked(&at(t)) >= log_c;

    // Largest t keeping every coordinate positive.
    let mut t_max = f64::INFINITY;
    for (c, d) in center.iter().zip(&dir) {
        if *d < 0.0 {
            t_max = t_max.min(-c / d);
        }
    }
    let cap = t_max * (1.0 - 1e-12);
    let (mut lo, mut hi) = (0.0, 1.0f64.min(cap));
    while feasible(hi) {
        lo = hi;
        if hi >= cap || hi > 1e6 {
            return Some(at(hi));
        }
        hi = (2.0 * hi).min(cap);
    }
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo > 0.0).then(|| at(lo))
}
