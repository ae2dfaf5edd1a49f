//! Exhaustive grid scan used as a reference for the smooth solvers.
//!
//! The real-system block `p` is enumerated on a simplex grid. A grid point is
//! feasible when `max_p̃ log post(p, p̃) ≥ log c`; the inner maximum is found
//! by a derivative-free pattern search over mass transfers between outcomes.

use super::{Direction, QueryFunctional};
use crate::error::{Error, Result};
use crate::posterior::PosteriorModel;

/// Largest `s·m` accepted by the scan.
pub const BRUTE_FORCE_MAX_CELLS: usize = 6;
const MAX_GRID_POINTS: usize = 4_000_000;

pub fn brute_force_bound(
    model: &PosteriorModel,
    functional: &QueryFunctional,
    log_c: f64,
    direction: Direction,
    grid_step: f64,
) -> Result<f64> {
    let scan = Scan::new(model, functional, log_c, grid_step)?;
    scan.extreme(direction)
}

/// `(min, max)` over the grid in a single pass setup.
pub fn brute_force_interval(
    model: &PosteriorModel,
    functional: &QueryFunctional,
    log_c: f64,
    grid_step: f64,
) -> Result<(f64, f64)> {
    let scan = Scan::new(model, functional, log_c, grid_step)?;
    Ok((scan.extreme(Direction::Min)?, scan.extreme(Direction::Max)?))
}

struct Scan<'a> {
    model: &'a PosteriorModel,
    log_c: f64,
    /// Grid points as flat `p`, sorted by ascending `ζ`.
    points: Vec<(f64, Vec<f64>)>,
    /// Upper bound on `max_p̃ [Σ ñ log p̃ + f(p̃)]` (since `g ≤ 0`).
    sim_cap: f64,
    sim_start: Vec<f64>,
}

impl<'a> Scan<'a> {
    fn new(model: &'a PosteriorModel, functional: &QueryFunctional, log_c: f64, grid_step: f64) -> Result<Self> {
        let (s, m) = (model.s(), model.m());
        if s * m > BRUTE_FORCE_MAX_CELLS {
            return Err(Error::TooLarge(format!("s·m = {} exceeds {BRUTE_FORCE_MAX_CELLS}", s * m)));
        }
        functional.check_shape(s, m)?;
        if !(grid_step > 0.0 && grid_step <= 0.5) {
            return Err(Error::Config("grid_step must lie in (0, 0.5]".into()));
        }
        let parts = (1.0 / grid_step).round() as usize;
        let rows = compositions(parts, m);
        let total = rows.len().checked_pow(s as u32).unwrap_or(usize::MAX);
        if total > MAX_GRID_POINTS {
            return Err(Error::TooLarge(format!("{total} grid points at step {grid_step}")));
        }

        let real = model.data().real_counts();
        let mut points = Vec::with_capacity(total);
        let mut index = vec![0usize; s];
        'outer: loop {
            let mut p = Vec::with_capacity(s * m);
            for &r in &index {
                p.extend(rows[r].iter().map(|&c| c as f64 / parts as f64));
            }
            let supported = p.iter().zip(real.as_slice()).all(|(v, n)| *n == 0 || *v > 0.0);
            if supported {
                points.push((functional.value_p(&p), p));
            }
            for j in (0..s).rev() {
                index[j] += 1;
                if index[j] < rows.len() {
                    continue 'outer;
                }
                index[j] = 0;
            }
            break;
        }
        points.sort_by(|a, b| a.0.total_cmp(&b.0));

        let sim_start: Vec<f64> = model.data().smoothed_sim_frequencies(1.0).as_slice().to_vec();
        let sim_only = |pt: &[f64]| -> f64 {
            if pt.iter().any(|v| *v <= 0.0) {
                return f64::NEG_INFINITY;
            }
            let sim = model.data().sim_counts().as_slice();
            let mut v = model.prior().log_f(pt);
            for (n, x) in sim.iter().zip(pt) {
                if *n > 0 {
                    v += *n as f64 * x.ln();
                }
            }
            v
        };
        let sim_cap = pattern_search(&sim_only, sim_start.clone(), m, f64::INFINITY) + 1e-9;
        Ok(Self {
            model,
            log_c,
            points,
            sim_cap,
            sim_start,
        })
    }

    fn extreme(&self, direction: Direction) -> Result<f64> {
        let order: Box<dyn Iterator<Item = &(f64, Vec<f64>)>> = match direction {
            Direction::Min => Box::new(self.points.iter()),
            Direction::Max => Box::new(self.points.iter().rev()),
        };
        let mut best_seen = f64::NEG_INFINITY;
        for (zeta, p) in order {
            let (feasible, value) = self.feasible(p);
            best_seen = best_seen.max(value);
            if feasible {
                return Ok(*zeta);
            }
        }
        Err(Error::Infeasible {
            log_c: self.log_c,
            log_post_star: best_seen,
        })
    }

    /// Whether some `p̃` puts `(p, p̃)` in the level set, with the best value found.
    fn feasible(&self, p: &[f64]) -> (bool, f64) {
        let real = self.model.data().real_counts().as_slice();
        let data_term: f64 = real
            .iter()
            .zip(p)
            .filter(|(n, _)| **n > 0)
            .map(|(n, v)| *n as f64 * v.ln())
            .sum();
        if data_term + self.sim_cap < self.log_c {
            return (false, f64::NEG_INFINITY);
        }
        let m = self.model.m();
        let objective = |pt: &[f64]| self.model.log_posterior_pp(p, pt);
        let blend = |a: &[f64], b: &[f64], t: f64| -> Vec<f64> {
            a.iter().zip(b).map(|(x, y)| (1.0 - t) * x + t * y).collect()
        };
        let uniform = vec![1.0 / m as f64; p.len()];
        let near_p = blend(p, &uniform, 0.01);
        let starts = [
            self.sim_start.clone(),
            near_p.clone(),
            blend(&self.sim_start, &near_p, 0.5),
        ];
        let mut best = f64::NEG_INFINITY;
        for start in starts {
            let v = pattern_search(&objective, start, m, self.log_c);
            best = best.max(v);
            if best >= self.log_c {
                return (true, best);
            }
        }
        (false, best)
    }
}

/// Maximize `f` over products of simplices by pairwise mass transfers with a
/// shrinking step. Returns early once `target` is reached.
fn pattern_search<F: Fn(&[f64]) -> f64>(f: &F, mut x: Vec<f64>, m: usize, target: f64) -> f64 {
    let mut value = f(&x);
    let mut step: f64 = 0.05;
    while step > 1e-11 {
        let mut improved = false;
        for row in 0..x.len() / m {
            for a in 0..m {
                for b in 0..m {
                    if a == b {
                        continue;
                    }
                    let (ia, ib) = (row * m + a, row * m + b);
                    let moved = step.min(x[ib] * 0.5);
                    if moved <= 0.0 {
                        continue;
                    }
                    x[ia] += moved;
                    x[ib] -= moved;
                    let v = f(&x);
                    if v > value {
                        value = v;
                        improved = true;
                        if value >= target {
                            return value;
                        }
                    } else {
                        x[ia] -= moved;
                        x[ib] += moved;
                    }
                }
            }
        }
        if !improved {
            step *= 0.25;
        }
    }
    value
}

/// All ways of writing `total` as an ordered sum of `parts` nonnegative integers.
fn compositions(total: usize, parts: usize) -> Vec<Vec<usize>> {
    fn rec(left: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if parts == 1 {
            prefix.push(left);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for k in 0..=left {
            prefix.push(k);
            rec(left - k, parts - 1, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(total, parts, &mut Vec::new(), &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn composition_counts() {
        assert_eq!(compositions(4, 2).len(), 5);
        assert_eq!(compositions(10, 3).len(), 66);
        assert!(compositions(5, 3).iter().all(|c| c.iter().sum::<usize>() == 5));
    }

    #[test]
    fn pattern_search_finds_simplex_maximum() {
        let f = |x: &[f64]| 3.0 * x[0].ln() + x[1].ln() + 6.0 * x[2].ln();
        let v = pattern_search(&f, vec![1.0 / 3.0; 3], 3, f64::INFINITY);
        let want = 3.0 * 0.3f64.ln() + 0.1f64.ln() + 6.0 * 0.6f64.ln();
        assert!((v - want).abs() < 1e-9);
    }
}
