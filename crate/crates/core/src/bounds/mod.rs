//! Extremes of a linear functional over a posterior level set.

mod alternating;
mod barrier;
mod brute;
mod convexity;
mod fixed_sim;
mod joint;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mode::{find_posterior_mode, ModeResult};
use crate::normal::{normal_cdf, normal_quantile};
use crate::options::{BoundMethod, SolverOptions};
use crate::posterior::{PosteriorModel, Table};

pub use brute::{brute_force_bound, brute_force_interval, BRUTE_FORCE_MAX_CELLS};
pub use convexity::{convexity_probe, ConvexityReport};
pub use fixed_sim::{fixed_sim_mode, solve_bound_fixed_sim, FixedSimMode};

/// Slack by which `log c` may exceed the mode value before the level set is
/// declared empty.
pub const INFEASIBILITY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Min,
    Max,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Min => -1.0,
            Direction::Max => 1.0,
        }
    }
}

/// Level-set threshold, either as a confidence level or as `ℓ` directly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum ThresholdSpec {
    #[serde(rename = "q")]
    Quantile(f64),
    #[serde(rename = "ell")]
    Ell(f64),
}

impl ThresholdSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ThresholdSpec::Quantile(q) if !(q > 0.0 && q < 1.0) => {
                Err(Error::Config(format!("q must lie in (0, 1), got {q}")))
            }
            ThresholdSpec::Ell(ell) if !(ell >= 0.0 && ell.is_finite()) => {
                Err(Error::Config(format!("ell must be finite and nonnegative, got {ell}")))
            }
            _ => Ok(()),
        }
    }

    /// `ℓ = Φ⁻¹(q)` (or `ℓ` itself).
    pub fn ell(&self) -> f64 {
        match *self {
            ThresholdSpec::Quantile(q) => normal_quantile(q),
            ThresholdSpec::Ell(ell) => ell,
        }
    }

    /// `q = Φ(ℓ)` (or `q` itself).
    pub fn q(&self) -> f64 {
        match *self {
            ThresholdSpec::Quantile(q) => q,
            ThresholdSpec::Ell(ell) => normal_cdf(ell),
        }
    }
}

/// `log c = log post* − ℓ²/2`.
pub fn threshold_from_spec(spec: &ThresholdSpec, log_post_star: f64) -> Result<f64> {
    spec.validate()?;
    let ell = spec.ell();
    Ok(log_post_star - 0.5 * ell * ell)
}

/// Coefficients `z_j(i)` of `ζ = Σ z_j(i) d_j(i) p̃_j(i) = Σ z_j(i) p_j(i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryFunctional {
    pub z: Table,
    pub description: String,
}

impl QueryFunctional {
    pub fn new(z: Table, description: impl Into<String>) -> Result<Self> {
        if !z.is_finite() {
            return Err(Error::InvalidData("functional coefficients must be finite".into()));
        }
        Ok(Self {
            z,
            description: description.into(),
        })
    }

    pub fn constant(s: usize, m: usize, z0: f64) -> Self {
        Self {
            z: Table::filled(s, m, z0),
            description: format!("constant {z0}"),
        }
    }

    /// Probability of outcome `i` at design `j`.
    pub fn indicator(s: usize, m: usize, j: usize, i: usize) -> Self {
        let mut z = Table::filled(s, m, 0.0);
        z.set(j, i, 1.0);
        Self {
            z,
            description: format!("P(outcome {} | design {})", i + 1, j + 1),
        }
    }

    /// Expectation of `values[i]` at design `j`.
    pub fn expectation(s: usize, j: usize, values: &[f64]) -> Result<Self> {
        let mut z = Table::filled(s, values.len(), 0.0);
        z.row_mut(j).copy_from_slice(values);
        Self::new(z, format!("E[value | design {}]", j + 1))
    }

    /// `Σ z p` for a flat (design-major) `p`.
    pub fn value_p(&self, p: &[f64]) -> f64 {
        self.z.as_slice().iter().zip(p).map(|(a, b)| a * b).sum()
    }

    /// `Σ z d p̃`.
    pub fn value(&self, d: &Table, p_tilde: &Table) -> f64 {
        self.value_p(d.hadamard(p_tilde).as_slice())
    }

    /// True when every entry of `z` is in `[0, 1]` and each design row has at
    /// most one nonzero entry (a probability of a set of outcomes).
    pub fn is_probability(&self) -> bool {
        let vals = self.z.as_slice();
        let binary = vals.iter().all(|v| *v == 0.0 || *v == 1.0);
        binary && vals.iter().sum::<f64>() >= 1.0 && {
            let mut seen_rows = 0;
            for j in 0..self.z.rows() {
                if self.z.row(j).iter().any(|v| *v != 0.0) {
                    seen_rows += 1;
                }
            }
            seen_rows == 1
        }
    }

    fn check_shape(&self, s: usize, m: usize) -> Result<()> {
        if (self.z.rows(), self.z.cols()) != (s, m) {
            return Err(Error::InvalidData(format!(
                "functional is {}x{}, model is {s}x{m}",
                self.z.rows(),
                self.z.cols()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverStatus {
    Optimal,
    MaxIter,
    Infeasible,
}

/// One direction of a bound computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundSolution {
    pub value: f64,
    pub status: SolverStatus,
    pub iterations: usize,
    pub feasibility_residual: f64,
    /// Optimizer as stacked `[p; p̃]` (joint problems) or `d` (fixed simulator).
    pub x: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundResult {
    pub lower: f64,
    pub upper: f64,
    pub log_c: f64,
    pub log_post_star: f64,
    pub mode_value: f64,
    pub q: f64,
    pub ell: f64,
    pub lower_status: SolverStatus,
    pub upper_status: SolverStatus,
    pub feasibility_residual: f64,
    pub lower_iterations: usize,
    pub upper_iterations: usize,
}

impl BoundResult {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, value: f64) -> bool {
        self.lower <= value && value <= self.upper
    }

    pub fn is_optimal(&self) -> bool {
        self.lower_status == SolverStatus::Optimal && self.upper_status == SolverStatus::Optimal
    }

    /// Strict disjointness of the two intervals.
    pub fn disjoint_from(&self, other: &BoundResult) -> bool {
        self.lower > other.upper || other.lower > self.upper
    }

    /// `self` lies strictly above `other`.
    pub fn ranks_above(&self, other: &BoundResult) -> bool {
        self.lower > other.upper
    }
}

/// Stacked feasibility residual for a joint `[p; p̃]` point.
pub(crate) fn joint_residual(model: &PosteriorModel, x: &[f64], log_c: f64) -> f64 {
    let m = model.m();
    let mut worst: f64 = 0.0;
    for row in x.chunks(m) {
        worst = worst.max((row.iter().sum::<f64>() - 1.0).abs());
    }
    for v in x {
        worst = worst.max(-v);
    }
    let value = model.log_posterior_stacked(x);
    if value.is_finite() {
        worst.max(log_c - value)
    } else {
        f64::INFINITY
    }
}

/// Optimize `ζ` over `{log post ≥ log c}` starting from a known mode.
pub fn solve_bound_from_mode(
    model: &PosteriorModel,
    functional: &QueryFunctional,
    log_c: f64,
    direction: Direction,
    mode: &ModeResult,
    opts: &SolverOptions,
) -> Result<BoundSolution> {
    opts.validate()?;
    functional.check_shape(model.s(), model.m())?;
    if !log_c.is_finite() || log_c > mode.log_post_star + INFEASIBILITY_SLACK {
        return Err(Error::Infeasible {
            log_c,
            log_post_star: mode.log_post_star,
        });
    }
    match opts.bound_method {
        BoundMethod::Joint => joint::solve(model, functional, log_c, direction, mode, opts),
        BoundMethod::Alternating => alternating::solve(model, functional, log_c, direction, mode, opts),
    }
}

pub fn solve_bound(
    model: &PosteriorModel,
    functional: &QueryFunctional,
    log_c: f64,
    direction: Direction,
    opts: &SolverOptions,
) -> Result<BoundSolution> {
    let mode = find_posterior_mode(model, opts)?;
    solve_bound_from_mode(model, functional, log_c, direction, &mode, opts)
}

pub fn bound_interval(
    model: &PosteriorModel,
    functional: &QueryFunctional,
    spec: &ThresholdSpec,
    opts: &SolverOptions,
) -> Result<BoundResult> {
    let mode = find_posterior_mode(model, opts)?;
    bound_interval_from_mode(model, functional, spec, &mode, opts)
}

/// As [`bound_interval`], reusing a mode already computed for this model.
pub fn bound_interval_from_mode(
    model: &PosteriorModel,
    functional: &QueryFunctional,
    spec: &ThresholdSpec,
    mode: &ModeResult,
    opts: &SolverOptions,
) -> Result<BoundResult> {
    let log_c = threshold_from_spec(spec, mode.log_post_star)?;
    let lower = solve_bound_from_mode(model, functional, log_c, Direction::Min, mode, opts)?;
    let upper = solve_bound_from_mode(model, functional, log_c, Direction::Max, mode, opts)?;
    Ok(BoundResult {
        lower: lower.value,
        upper: upper.value,
        log_c,
        log_post_star: mode.log_post_star,
        mode_value: functional.value_p(mode.p_star.as_slice()),
        q: spec.q(),
        ell: spec.ell(),
        lower_status: lower.status,
        upper_status: upper.status,
        feasibility_residual: lower.feasibility_residual.max(upper.feasibility_residual),
        lower_iterations: lower.iterations,
        upper_iterations: upper.iterations,
    })
}

#[cfg(test)]
mod tests;
