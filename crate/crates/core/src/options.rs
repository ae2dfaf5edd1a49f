use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Constant step length for projected gradient ascent.
    Fixed(f64),
    /// Armijo backtracking with step growth between iterations.
    Backtracking,
}

/// How `solve_bound` handles the joint (d, p̃) problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMethod {
    /// Log-barrier Newton on both simplex blocks `(p, p̃)` at once.
    Joint,
    /// Cyclic d-step / p̃-step, each a convex level-set program.
    Alternating,
}

/// Log-barrier weight schedule `μ_k = mu0 · factor^k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BarrierSchedule {
    pub mu0: f64,
    pub factor: f64,
    pub max_rounds: usize,
    /// Stop once `μ · (number of inequality constraints)` drops below this.
    pub gap_tolerance: f64,
}

impl Default for BarrierSchedule {
    fn default() -> Self {
        Self {
            mu0: 1.0,
            factor: 0.2,
            max_rounds: 24,
            gap_tolerance: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverOptions {
    /// Iteration cap for projected gradient ascent (mode search) and for
    /// the alternation loop.
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub step_rule: StepRule,
    pub restarts: usize,
    pub seed: u64,
    pub interior_floor: f64,
    pub newton_max_iterations: usize,
    pub barrier: BarrierSchedule,
    pub bound_method: BoundMethod,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iterations: 300,
            gradient_tolerance: 1e-9,
            step_rule: StepRule::Backtracking,
            restarts: 5,
            seed: 0,
            interior_floor: 1e-10,
            newton_max_iterations: 200,
            barrier: BarrierSchedule::default(),
            bound_method: BoundMethod::Joint,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 || self.newton_max_iterations == 0 {
            return Err(Error::Config("iteration limits must be at least 1".into()));
        }
        if !(self.gradient_tolerance > 0.0) {
            return Err(Error::Config("gradient_tolerance must be positive".into()));
        }
        if !(self.interior_floor > 0.0 && self.interior_floor < 1e-3) {
            return Err(Error::Config("interior_floor must lie in (0, 1e-3)".into()));
        }
        if let StepRule::Fixed(step) = self.step_rule {
            if !(step > 0.0) {
                return Err(Error::Config("fixed step must be positive".into()));
            }
        }
        let b = &self.barrier;
        if !(b.mu0 > 0.0 && b.factor > 0.0 && b.factor < 1.0 && b.gap_tolerance > 0.0) || b.max_rounds == 0 {
            return Err(Error::Config("invalid barrier schedule".into()));
        }
        Ok(())
    }
}
