//! Gaussian prior on the vectorized discrepancy and simulator tables.
//!
//! The default correlation is the product kernel
//! `R[(j,k),(j',k')] = ρ_x^{|x_j − x_j'|} · ρ_y^{|k − k'|}`, i.e. `R_x ⊗ R_y`,
//! plus a small diagonal jitter. Because `R_x ⊗ R_y` is diagonalized by
//! `U_x ⊗ U_y`, the precision of the jittered matrix is obtained from two small
//! eigendecompositions instead of one dense inversion.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_JITTER: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianPriorSpec {
    pub lambda_d: f64,
    pub lambda_p: f64,
    pub rho_design: f64,
    pub rho_outcome: f64,
    #[serde(default = "default_jitter")]
    pub jitter: f64,
    /// Explicit `R_d` (sm×sm, design-major). Overrides the kernel when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_d: Option<Vec<Vec<f64>>>,
    /// Explicit `R_p̃`. Overrides the kernel when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub r_p: Option<Vec<Vec<f64>>>,
}

fn default_jitter() -> f64 {
    DEFAULT_JITTER
}

impl GaussianPriorSpec {
    pub fn new(lambda_d: f64, lambda_p: f64, rho_design: f64, rho_outcome: f64) -> Self {
        Self {
            lambda_d,
            lambda_p,
            rho_design,
            rho_outcome,
            jitter: DEFAULT_JITTER,
            r_d: None,
            r_p: None,
        }
    }

    /// Kernel prior with identity correlation for both blocks.
    pub fn identity(lambda_d: f64, lambda_p: f64, sm: usize) -> Self {
        let eye: Vec<Vec<f64>> = (0..sm)
            .map(|a| (0..sm).map(|b| if a == b { 1.0 } else { 0.0 }).collect())
            .collect();
        Self {
            r_d: Some(eye.clone()),
            r_p: Some(eye),
            ..Self::new(lambda_d, lambda_p, 0.5, 0.5)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_d > 0.0 && self.lambda_d.is_finite()) {
            return Err(Error::Config(format!("lambda_d must be positive, got {}", self.lambda_d)));
        }
        if !(self.lambda_p > 0.0 && self.lambda_p.is_finite()) {
            return Err(Error::Config(format!("lambda_p must be positive, got {}", self.lambda_p)));
        }
        let uses_kernel = self.r_d.is_none() || self.r_p.is_none();
        if uses_kernel {
            for (name, rho) in [("rho_design", self.rho_design), ("rho_outcome", self.rho_outcome)] {
                if !(rho > 0.0 && rho < 1.0) {
                    return Err(Error::Config(format!("{name} must lie in (0,1), got {rho}")));
                }
            }
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::Config(format!("jitter must be nonnegative, got {}", self.jitter)));
        }
        Ok(())
    }
}

/// A correlation matrix together with its inverse.
#[derive(Debug, Clone)]
pub struct Correlation {
    pub matrix: DMatrix<f64>,
    pub precision: DMatrix<f64>,
}

impl Correlation {
    fn from_kernel(design_coords: &[f64], m: usize, rho_x: f64, rho_y: f64, jitter: f64) -> Result<Self> {
        let rx = exponential_kernel(design_coords, rho_x);
        let outcome_idx: Vec<f64> = (0..m).map(|k| k as f64).collect();
        let ry = exponential_kernel(&outcome_idx, rho_y);
        let ex = SymmetricEigen::new(rx.clone());
        let ey = SymmetricEigen::new(ry.clone());
        let (s, sm) = (design_coords.len(), design_coords.len() * m);

        let mut eig = DVector::zeros(sm);
        for a in 0..s {
            for b in 0..m {
                eig[a * m + b] = ex.eigenvalues[a] * ey.eigenvalues[b] + jitter;
            }
        }
        check_spectrum(&eig, "kernel correlation")?;

        let basis = ex.eigenvectors.kronecker(&ey.eigenvectors);
        let scaled = DMatrix::from_fn(sm, sm, |r, c| basis[(r, c)] / eig[c]);
        let mut precision = &scaled * basis.transpose();
        symmetrize(&mut precision);
        let matrix = rx.kronecker(&ry) + DMatrix::identity(sm, sm) * jitter;
        Ok(Self { matrix, precision })
    }

    fn from_explicit(rows: &[Vec<f64>], sm: usize, name: &str) -> Result<Self> {
        if rows.len() != sm || rows.iter().any(|r| r.len() != sm) {
            return Err(Error::Config(format!("{name} must be {sm}x{sm}")));
        }
        let matrix = DMatrix::from_fn(sm, sm, |r, c| rows[r][c]);
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config(format!("{name} has non-finite entries")));
        }
        let scale = matrix.amax().max(1.0);
        if (&matrix - matrix.transpose()).amax() > 1e-10 * scale {
            return Err(Error::Config(format!("{name} is not symmetric")));
        }
        let chol = matrix
            .clone()
            .cholesky()
            .ok_or_else(|| Error::NotPositiveDefinite(name.to_string()))?;
        let mut precision = chol.inverse();
        symmetrize(&mut precision);
        Ok(Self { matrix, precision })
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

fn check_spectrum(eig: &DVector<f64>, what: &str) -> Result<()> {
    let min = eig.min();
    let max = eig.max();
    if !(min > 0.0) || min < max * f64::EPSILON * eig.len() as f64 {
        return Err(Error::NotPositiveDefinite(format!(
            "{what}: eigenvalue range [{min:e}, {max:e}]"
        )));
    }
    Ok(())
}

fn exponential_kernel(points: &[f64], rho: f64) -> DMatrix<f64> {
    let n = points.len();
    DMatrix::from_fn(n, n, |a, b| rho.powf((points[a] - points[b]).abs()))
}

/// `R_x ⊗ R_y + jitter·I` for design coordinates `x` and outcome indices `0..m`.
pub fn build_prior_correlation(
    design_coords: &[f64],
    m: usize,
    rho_design: f64,
    rho_outcome: f64,
    jitter: f64,
) -> Result<DMatrix<f64>> {
    Ok(Correlation::from_kernel(design_coords, m, rho_design, rho_outcome, jitter)?.matrix)
}

/// Prior with its correlation matrices resolved for a given design layout.
#[derive(Debug, Clone)]
pub struct GaussianPrior {
    spec: GaussianPriorSpec,
    s: usize,
    m: usize,
    r_d: Correlation,
    r_p: Correlation,
}

impl GaussianPrior {
    pub fn build(spec: &GaussianPriorSpec, design_coords: &[f64], m: usize) -> Result<Self> {
        spec.validate()?;
        let s = design_coords.len();
        let sm = s * m;
        let kernel = || {
            Correlation::from_kernel(design_coords, m, spec.rho_design, spec.rho_outcome, spec.jitter)
        };
        let r_d = match &spec.r_d {
            Some(rows) => Correlation::from_explicit(rows, sm, "R_d")?,
            None => kernel()?,
        };
        let r_p = match &spec.r_p {
            Some(rows) => Correlation::from_explicit(rows, sm, "R_p")?,
            None => kernel()?,
        };
        Ok(Self {
            spec: spec.clone(),
            s,
            m,
            r_d,
            r_p,
        })
    }

    pub fn spec(&self) -> &GaussianPriorSpec {
        &self.spec
    }

    pub fn r_d(&self) -> &Correlation {
        &self.r_d
    }

    pub fn r_p(&self) -> &Correlation {
        &self.r_p
    }

    pub fn lambda_d(&self) -> f64 {
        self.spec.lambda_d
    }

    pub fn lambda_p(&self) -> f64 {
        self.spec.lambda_p
    }

    pub fn dim(&self) -> usize {
        self.s * self.m
    }

    /// `g(d) = −λ_d (d−1)ᵀ R_d⁻¹ (d−1)`
    pub fn log_g(&self, d: &[f64]) -> f64 {
        -self.spec.lambda_d * quad_form(&self.r_d.precision, d, 1.0)
    }

    /// `f(p̃) = −λ_p̃ (p̃−1/m)ᵀ R_p̃⁻¹ (p̃−1/m)`
    pub fn log_f(&self, p_tilde: &[f64]) -> f64 {
        -self.spec.lambda_p * quad_form(&self.r_p.precision, p_tilde, 1.0 / self.m as f64)
    }

    /// Gradient of `g` with respect to `d`.
    pub fn grad_g(&self, d: &[f64]) -> DVector<f64> {
        let e = DVector::from_iterator(d.len(), d.iter().map(|v| v - 1.0));
        &self.r_d.precision * e * (-2.0 * self.spec.lambda_d)
    }

    pub fn grad_f(&self, p_tilde: &[f64]) -> DVector<f64> {
        let c = 1.0 / self.m as f64;
        let e = DVector::from_iterator(p_tilde.len(), p_tilde.iter().map(|v| v - c));
        &self.r_p.precision * e * (-2.0 * self.spec.lambda_p)
    }

    /// Constant Hessian of `g`: `−2 λ_d R_d⁻¹`.
    pub fn hess_g(&self) -> DMatrix<f64> {
        &self.r_d.precision * (-2.0 * self.spec.lambda_d)
    }

    pub fn hess_f(&self) -> DMatrix<f64> {
        &self.r_p.precision * (-2.0 * self.spec.lambda_p)
    }
}

/// `(v − c)ᵀ A (v − c)` for a constant shift `c`.
fn quad_form(a: &DMatrix<f64>, v: &[f64], c: f64) -> f64 {
    let n = v.len();
    let mut total = 0.0;
    for col in 0..n {
        let ec = v[col] - c;
        if ec == 0.0 {
            continue;
        }
        let column = a.column(col);
        let mut acc = 0.0;
        for row in 0..n {
            acc += column[row] * (v[row] - c);
        }
        total += acc * ec;
    }
    total
}
