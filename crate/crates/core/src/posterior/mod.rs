//! Data, prior and unnormalized log posterior over discrepancy `d` and
//! simulator distribution `p̃`.
//!
//! All log densities drop their normalizing constants. Consumers only use
//! differences of the log posterior, so the constants never matter.
//!
//! Two parameterizations are exposed:
//! * `(d, p̃)`: the natural one, with the joint validity constraint
//!   `Σ_i d_j(i) p̃_j(i) = 1`;
//! * `(p, p̃)` with `p = d ∘ p̃`: both blocks live on plain simplices, which is
//!   what the optimizers and the sampler work in.

mod data;
mod prior;

pub use data::{
    validate_discrepancy, validate_distribution, CountTable, DiscrepancyTable, ProbTable,
    ProblemData, Table, VALIDITY_TOL,
};
pub use prior::{build_prior_correlation, Correlation, GaussianPrior, GaussianPriorSpec, DEFAULT_JITTER};

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

/// `Σ_j Σ_i n_j(i) log(d_j(i) p̃_j(i)) + Σ_j Σ_i ñ_j(i) log p̃_j(i)`.
///
/// Zero-count cells contribute nothing; a positive count against a
/// nonpositive probability gives `−∞`.
pub fn log_likelihood(d: &Table, p_tilde: &Table, data: &ProblemData) -> f64 {
    let real = data.real_counts().as_slice();
    let sim = data.sim_counts().as_slice();
    let mut total = 0.0;
    for (k, (&dv, &pt)) in d.as_slice().iter().zip(p_tilde.as_slice()).enumerate() {
        if real[k] > 0 {
            let arg = dv * pt;
            if !(arg > 0.0) {
                return f64::NEG_INFINITY;
            }
            total += real[k] as f64 * arg.ln();
        }
        if sim[k] > 0 {
            if !(pt > 0.0) {
                return f64::NEG_INFINITY;
            }
            total += sim[k] as f64 * pt.ln();
        }
    }
    total
}

/// Value, gradient and Hessian of the log posterior in the `(p, p̃)`
/// parameterization. The variable vector is `[p; p̃]`, each block design-major.
#[derive(Debug, Clone)]
pub struct Derivatives {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

/// Data plus resolved prior. Immutable once built, cheap to share across threads.
#[derive(Debug, Clone)]
pub struct PosteriorModel {
    data: ProblemData,
    prior: GaussianPrior,
}

impl PosteriorModel {
    pub fn new(data: ProblemData, prior: &GaussianPriorSpec) -> Result<Self> {
        let prior = GaussianPrior::build(prior, data.design_coords(), data.m())?;
        Ok(Self { data, prior })
    }

    pub fn data(&self) -> &ProblemData {
        &self.data
    }

    pub fn prior(&self) -> &GaussianPrior {
        &self.prior
    }

    pub fn s(&self) -> usize {
        self.data.s()
    }

    pub fn m(&self) -> usize {
        self.data.m()
    }

    /// Number of cells `s·m`.
    pub fn cells(&self) -> usize {
        self.s() * self.m()
    }

    pub fn log_likelihood(&self, d: &Table, p_tilde: &Table) -> f64 {
        log_likelihood(d, p_tilde, &self.data)
    }

    /// Gaussian prior restricted to the validity region; `−∞` outside it.
    pub fn log_prior(&self, d: &Table, p_tilde: &Table) -> f64 {
        if !self.in_prior_region(d, p_tilde) {
            return f64::NEG_INFINITY;
        }
        self.prior.log_f(p_tilde.as_slice()) + self.prior.log_g(d.as_slice())
    }

    pub fn log_posterior(&self, d: &Table, p_tilde: &Table) -> f64 {
        let prior = self.log_prior(d, p_tilde);
        if prior == f64::NEG_INFINITY {
            return prior;
        }
        prior + self.log_likelihood(d, p_tilde)
    }

    fn in_prior_region(&self, d: &Table, p_tilde: &Table) -> bool {
        let shape = (self.s(), self.m());
        (d.rows(), d.cols()) == shape
            && (p_tilde.rows(), p_tilde.cols()) == shape
            && validate_distribution(p_tilde, VALIDITY_TOL)
            && validate_discrepancy(d, p_tilde, VALIDITY_TOL)
    }

    /// Log posterior at `d = p / p̃`. Requires `p̃ > 0` and both blocks on the
    /// simplex (within [`VALIDITY_TOL`]); returns `−∞` otherwise.
    pub fn log_posterior_pp(&self, p: &[f64], p_tilde: &[f64]) -> f64 {
        match self.pp_terms(p, p_tilde) {
            Some((value, _)) => value,
            None => f64::NEG_INFINITY,
        }
    }

    /// Log posterior at a stacked point `x = [p; p̃]`.
    pub fn log_posterior_stacked(&self, x: &[f64]) -> f64 {
        let n = self.cells();
        self.log_posterior_pp(&x[..n], &x[n..])
    }

    fn pp_terms(&self, p: &[f64], p_tilde: &[f64]) -> Option<(f64, Vec<f64>)> {
        let (s, m) = (self.s(), self.m());
        let n = s * m;
        if p.len() != n || p_tilde.len() != n {
            return None;
        }
        for j in 0..s {
            let rp = &p[j * m..(j + 1) * m];
            let rt = &p_tilde[j * m..(j + 1) * m];
            if (rp.iter().sum::<f64>() - 1.0).abs() > VALIDITY_TOL
                || (rt.iter().sum::<f64>() - 1.0).abs() > VALIDITY_TOL
            {
                return None;
            }
        }
        let real = self.data.real_counts().as_slice();
        let sim = self.data.sim_counts().as_slice();
        let mut value = 0.0;
        let mut d = Vec::with_capacity(n);
        for k in 0..n {
            let (pk, tk) = (p[k], p_tilde[k]);
            if !(tk > 0.0) || !(pk >= 0.0) || !pk.is_finite() || !tk.is_finite() {
                return None;
            }
            if real[k] > 0 {
                if pk == 0.0 {
                    return None;
                }
                value += real[k] as f64 * pk.ln();
            }
            if sim[k] > 0 {
                value += sim[k] as f64 * tk.ln();
            }
            d.push(pk / tk);
        }
        value += self.prior.log_f(p_tilde) + self.prior.log_g(&d);
        Some((value, d))
    }

    /// Value and gradient at `x = [p; p̃]`.
    pub fn gradient_pp(&self, x: &[f64]) -> Option<(f64, DVector<f64>)> {
        let n = self.cells();
        let (p, pt) = x.split_at(n);
        let (value, d) = self.pp_terms(p, pt)?;
        let g_grad = self.prior.grad_g(&d);
        Some((value, self.assemble_gradient(p, pt, &g_grad)))
    }

    fn assemble_gradient(&self, p: &[f64], pt: &[f64], g_grad: &DVector<f64>) -> DVector<f64> {
        let n = self.cells();
        let real = self.data.real_counts().as_slice();
        let sim = self.data.sim_counts().as_slice();
        let f_grad = self.prior.grad_f(pt);
        let mut gradient = DVector::zeros(2 * n);
        for k in 0..n {
            let real_term = if real[k] > 0 { real[k] as f64 / p[k] } else { 0.0 };
            let t = pt[k];
            gradient[k] = real_term + g_grad[k] / t;
            gradient[n + k] = sim[k] as f64 / t + f_grad[k] - p[k] / (t * t) * g_grad[k];
        }
        gradient
    }

    /// Value, gradient and Hessian at `x = [p; p̃]`, or `None` outside the domain.
    pub fn derivatives_pp(&self, x: &[f64]) -> Option<Derivatives> {
        let n = self.cells();
        let (p, pt) = x.split_at(n);
        let (value, d) = self.pp_terms(p, pt)?;
        let real = self.data.real_counts().as_slice();
        let sim = self.data.sim_counts().as_slice();

        let g_grad = self.prior.grad_g(&d);
        let hg = self.prior.hess_g();
        let hf = self.prior.hess_f();

        // Jacobians of d_k = p_k / p̃_k.
        let a: Vec<f64> = pt.iter().map(|t| 1.0 / t).collect();
        let b: Vec<f64> = p.iter().zip(pt).map(|(pk, tk)| -pk / (tk * tk)).collect();

        let gradient = self.assemble_gradient(p, pt, &g_grad);

        let mut hessian = DMatrix::zeros(2 * n, 2 * n);
        for r in 0..n {
            for c in 0..n {
                let h = hg[(r, c)];
                hessian[(r, c)] = a[r] * h * a[c];
                hessian[(r, n + c)] = a[r] * h * b[c];
                hessian[(n + r, c)] = b[r] * h * a[c];
                hessian[(n + r, n + c)] = b[r] * h * b[c] + hf[(r, c)];
            }
        }
        for k in 0..n {
            let t2 = pt[k] * pt[k];
            if real[k] > 0 {
                hessian[(k, k)] -= real[k] as f64 / (p[k] * p[k]);
            }
            hessian[(n + k, n + k)] -= sim[k] as f64 / t2;
            // Second derivatives of d_k contracted with ∂g/∂d_k.
            let cross = -g_grad[k] / t2;
            hessian[(k, n + k)] += cross;
            hessian[(n + k, k)] += cross;
            hessian[(n + k, n + k)] += 2.0 * g_grad[k] * p[k] / (t2 * pt[k]);
        }
        Some(Derivatives {
            value,
            gradient,
            hessian,
        })
    }

    /// Split a stacked `[p; p̃]` vector into `(d, p̃)` tables.
    pub fn unstack(&self, x: &[f64]) -> (DiscrepancyTable, Table) {
        let (s, m, n) = (self.s(), self.m(), self.cells());
        let p = Table::new(s, m, x[..n].to_vec()).expect("shape");
        let pt = Table::new(s, m, x[n..2 * n].to_vec()).expect("shape");
        (DiscrepancyTable::from_ratio(&p, &pt), pt)
    }
}
