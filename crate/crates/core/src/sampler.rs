//! Random-walk Metropolis over `(p, p̃)` rows with logistic-normal proposals.
//!
//! Each sweep updates the `2s` simplex rows one at a time. A row `x` is mapped
//! to additive log-ratios `y_i = log(x_i / x_m)`, perturbed by `N(0, σ_r² I)`
//! and mapped back; the Jacobian `Π x_i` enters the acceptance ratio, so the
//! chain targets `exp(log post)` with respect to Lebesgue measure on the
//! simplices.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bounds::QueryFunctional;
use crate::error::{Error, Result};
use crate::mode::find_posterior_mode;
use crate::options::SolverOptions;
use crate::posterior::{DiscrepancyTable, PosteriorModel, Table};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerOptions {
    pub n_draws: usize,
    pub burn_in: usize,
    pub step_scale: f64,
    pub seed: u64,
    /// Keep every `thin`-th sweep.
    pub thin: usize,
    /// Tune per-row scales toward `target_acceptance` during burn-in.
    pub adapt: bool,
    pub target_acceptance: f64,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        Self {
            n_draws: 10_000,
            burn_in: 2_000,
            step_scale: 0.1,
            seed: 0,
            thin: 1,
            adapt: true,
            target_acceptance: 0.25,
        }
    }
}

impl SamplerOptions {
    pub fn validate(&self) -> Result<()> {
        if self.n_draws == 0 {
            return Err(Error::Config("n_draws must be at least 1".into()));
        }
        if self.thin == 0 {
            return Err(Error::Config("thin must be at least 1".into()));
        }
        if !(self.step_scale >= 0.0 && self.step_scale.is_finite()) {
            return Err(Error::Config("step_scale must be finite and nonnegative".into()));
        }
        if !(self.target_acceptance > 0.0 && self.target_acceptance < 1.0) {
            return Err(Error::Config("target_acceptance must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Chain {
    pub s: usize,
    pub m: usize,
    /// Stacked `[p; p̃]` states.
    pub draws: Vec<Vec<f64>>,
    pub log_posts: Vec<f64>,
    pub acceptance_rate: f64,
    pub seed: u64,
    /// Per-row proposal scales after burn-in.
    pub step_scales: Vec<f64>,
}

impl Chain {
    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn p(&self, k: usize) -> &[f64] {
        &self.draws[k][..self.s * self.m]
    }

    pub fn p_tilde(&self, k: usize) -> &[f64] {
        &self.draws[k][self.s * self.m..]
    }

    pub fn discrepancy(&self, k: usize) -> DiscrepancyTable {
        let p = Table::new(self.s, self.m, self.p(k).to_vec()).expect("shape");
        let pt = Table::new(self.s, self.m, self.p_tilde(k).to_vec()).expect("shape");
        DiscrepancyTable::from_ratio(&p, &pt)
    }

    /// `ζ(p)` for every draw.
    pub fn functional_values(&self, functional: &QueryFunctional) -> Vec<f64> {
        (0..self.len()).map(|k| functional.value_p(self.p(k))).collect()
    }

    /// One row per draw: `p_j_i` columns, then `pt_j_i`, then `log_post`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = Vec::with_capacity(2 * self.s * self.m + 1);
        for prefix in ["p", "pt"] {
            for j in 1..=self.s {
                for i in 1..=self.m {
                    header.push(format!("{prefix}_{j}_{i}"));
                }
            }
        }
        header.push("log_post".into());
        w.write_record(&header)?;
        for (draw, lp) in self.draws.iter().zip(&self.log_posts) {
            let mut rec: Vec<String> = draw.iter().map(|v| format!("{v:e}")).collect();
            rec.push(format!("{lp:e}"));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Chain started at the posterior mode.
pub fn mh_sample(model: &PosteriorModel, n_draws: usize, burn_in: usize, step_scale: f64, seed: u64) -> Result<Chain> {
    let opts = SamplerOptions {
        n_draws,
        burn_in,
        step_scale,
        seed,
        ..SamplerOptions::default()
    };
    mh_sample_with(model, &opts)
}

pub fn mh_sample_with(model: &PosteriorModel, opts: &SamplerOptions) -> Result<Chain> {
    let mode = find_posterior_mode(
        model,
        &SolverOptions {
            seed: opts.seed,
            ..SolverOptions::default()
        },
    )?;
    mh_sample_from(model, &mode.stacked(), opts)
}

/// Chain started at an arbitrary stacked `[p; p̃]` point.
pub fn mh_sample_from(model: &PosteriorModel, start: &[f64], opts: &SamplerOptions) -> Result<Chain> {
    opts.validate()?;
    let (s, m) = (model.s(), model.m());
    if start.len() != 2 * s * m {
        return Err(Error::InvalidData("start point has the wrong length".into()));
    }
    // Pull the start off the simplex boundary so log-ratios are finite.
    let mut x: Vec<f64> = start.iter().map(|v| v.max(1e-300)).collect();
    for row in x.chunks_mut(m) {
        let total: f64 = row.iter().sum();
        row.iter_mut().for_each(|v| *v /= total);
    }
    let mut current = model.log_posterior_stacked(&x);
    if !current.is_finite() {
        return Err(Error::Degenerate("log posterior is -inf at the start point".into()));
    }

    let rows = 2 * s;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut scales = vec![opts.step_scale; rows];
    let mut batch_accepts = vec![0usize; rows];
    let mut batch_len = 0usize;
    let mut batches = 0usize;
    const BATCH: usize = 50;

    let mut draws = Vec::with_capacity(opts.n_draws);
    let mut log_posts = Vec::with_capacity(opts.n_draws);
    let mut accepted = 0usize;
    let mut proposed = 0usize;
    let sweeps = opts.burn_in + opts.n_draws * opts.thin;
    let mut proposal = vec![0.0; m];

    for sweep in 0..sweeps {
        let burning = sweep < opts.burn_in;
        for r in 0..rows {
            let row = &x[r * m..(r + 1) * m];
            let last = row[m - 1].ln();
            let mut log_jac_old = 0.0;
            let mut max_y = 0.0f64;
            for i in 0..m - 1 {
                let eps: f64 = rng.sample(StandardNormal);
                proposal[i] = row[i].ln() - last + scales[r] * eps;
                max_y = max_y.max(proposal[i]);
            }
            proposal[m - 1] = 0.0;
            for v in row {
                log_jac_old += v.ln();
            }
            let norm: f64 = proposal.iter().map(|y| (y - max_y).exp()).sum();
            let new_row: Vec<f64> = proposal.iter().map(|y| (y - max_y).exp() / norm).collect();
            if new_row.iter().any(|v| !(*v > 0.0)) {
                if !burning {
                    proposed += 1;
                }
                continue;
            }
            let log_jac_new: f64 = new_row.iter().map(|v| v.ln()).sum();

            let saved: Vec<f64> = x[r * m..(r + 1) * m].to_vec();
            x[r * m..(r + 1) * m].copy_from_slice(&new_row);
            let candidate = model.log_posterior_stacked(&x);
            let log_ratio = candidate - current + log_jac_new - log_jac_old;
            let u: f64 = rng.random();
            let accept = candidate.is_finite() && u.ln() < log_ratio;
            if accept {
                current = candidate;
            } else {
                x[r * m..(r + 1) * m].copy_from_slice(&saved);
            }
            if burning {
                batch_accepts[r] += accept as usize;
            } else {
                proposed += 1;
                accepted += accept as usize;
            }
        }

        if burning && opts.adapt {
            batch_len += 1;
            if batch_len == BATCH {
                batches += 1;
                let gain = 1.0 / (batches as f64).sqrt();
                for r in 0..rows {
                    let rate = batch_accepts[r] as f64 / BATCH as f64;
                    scales[r] *= (2.0 * gain * (rate - opts.target_acceptance)).exp();
                    batch_accepts[r] = 0;
                }
                batch_len = 0;
            }
        }
        if !burning && (sweep - opts.burn_in + 1) % opts.thin == 0 {
            draws.push(x.clone());
            log_posts.push(current);
        }
    }

    Ok(Chain {
        s,
        m,
        draws,
        log_posts,
        acceptance_rate: if proposed == 0 { 1.0 } else { accepted as f64 / proposed as f64 },
        seed: opts.seed,
        step_scales: scales,
    })
}

/// Empirical `alpha`-quantile of `ζ(p)` over the chain (type-7 interpolation).
pub fn posterior_quantile(chain: &Chain, functional: &QueryFunctional, alpha: f64) -> Result<f64> {
    if chain.is_empty() {
        return Err(Error::InvalidData("empty chain".into()));
    }
    let mut values = chain.functional_values(functional);
    quantile_type7(&mut values, alpha)
}

/// Type-7 sample quantile; sorts `values` in place.
pub fn quantile_type7(values: &mut [f64], alpha: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidData("no values".into()));
    }
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!("quantile level {alpha} outside [0, 1]")));
    }
    values.sort_by(f64::total_cmp);
    let h = (values.len() - 1) as f64 * alpha;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(values.len() - 1);
    Ok(values[lo] + (h - lo as f64) * (values[hi] - values[lo]))
}

/// Effective sample size from the initial positive sequence of autocorrelations.
pub fn effective_sample_size(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 4 {
        return n as f64;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let centered: Vec<f64> = values.iter().map(|v| v - mean).collect();
    let var = centered.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if var == 0.0 {
        return n as f64;
    }
    let acf = |lag: usize| centered[..n - lag].iter().zip(&centered[lag..]).map(|(a, b)| a * b).sum::<f64>() / (n as f64 * var);
    let mut tau = 1.0;
    let mut lag = 1;
    while lag + 1 < n {
        let pair = acf(lag) + acf(lag + 1);
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    n as f64 / tau
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::posterior::{validate_discrepancy, validate_distribution, CountTable, GaussianPriorSpec, ProblemData};

    fn model(n: &[Vec<u64>], nt: &[Vec<u64>], prior: GaussianPriorSpec) -> PosteriorModel {
        let data = ProblemData::new(
            (0..n.len()).map(|j| j as f64).collect(),
            CountTable::from_rows(n).unwrap(),
            CountTable::from_rows(nt).unwrap(),
        )
        .unwrap();
        PosteriorModel::new(data, &prior).unwrap()
    }

    #[test]
    fn type7_quantiles() {
        let mut v = vec![0.0, 1.0];
        assert_eq!(quantile_type7(&mut v, 0.5).unwrap(), 0.5);
        let mut v = vec![3.0, 1.0, 2.0, 4.0];
        assert!((quantile_type7(&mut v, 0.25).unwrap() - 1.75).abs() < 1e-15);
        assert_eq!(quantile_type7(&mut v, 1.0).unwrap(), 4.0);
        assert_eq!(quantile_type7(&mut v, 0.0).unwrap(), 1.0);
    }

    #[test]
    fn draws_are_valid_and_reproducible() {
        let mdl = model(&[vec![3, 1, 0], vec![0, 2, 2]], &[vec![5, 5, 5], vec![1, 2, 3]], GaussianPriorSpec::new(0.25, 0.01, 0.75, 0.75));
        let a = mh_sample(&mdl, 500, 200, 0.1, 9).unwrap();
        let b = mh_sample(&mdl, 500, 200, 0.1, 9).unwrap();
        assert_eq!(a, b);
        assert!((0.0..=1.0).contains(&a.acceptance_rate));
        for k in 0..a.len() {
            let pt = Table::new(2, 3, a.p_tilde(k).to_vec()).unwrap();
            assert!(validate_distribution(&pt, 1e-9));
            assert!(validate_discrepancy(&a.discrepancy(k), &pt, 1e-9));
            assert!(a.log_posts[k].is_finite());
        }
    }

    #[test]
    fn tiny_steps_accept_almost_everything() {
        let mdl = model(&[vec![3, 1]], &[vec![2, 2]], GaussianPriorSpec::new(0.25, 0.01, 0.75, 0.75));
        let chain = mh_sample(&mdl, 2000, 0, 1e-6, 1).unwrap();
        assert!(chain.acceptance_rate > 0.99);
        let first = chain.draws[0].clone();
        for d in &chain.draws {
            for (a, b) in d.iter().zip(&first) {
                assert!((a - b).abs() < 1e-3);
            }
        }
    }

    #[test]
    fn constant_functional_quantile() {
        let mdl = model(&[vec![3, 1]], &[vec![2, 2]], GaussianPriorSpec::new(0.25, 0.01, 0.75, 0.75));
        let chain = mh_sample(&mdl, 300, 100, 0.1, 2).unwrap();
        let f = QueryFunctional::constant(1, 2, 0.7);
        for alpha in [0.01, 0.5, 0.99] {
            assert!((posterior_quantile(&chain, &f, alpha).unwrap() - 0.7).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_counts_strong_prior_centers_discrepancy() {
        let mdl = model(&[vec![0, 0, 0]], &[vec![0, 0, 0]], GaussianPriorSpec::new(50.0, 50.0, 0.75, 0.75));
        let chain = mh_sample(&mdl, 10_000, 2_000, 0.1, 4).unwrap();
        let mut mean = [0.0; 3];
        for k in 0..chain.len() {
            for (acc, v) in mean.iter_mut().zip(chain.discrepancy(k).as_slice()) {
                *acc += v / chain.len() as f64;
            }
        }
        for v in mean {
            assert!((v - 1.0).abs() < 0.05, "{v}");
        }
    }

    #[test]
    fn ess_of_iid_is_near_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let v: Vec<f64> = (0..4000).map(|_| rng.sample(StandardNormal)).collect();
        let ess = effective_sample_size(&v);
        assert!(ess > 3000.0 && ess < 5000.0, "{ess}");
    }

    #[test]
    fn csv_export_has_one_row_per_draw() {
        let mdl = model(&[vec![3, 1]], &[vec![2, 2]], GaussianPriorSpec::new(0.25, 0.01, 0.75, 0.75));
        let chain = mh_sample(&mdl, 20, 10, 0.1, 2).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("chain.csv");
        chain.write_csv(&path).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 21);
        assert_eq!(lines[0], "p_1_1,p_1_2,pt_1_1,pt_1_2,log_post");
    }
}
