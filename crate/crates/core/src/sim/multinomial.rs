//! Synthetic count tables from a known truth.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::posterior::{CountTable, ProbTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticScheme {
    pub pi: ProbTable,
    /// Design allocation probabilities.
    pub xi: Vec<f64>,
    pub n_total: u64,
}

impl SyntheticScheme {
    pub fn validate(&self) -> Result<()> {
        if self.xi.len() != self.pi.rows() {
            return Err(Error::Config("xi length must equal the number of designs".into()));
        }
        if self.xi.iter().any(|v| !(*v >= 0.0)) || (self.xi.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config("xi must be a probability vector".into()));
        }
        Ok(())
    }
}

/// Multinomial draw by sequential conditional binomials.
pub fn sample_multinomial<R: rand::Rng>(n: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let mut out = vec![0; probs.len()];
    let mut left = n;
    let mut mass = 1.0;
    for (k, &p) in probs.iter().enumerate() {
        if left == 0 {
            break;
        }
        if k + 1 == probs.len() {
            out[k] = left;
            break;
        }
        let cond = if mass > 0.0 { (p / mass).clamp(0.0, 1.0) } else { 0.0 };
        let draw = Binomial::new(left, cond).expect("probability in [0, 1]").sample(rng);
        out[k] = draw;
        left -= draw;
        mass -= p;
    }
    out
}

/// `n_total` observations: design `j` with probability `ξ_j`, then an outcome from `π_j`.
pub fn sample_multinomial_dataset(scheme: &SyntheticScheme, seed: u64) -> Result<CountTable> {
    scheme.validate()?;
    let (s, m) = (scheme.pi.rows(), scheme.pi.cols());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let per_design = sample_multinomial(scheme.n_total, &scheme.xi, &mut rng);
    let mut counts = CountTable::zeros(s, m);
    for (j, &nj) in per_design.iter().enumerate() {
        for (i, c) in sample_multinomial(nj, scheme.pi.row(j), &mut rng).into_iter().enumerate() {
            counts.set(j, i, c);
        }
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scheme(n: u64) -> SyntheticScheme {
        SyntheticScheme {
            pi: ProbTable::from_rows(&[vec![0.2, 0.5, 0.3], vec![0.6, 0.1, 0.3]]).unwrap(),
            xi: vec![0.3, 0.7],
            n_total: n,
        }
    }

    #[test]
    fn degenerate_rows_put_everything_in_first_column() {
        let s = SyntheticScheme {
            pi: ProbTable::from_rows(&[vec![1.0, 0.0, 0.0], vec![1.0, 0.0, 0.0]]).unwrap(),
            xi: vec![0.5, 0.5],
            n_total: 1000,
        };
        let c = sample_multinomial_dataset(&s, 1).unwrap();
        assert_eq!(c.row_total(0) + c.row_total(1), 1000);
        for j in 0..2 {
            assert_eq!(c.get(j, 1) + c.get(j, 2), 0);
        }
    }

    #[test]
    fn zero_total_gives_zero_counts() {
        assert_eq!(sample_multinomial_dataset(&scheme(0), 3).unwrap().total(), 0);
    }

    #[test]
    fn reproducible_and_sums_to_total() {
        let a = sample_multinomial_dataset(&scheme(777), 5).unwrap();
        assert_eq!(a.total(), 777);
        assert_eq!(a, sample_multinomial_dataset(&scheme(777), 5).unwrap());
    }

    #[test]
    fn bad_allocation_is_rejected() {
        let mut s = scheme(10);
        s.xi = vec![0.5, 0.6];
        assert!(sample_multinomial_dataset(&s, 1).is_err());
    }
}
