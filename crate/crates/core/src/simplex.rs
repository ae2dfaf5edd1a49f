//! Simplex helpers: Euclidean projection and orthonormal bases of
//! zero-sum directions.

use nalgebra::DMatrix;

/// Euclidean projection of `v` onto `{x : x_i ≥ floor, Σ x_i = 1}`.
///
/// Sort-based algorithm; `floor · len` must be below 1.
pub fn project_onto_simplex(v: &[f64], floor: f64) -> Vec<f64> {
    let n = v.len();
    let budget = 1.0 - floor * n as f64;
    debug_assert!(budget > 0.0);
    let shifted: Vec<f64> = v.iter().map(|x| x - floor).collect();
    let mut sorted = shifted.clone();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let t = (cumulative - budget) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    shifted.iter().map(|x| (x - theta).max(0.0) + floor).collect()
}

/// Orthonormal basis (columns) of `{v ∈ R^n : Σ v = 0}` (Helmert contrasts).
pub fn zero_sum_basis(n: usize) -> DMatrix<f64> {
    let mut basis = DMatrix::zeros(n, n.saturating_sub(1));
    for k in 1..n {
        let scale = 1.0 / ((k * (k + 1)) as f64).sqrt();
        for r in 0..k {
            basis[(r, k - 1)] = scale;
        }
        basis[(k, k - 1)] = -(k as f64) * scale;
    }
    basis
}

/// Block-diagonal basis of directions that keep every block's sum fixed.
pub fn block_zero_sum_basis(blocks: usize, block_len: usize) -> DMatrix<f64> {
    let single = zero_sum_basis(block_len);
    let cols = block_len - 1;
    let mut basis = DMatrix::zeros(blocks * block_len, blocks * cols);
    for b in 0..blocks {
        basis
            .view_mut((b * block_len, b * cols), (block_len, cols))
            .copy_from(&single);
    }
    basis
}

/// Orthonormal basis of the null space of `a` (rows are constraints).
pub fn null_space(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    // Complete the SVD of aᵀa: eigenvectors with (numerically) zero eigenvalue.
    let gram = a.transpose() * a;
    let eig = nalgebra::SymmetricEigen::new(gram);
    let scale = eig.eigenvalues.amax().max(1e-300);
    let cols: Vec<usize> = (0..n)
        .filter(|&k| eig.eigenvalues[k].abs() <= 1e-12 * scale)
        .collect();
    DMatrix::from_fn(n, cols.len(), |r, c| eig.eigenvectors[(r, cols[c])])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn projection_fixes_points_on_simplex() {
        let v = [0.2, 0.3, 0.5];
        let p = project_onto_simplex(&v, 0.0);
        for (a, b) in v.iter().zip(&p) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn projection_clips_negative_mass() {
        let p = project_onto_simplex(&[2.0, -1.0], 0.0);
        assert_eq!(p, vec![1.0, 0.0]);
        let p = project_onto_simplex(&[2.0, -1.0], 1e-10);
        assert!((p[1] - 1e-10).abs() < 1e-20);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn bases_are_orthonormal_and_zero_sum() {
        for n in 2..7 {
            let b = zero_sum_basis(n);
            let gram = b.transpose() * &b;
            assert!((gram - DMatrix::identity(n - 1, n - 1)).amax() < 1e-14);
            for c in 0..n - 1 {
                assert!(b.column(c).sum().abs() < 1e-14);
            }
        }
        let a = DMatrix::from_row_slice(2, 3, &[1.0, 1.0, 1.0, 0.5, 2.0, 1.0]);
        let z = null_space(&a);
        assert_eq!(z.ncols(), 1);
        assert!((&a * &z).amax() < 1e-12);
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.5, 2.0]);
        assert_eq!(null_space(&a).ncols(), 0);
    }

    proptest! {
        #[test]
        fn projection_is_feasible_and_closest(v in prop::collection::vec(-3.0f64..3.0, 2..8),
                                              w in prop::collection::vec(0.0f64..1.0, 8)) {
            let p = project_onto_simplex(&v, 0.0);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            // Any other simplex point is no closer.
            let total: f64 = w[..v.len()].iter().sum::<f64>() + 1e-9;
            let q: Vec<f64> = w[..v.len()].iter().map(|x| (x + 1e-9 / v.len() as f64) / total).collect();
            let dist = |a: &[f64]| a.iter().zip(&v).map(|(x, y)| (x - y).powi(2)).sum::<f64>();
            prop_assert!(dist(&p) <= dist(&q) + 1e-12);
        }
    }
}
