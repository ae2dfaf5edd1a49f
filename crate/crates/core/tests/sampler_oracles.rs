use simgap_core::bounds::QueryFunctional;
use simgap_core::posterior::{CountTable, GaussianPriorSpec, PosteriorModel, ProblemData};
use simgap_core::sampler::{mh_sample, posterior_quantile};
use statrs::distribution::{Beta, ContinuousCDF};

fn conjugate_model() -> PosteriorModel {
    let data = ProblemData::new(
        vec![0.0],
        CountTable::from_rows(&[vec![3, 1]]).unwrap(),
        CountTable::from_rows(&[vec![1, 1]]).unwrap(),
    )
    .unwrap();
    PosteriorModel::new(data, &GaussianPriorSpec::identity(1e-9, 1e-9, 2)).unwrap()
}

#[test]
fn flat_prior_marginal_is_beta() {
    let chain = mh_sample(&conjugate_model(), 50_000, 5_000, 0.1, 2024).unwrap();
    let beta = Beta::new(4.0, 2.0).unwrap();
    let mut xs: Vec<f64> = (0..chain.len()).map(|k| chain.p(k)[0]).collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut ks: f64 = 0.0;
    for (k, x) in xs.iter().enumerate() {
        let f = beta.cdf(*x);
        ks = ks.max((f - k as f64 / n).abs()).max(((k + 1) as f64 / n - f).abs());
    }
    assert!(ks < 0.02, "Kolmogorov distance {ks}");

    let f = QueryFunctional::indicator(1, 2, 0, 0);
    let q = posterior_quantile(&chain, &f, 0.975).unwrap();
    let want = beta.inverse_cdf(0.975);
    // Closed form: F(x) = 5x^4 - 4x^5.
    assert!((5.0 * want.powi(4) - 4.0 * want.powi(5) - 0.975).abs() < 1e-9);
    assert!((q - want).abs() < 0.01, "{q} vs {want}");
}
