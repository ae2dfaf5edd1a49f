use simgap_core::mode::find_posterior_mode;
use simgap_core::options::SolverOptions;
use simgap_core::posterior::{CountTable, GaussianPriorSpec, PosteriorModel, ProblemData};

/// Call-center style data: no real data at the outer designs, and one observed
/// design with a bin that is empty in both sources.
fn model() -> PosteriorModel {
    let real = CountTable::from_rows(&[
        vec![0, 0, 0, 0],
        vec![10, 5, 5, 0],
        vec![41, 13, 5, 1],
        vec![19, 1, 0, 0],
        vec![0, 0, 0, 0],
    ])
    .unwrap();
    let sim = CountTable::from_rows(&[
        vec![111, 79, 37, 23],
        vec![174, 48, 22, 6],
        vec![203, 33, 8, 6],
        vec![223, 22, 5, 0],
        vec![238, 8, 3, 1],
    ])
    .unwrap();
    let data = ProblemData::new(vec![5.0, 6.0, 7.0, 8.0, 9.0], real, sim).unwrap();
    PosteriorModel::new(data, &GaussianPriorSpec::new(0.25, 0.01, 0.75, 0.75)).unwrap()
}

#[test]
fn mode_does_not_depend_on_restart_seed() {
    let model = model();
    let values: Vec<f64> = (0..4)
        .map(|seed| {
            find_posterior_mode(&model, &SolverOptions { seed, ..SolverOptions::default() })
                .unwrap()
                .log_post_star
        })
        .collect();
    let spread = values.iter().cloned().fold(f64::MIN, f64::max) - values.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < 1e-6, "{values:?}");
}

#[test]
fn collapsed_cell_ratio_sweep_does_not_beat_mode() {
    let model = model();
    let mode = find_posterior_mode(&model, &SolverOptions::default()).unwrap();
    let x = mode.stacked();
    let n = model.cells();
    let k = 3 * 4 + 3;
    let mut best = f64::NEG_INFINITY;
    for step in 0..=400 {
        let ratio = 0.01 * step as f64;
        let eps = 1e-9;
        let mut y = x.clone();
        for (off, new) in [(0, ratio * eps), (n, eps)] {
            let old = y[off + k];
            let scale = (1.0 - new) / (1.0 - old);
            for i in 0..3 {
                y[off + 12 + i] *= scale;
            }
            y[off + k] = new;
        }
        best = best.max(model.log_posterior_stacked(&y));
    }
    assert!(best <= mode.log_post_star + 1e-6, "sweep {best} vs mode {}", mode.log_post_star);
}

/// A lower bound that sits on the simplex boundary must still report `Optimal`.
#[test]
fn boundary_bound_reports_optimal() {
    use simgap_core::bounds::{bound_interval, QueryFunctional, SolverStatus, ThresholdSpec};
    let real = CountTable::from_rows(&[
        vec![0, 0, 0, 0],
        vec![10, 7, 1, 2],
        vec![35, 16, 9, 0],
        vec![10, 9, 1, 0],
        vec![0, 0, 0, 0],
    ])
    .unwrap();
    let sim = CountTable::from_rows(&[
        vec![97, 85, 37, 31],
        vec![163, 53, 25, 9],
        vec![196, 42, 10, 2],
        vec![219, 26, 5, 0],
        vec![242, 6, 2, 0],
    ])
    .unwrap();
    let data = ProblemData::new(vec![5.0, 6.0, 7.0, 8.0, 9.0], real, sim).unwrap();
    let model = PosteriorModel::new(data, &GaussianPriorSpec::new(0.25, 0.01, 0.75, 0.75)).unwrap();
    for seed in [1, 2, 15] {
        let opts = SolverOptions { seed, ..SolverOptions::default() };
        let r = bound_interval(&model, &QueryFunctional::indicator(5, 4, 0, 2), &ThresholdSpec::Quantile(0.975), &opts).unwrap();
        assert_eq!(r.lower_status, SolverStatus::Optimal, "seed {seed}");
        assert_eq!(r.upper_status, SolverStatus::Optimal, "seed {seed}");
        assert!(r.lower < 1e-6 && r.upper > 0.3, "{r:?}");
    }
}
