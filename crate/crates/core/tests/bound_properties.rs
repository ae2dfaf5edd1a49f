use proptest::prelude::*;
use simgap_core::bounds::*;
use simgap_core::mode::find_posterior_mode;
use simgap_core::options::SolverOptions;
use simgap_core::posterior::{CountTable, GaussianPriorSpec, PosteriorModel, ProbTable, ProblemData, Table};

fn instance() -> impl Strategy<Value = (PosteriorModel, Table)> {
    (1usize..=3, 2usize..=4).prop_flat_map(|(s, m)| {
        (
            prop::collection::vec(0u64..30, s * m),
            prop::collection::vec(0u64..60, s * m),
            prop::collection::vec(-2.0f64..2.0, s * m),
            0.05f64..2.0,
            0.005f64..0.5,
        )
            .prop_map(move |(n, nt, z, ld, lp)| {
                let data = ProblemData::new(
                    (0..s).map(|j| j as f64 + 5.0).collect(),
                    CountTable::new(s, m, n).unwrap(),
                    CountTable::new(s, m, nt).unwrap(),
                )
                .unwrap();
                let model = PosteriorModel::new(data, &GaussianPriorSpec::new(ld, lp, 0.75, 0.75)).unwrap();
                (model, Table::new(s, m, z).unwrap())
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn constant_functional_collapses((model, _) in instance(), z0 in -3.0f64..3.0) {
        let (s, m) = (model.s(), model.m());
        let r = bound_interval(&model, &QueryFunctional::constant(s, m, z0), &ThresholdSpec::Quantile(0.975), &SolverOptions::default()).unwrap();
        prop_assert!((r.lower - z0 * s as f64).abs() <= 1e-9);
        prop_assert!((r.upper - z0 * s as f64).abs() <= 1e-9);
    }

    #[test]
    fn intervals_nest_and_bracket_the_mode((model, z) in instance()) {
        let f = QueryFunctional::new(z, "random").unwrap();
        let opts = SolverOptions::default();
        let mode = find_posterior_mode(&model, &opts).unwrap();
        let small = bound_interval_from_mode(&model, &f, &ThresholdSpec::Ell(1.0), &mode, &opts).unwrap();
        let large = bound_interval_from_mode(&model, &f, &ThresholdSpec::Ell(2.0), &mode, &opts).unwrap();
        for r in [&small, &large] {
            prop_assert!(r.lower <= r.upper);
            if r.is_optimal() {
                prop_assert!(r.lower <= r.mode_value + 1e-9 && r.mode_value <= r.upper + 1e-9);
            }
            prop_assert!(r.feasibility_residual <= 1e-7);
        }
        prop_assert!(large.lower <= small.lower + 1e-7, "{:?} {:?}", small, large);
        prop_assert!(large.upper >= small.upper - 1e-7, "{:?} {:?}", small, large);
    }

    #[test]
    fn fixed_sim_optimum_is_feasible(
        (model, z) in instance(),
        ell in 0.2f64..3.0,
        raw in prop::collection::vec(0.05f64..1.0, 12),
    ) {
        let (s, m) = (model.s(), model.m());
        let mut rows = Vec::new();
        for j in 0..s {
            let row: Vec<f64> = raw[j * m..(j + 1) * m].to_vec();
            let total: f64 = row.iter().sum();
            rows.push(row.iter().map(|v| v / total).collect());
        }
        let pt = ProbTable::from_rows(&rows).unwrap();
        let data = model.data();
        let prior = model.prior().spec().clone();
        let opts = SolverOptions::default();
        let mode = fixed_sim_mode(&pt, data, &prior, &opts).unwrap();
        let f = QueryFunctional::new(z, "random").unwrap();
        let log_c = mode.value - ell * ell / 2.0;
        let lo = solve_bound_fixed_sim(&pt, data, &prior, &f, log_c, Direction::Min, &opts).unwrap();
        let hi = solve_bound_fixed_sim(&pt, data, &prior, &f, log_c, Direction::Max, &opts).unwrap();
        prop_assert!(lo.feasibility_residual <= 1e-7 && hi.feasibility_residual <= 1e-7);
        prop_assert!(lo.value <= hi.value + 1e-12);
        let at_mode: f64 = f.z.as_slice().iter().zip(pt.as_slice()).zip(mode.d_star.as_slice()).map(|((a, b), c)| a * b * c).sum();
        prop_assert!(lo.value <= at_mode + 1e-7 && at_mode <= hi.value + 1e-7);
    }
}
