use super::*;
use crate::options::BoundMethod;
use crate::posterior::{CountTable, GaussianPriorSpec, ProbTable, ProblemData};

fn data(n: &[Vec<u64>], nt: &[Vec<u64>]) -> ProblemData {
    ProblemData::new(
        (0..n.len()).map(|j| j as f64).collect(),
        CountTable::from_rows(n).unwrap(),
        CountTable::from_rows(nt).unwrap(),
    )
    .unwrap()
}

fn model(n: &[Vec<u64>], nt: &[Vec<u64>], prior: GaussianPriorSpec) -> PosteriorModel {
    PosteriorModel::new(data(n, nt), &prior).unwrap()
}

fn z(rows: &[Vec<f64>]) -> QueryFunctional {
    QueryFunctional::new(Table::from_rows(rows).unwrap(), "test").unwrap()
}

#[test]
fn threshold_examples() {
    assert_eq!(threshold_from_spec(&ThresholdSpec::Quantile(0.5), 0.0).unwrap(), 0.0);
    let c = threshold_from_spec(&ThresholdSpec::Quantile(0.975), 0.0).unwrap();
    assert!((c + 1.920_729_410_347_062).abs() < 1e-9, "{c}");
    assert_eq!(threshold_from_spec(&ThresholdSpec::Ell(2.0), 5.0).unwrap(), 3.0);
    for q in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
        assert!(threshold_from_spec(&ThresholdSpec::Quantile(q), 0.0).is_err());
    }
    assert!(threshold_from_spec(&ThresholdSpec::Ell(-1.0), 0.0).is_err());
}

#[test]
fn quantile_and_ell_specs_agree() {
    let q = ThresholdSpec::Quantile(0.975);
    let e = ThresholdSpec::Ell(q.ell());
    assert!((e.q() - 0.975).abs() < 1e-12);
    assert_eq!(threshold_from_spec(&q, 1.5).unwrap(), threshold_from_spec(&e, 1.5).unwrap());
}

#[test]
fn constant_functional_collapses() {
    let mdl = model(&[vec![3, 0, 2], vec![1, 1, 0]], &[vec![10, 5, 5], vec![2, 8, 1]], GaussianPriorSpec::new(0.25, 0.01, 0.75, 0.75));
    for method in [BoundMethod::Joint, BoundMethod::Alternating] {
        let opts = SolverOptions {
            bound_method: method,
            ..SolverOptions::default()
        };
        let r = bound_interval(&mdl, &QueryFunctional::constant(2, 3, 1.7), &ThresholdSpec::Quantile(0.975), &opts).unwrap();
        assert!((r.lower - 3.4).abs() < 1e-9 && (r.upper - 3.4).abs() < 1e-9, "{method:?} {r:?}");
    }
}

#[test]
fn zero_ell_returns_mode_value() {
    let mdl = model(&[vec![3, 1, 2]], &[vec![5, 5, 5]], GaussianPriorSpec::new(0.25, 0.01, 0.75, 0.75));
    let f = z(&[vec![0.0, 1.0, 2.0]]);
    let r = bound_interval(&mdl, &f, &ThresholdSpec::Ell(0.0), &SolverOptions::default()).unwrap();
    assert_eq!(r.lower, r.mode_value);
    assert_eq!(r.upper, r.mode_value);
    let r = bound_interval(&mdl, &f, &ThresholdSpec::Ell(1e-4), &SolverOptions::default()).unwrap();
    assert!((r.lower - r.mode_value).abs() < 1e-3 && (r.upper - r.mode_value).abs() < 1e-3);
}

#[test]
fn infeasible_threshold_is_rejected() {
    let mdl = model(&[vec![3, 1]], &[vec![5, 5]], GaussianPriorSpec::new(0.25, 0.01, 0.75, 0.75));
    let mode = find_posterior_mode(&mdl, &SolverOptions::default()).unwrap();
    let f = z(&[vec![1.0, 0.0]]);
    let err = solve_bound_from_mode(&mdl, &f, mode.log_post_star + 1e-6, Direction::Max, &mode, &SolverOptions::default());
    assert!(matches!(err, Err(Error::Infeasible { .. })));
    assert!(solve_bound_from_mode(&mdl, &f, mode.log_post_star + 1e-10, Direction::Max, &mode, &SolverOptions::default()).is_ok());
}

#[test]
fn two_outcome_instance_matches_dense_grid() {
    let mdl = model(&[vec![3, 1]], &[vec![50, 50]], GaussianPriorSpec::identity(0.25, 0.01, 2));
    let f = z(&[vec![1.0, 0.0]]);
    let r = bound_interval(&mdl, &f, &ThresholdSpec::Ell(1.0), &SolverOptions::default()).unwrap();
    assert!(r.is_optimal());

    // Dense grid over both simplices.
    let step = 0.002;
    let k = (1.0 / step) as usize;
    let mut values = Vec::with_capacity(k * k);
    let mut top = f64::NEG_INFINITY;
    for a in 0..=k {
        for b in 1..k {
            let (p, t) = (a as f64 * step, b as f64 * step);
            let v = mdl.log_posterior_pp(&[p, 1.0 - p], &[t, 1.0 - t]);
            top = top.max(v);
            values.push((p, v));
        }
    }
    let log_c = top - 0.5;
    let feasible = values.iter().filter(|(_, v)| *v >= log_c).map(|(p, _)| *p);
    let (lo, hi) = feasible.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), p| (l.min(p), h.max(p)));
    assert!((r.lower - lo).abs() < 5e-3, "{} vs {lo}", r.lower);
    assert!((r.upper - hi).abs() < 5e-3, "{} vs {hi}", r.upper);
    assert!((r.log_post_star - top).abs() < 1e-3);
}

#[test]
fn brute_force_matches_on_two_outcomes() {
    let mdl = model(&[vec![3, 1]], &[vec![50, 50]], GaussianPriorSpec::identity(0.25, 0.01, 2));
    let f = z(&[vec![1.0, 0.0]]);
    let mode = find_posterior_mode(&mdl, &SolverOptions::default()).unwrap();
    let log_c = mode.log_post_star - 0.5;
    let (lo, hi) = brute_force_interval(&mdl, &f, log_c, 0.002).unwrap();
    let r = bound_interval_from_mode(&mdl, &f, &ThresholdSpec::Ell(1.0), &mode, &SolverOptions::default()).unwrap();
    assert!((r.lower - lo).abs() < 5e-3 && (r.upper - hi).abs() < 5e-3, "{r:?} vs ({lo}, {hi})");
}

#[test]
fn brute_force_trivial_cases() {
    let mdl = model(&[vec![3, 1]], &[vec![5, 5]], GaussianPriorSpec::new(0.25, 0.01, 0.75, 0.75));
    let mode = find_posterior_mode(&mdl, &SolverOptions::default()).unwrap();
    let c = QueryFunctional::constant(1, 2, 0.3);
    for step in [0.1, 0.01] {
        let v = brute_force_bound(&mdl, &c, mode.log_post_star - 1.0, Direction::Max, step).unwrap();
        assert!((v - 0.3).abs() < 1e-12);
    }
    let f = z(&[vec![1.0, 0.0]]);
    assert!(matches!(
        brute_force_bound(&mdl, &f, mode.log_post_star + 1.0, Direction::Min, 0.01),
        Err(Error::Infeasible { .. })
    ));
    let big = model(&vec![vec![1, 1, 1, 1]; 2], &vec![vec![1, 1, 1, 1]; 2], GaussianPriorSpec::new(0.25, 0.01, 0.75, 0.75));
    assert!(matches!(
        brute_force_bound(&big, &QueryFunctional::constant(2, 4, 1.0), 0.0, Direction::Max, 0.1),
        Err(Error::TooLarge(_))
    ));
}

#[test]
fn intervals_are_nested_in_ell_and_bracket_mode() {
    let mdl = model(&[vec![4, 2, 1], vec![0, 3, 3]], &[vec![20, 10, 5], vec![4, 4, 12]], GaussianPriorSpec::new(0.25, 0.01, 0.75, 0.75));
    let f = z(&[vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 0.5]]);
    let mode = find_posterior_mode(&mdl, &SolverOptions::default()).unwrap();
    let mut prev: Option<BoundResult> = None;
    for ell in [0.5, 1.0, 1.96, 3.0] {
        let r = bound_interval_from_mode(&mdl, &f, &ThresholdSpec::Ell(ell), &mode, &SolverOptions::default()).unwrap();
        assert!(r.is_optimal());
        assert!(r.lower <= r.mode_value && r.mode_value <= r.upper);
        assert!(r.feasibility_residual <= 1e-7, "{r:?}");
        if let Some(p) = prev {
            assert!(r.lower <= p.lower + 1e-7 && r.upper >= p.upper - 1e-7);
        }
        prev = Some(r);
    }
}

#[test]
fn alternating_stays_inside_joint_interval() {
    let mdl = model(&[vec![4, 2, 1]], &[vec![20, 10, 5]], GaussianPriorSpec::new(0.25, 0.01, 0.75, 0.75));
    let f = z(&[vec![0.0, 1.0, 2.0]]);
    let spec = ThresholdSpec::Ell(1.5);
    let joint = bound_interval(&mdl, &f, &spec, &SolverOptions::default()).unwrap();
    let alt = bound_interval(
        &mdl,
        &f,
        &spec,
        &SolverOptions {
            bound_method: BoundMethod::Alternating,
            ..SolverOptions::default()
        },
    )
    .unwrap();
    assert!(alt.lower >= joint.lower - 1e-6 && alt.upper <= joint.upper + 1e-6, "{alt:?} {joint:?}");
    assert!(alt.lower <= alt.mode_value + 1e-9 && alt.upper >= alt.mode_value - 1e-9);
    assert!(alt.feasibility_residual <= 1e-7);
}

#[test]
fn fixed_sim_constant_functional_is_exact() {
    let pt = ProbTable::from_rows(&[vec![0.2, 0.3, 0.5], vec![0.6, 0.3, 0.1]]).unwrap();
    let d = data(&[vec![2, 3, 5], vec![1, 0, 0]], &[vec![0, 0, 0], vec![0, 0, 0]]);
    let prior = GaussianPriorSpec::new(0.25, 0.01, 0.75, 0.75);
    let mode = fixed_sim_mode(&pt, &d, &prior, &SolverOptions::default()).unwrap();
    for dir in [Direction::Min, Direction::Max] {
        let sol = solve_bound_fixed_sim(&pt, &d, &prior, &QueryFunctional::constant(2, 3, 1.0), mode.value - 2.0, dir, &SolverOptions::default()).unwrap();
        assert!((sol.value - 2.0).abs() < 1e-9);
        assert!(sol.feasibility_residual <= 1e-7);
    }
}

#[test]
fn fixed_sim_matches_dense_grid() {
    let pt = [0.2, 0.3, 0.5];
    let pi_tilde = ProbTable::from_rows(&[pt.to_vec()]).unwrap();
    let counts = [2.0, 3.0, 5.0];
    let d = data(&[vec![2, 3, 5]], &[vec![0, 0, 0]]);
    let prior = GaussianPriorSpec::identity(0.25, 0.01, 3);
    let f = z(&[vec![0.0, 1.0, 2.0]]);

    // Grid over q = π̃ ∘ d on the simplex, C(d) = Σ n log d − λ_d ‖d − 1‖².
    let level = |d: [f64; 3]| -> f64 {
        counts.iter().zip(d).map(|(n, x)| n * x.ln()).sum::<f64>() - 0.25 * d.iter().map(|x| (x - 1.0).powi(2)).sum::<f64>()
    };
    let k = 1000;
    let mut pts = Vec::new();
    let mut top = f64::NEG_INFINITY;
    for a in 1..k {
        for b in 1..k - a {
            let q = [a as f64 / k as f64, b as f64 / k as f64, (k - a - b) as f64 / k as f64];
            let dd = [q[0] / pt[0], q[1] / pt[1], q[2] / pt[2]];
            let v = level(dd);
            top = top.max(v);
            pts.push((q[1] + 2.0 * q[2], v));
        }
    }
    let ell: f64 = 1.96;
    let log_c = top - ell * ell / 2.0;
    let (lo, hi) = pts
        .iter()
        .filter(|(_, v)| *v >= log_c)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), (zv, _)| (l.min(*zv), h.max(*zv)));

    let mode = fixed_sim_mode(&pi_tilde, &d, &prior, &SolverOptions::default()).unwrap();
    assert!((mode.value - top).abs() < 1e-3);
    let c = mode.value - ell * ell / 2.0;
    let min = solve_bound_fixed_sim(&pi_tilde, &d, &prior, &f, c, Direction::Min, &SolverOptions::default()).unwrap();
    let max = solve_bound_fixed_sim(&pi_tilde, &d, &prior, &f, c, Direction::Max, &SolverOptions::default()).unwrap();
    assert_eq!(min.status, SolverStatus::Optimal);
    assert_eq!(max.status, SolverStatus::Optimal);
    assert!((min.value - lo).abs() < 1e-2, "{} vs {lo}", min.value);
    assert!((max.value - hi).abs() < 1e-2, "{} vs {hi}", max.value);
    assert!(min.feasibility_residual <= 1e-7 && max.feasibility_residual <= 1e-7);
}

#[test]
fn fixed_sim_strong_prior_pins_to_simulator() {
    let pt = [0.2, 0.3, 0.5];
    let pi_tilde = ProbTable::from_rows(&[pt.to_vec()]).unwrap();
    let d = data(&[vec![0, 0, 0]], &[vec![0, 0, 0]]);
    let prior = GaussianPriorSpec::new(1e4, 0.01, 0.75, 0.75);
    let f = z(&[vec![0.0, 1.0, 2.0]]);
    let c = -0.5 * 0.1f64.powi(2);
    let min = solve_bound_fixed_sim(&pi_tilde, &d, &prior, &f, c, Direction::Min, &SolverOptions::default()).unwrap();
    let max = solve_bound_fixed_sim(&pi_tilde, &d, &prior, &f, c, Direction::Max, &SolverOptions::default()).unwrap();
    let center = 0.3 + 2.0 * 0.5;
    assert!(min.value <= center && center <= max.value);
    assert!(max.value - min.value < 1e-2);
}

#[test]
fn fixed_sim_rejects_zero_simulator_mass() {
    let pi_tilde = ProbTable::from_rows(&[vec![0.5, 0.5, 0.0]]).unwrap();
    let d = data(&[vec![0, 0, 0]], &[vec![0, 0, 0]]);
    let prior = GaussianPriorSpec::new(1.0, 1.0, 0.75, 0.75);
    assert!(fixed_sim_mode(&pi_tilde, &d, &prior, &SolverOptions::default()).is_err());
}

#[test]
fn ranking_comparisons() {
    let base = BoundResult {
        lower: 0.1,
        upper: 0.3,
        log_c: 0.0,
        log_post_star: 0.0,
        mode_value: 0.2,
        q: 0.975,
        ell: 1.96,
        lower_status: SolverStatus::Optimal,
        upper_status: SolverStatus::Optimal,
        feasibility_residual: 0.0,
        lower_iterations: 0,
        upper_iterations: 0,
    };
    let above = BoundResult {
        lower: 0.31,
        upper: 0.5,
        ..base.clone()
    };
    let touching = BoundResult {
        lower: 0.3,
        upper: 0.5,
        ..base.clone()
    };
    assert!(above.disjoint_from(&base) && above.ranks_above(&base));
    assert!(!touching.disjoint_from(&base));
    assert!(!base.ranks_above(&above));
}

#[test]
fn convexity_probe_vacuous_case() {
    let mdl = model(&[vec![3, 1]], &[vec![5, 5]], GaussianPriorSpec::new(0.25, 0.01, 0.75, 0.75));
    let r = convexity_probe(&mdl, -1.0, 0, 1).unwrap();
    assert_eq!(r.pass_fraction, 1.0);
}
