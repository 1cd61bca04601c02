mod common;

use calibra::calibration::{effective_sample_size, CalibrationProblem, CovariateMatrix, Method, TargetSummary};
use calibra::numkit::RngStream;
use common::{interior_instance, near_mean_instance};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn solve(data: &CovariateMatrix, target: &TargetSummary, method: Method) -> calibra::calibration::WeightSolution {
    CalibrationProblem::new(data, target, method).unwrap().solve().unwrap()
}

fn solve_stable(data: &CovariateMatrix, target: &TargetSummary, d: f64) -> calibra::calibration::WeightSolution {
    CalibrationProblem::new(data, target, Method::Stable)
        .unwrap()
        .with_tolerance(DVector::from_element(data.p(), d))
        .unwrap()
        .solve()
        .unwrap()
}

/// Distance each method minimizes, up to constants.
fn distance(method: Method, w: &DVector<f64>) -> f64 {
    let n = w.len() as f64;
    match method {
        Method::Entropy => w.iter().map(|&v| v * (n * v).ln()).sum(),
        Method::Stable => w.iter().map(|&v| (v - 1.0 / n).powi(2)).sum(),
        Method::EmpiricalLikelihood => -w.iter().map(|&v| (n * v).ln()).sum::<f64>(),
    }
}

/// Random unit direction in the null space of `[1'; X']`.
fn feasible_direction(x: &DMatrix<f64>, rng: &mut RngStream) -> DVector<f64> {
    let (n, p) = x.shape();
    let mut c = DMatrix::from_element(p + 1, n, 1.0);
    c.view_mut((1, 0), (p, n)).copy_from(&x.transpose());
    let raw = DVector::from_fn(n, |_, _| rng.standard_normal());
    let ct = c.transpose();
    let coef = (&c * &ct).cholesky().unwrap().solve(&(&c * &raw));
    let v = raw - ct * coef;
    let norm = v.norm();
    v / norm
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn weights_balance_the_target(seed in any::<u64>(), n in 20usize..80, p in 1usize..5, d in 0.0f64..0.1) {
        let (data, target, _) = interior_instance(seed, n, p);
        for method in [Method::Entropy, Method::EmpiricalLikelihood] {
            let sol = solve(&data, &target, method);
            prop_assert!(sol.converged);
            prop_assert!(sol.imbalance.amax() <= 1e-8, "{method}: {}", sol.imbalance.amax());
            prop_assert!((sol.weights.sum() - 1.0).abs() <= 1e-12);
            prop_assert!(sol.weights.iter().all(|&w| w > 0.0));
        }
        let sol = solve_stable(&data, &target, d);
        prop_assert!(sol.imbalance.amax() <= d + 1e-8);
        prop_assert!(sol.weights.iter().all(|&w| w >= -1e-12));
    }

    #[test]
    fn exact_determination_gives_one_answer(seed in any::<u64>(), p in 1usize..5) {
        let (data, target, lambda) = interior_instance(seed, p + 1, p);
        for method in Method::ALL {
            let w = if method == Method::Stable {
                solve_stable(&data, &target, 0.0).weights
            } else {
                solve(&data, &target, method).weights
            };
            prop_assert!((w - &lambda).amax() <= 1e-8, "{method}");
        }
    }

    #[test]
    fn entropy_weights_are_a_softmax_of_the_dual(seed in any::<u64>(), n in 10usize..60, p in 1usize..4) {
        let (data, target, _) = interior_instance(seed, n, p);
        let sol = solve(&data, &target, Method::Entropy);
        let score = -(data.x() * &sol.dual_params);
        let top = score.max();
        let raw = score.map(|s| (s - top).exp());
        let softmax = &raw / raw.sum();
        for i in 0..n {
            prop_assert!(common::relative_error(softmax[i], sol.weights[i]) <= 1e-12);
        }
    }

    #[test]
    fn solutions_minimize_their_distance(seed in any::<u64>(), n in 15usize..60, p in 1usize..4) {
        let (data, target) = near_mean_instance(seed, n, p, 0.05);
        let mut rng = RngStream::new(seed, 1);
        for method in Method::ALL {
            let w = if method == Method::Stable {
                solve_stable(&data, &target, 0.0).weights
            } else {
                solve(&data, &target, method).weights
            };
            prop_assume!(w.min() > 2e-3);
            let base = distance(method, &w);
            for _ in 0..5 {
                let v = feasible_direction(data.x(), &mut rng);
                for sign in [1.0, -1.0] {
                    let moved = &w + sign * 1e-3 * &v;
                    prop_assert!(distance(method, &moved) > base, "{method}");
                }
            }
        }
    }

    #[test]
    fn weights_are_affine_invariant(seed in any::<u64>(), n in 15usize..60, p in 1usize..4) {
        let (data, target, _) = interior_instance(seed, n, p);
        let mut rng = RngStream::new(seed, 2);
        let a = DMatrix::from_fn(p, p, |i, j| if i == j { 3.0 } else { 0.0 } + 0.5 * rng.standard_normal());
        prop_assume!(a.determinant().abs() > 0.1);
        let shift = DVector::from_fn(p, |_, _| 10.0 * rng.standard_normal());
        let moved_x = DMatrix::from_fn(n, p, |i, j| (data.x().row(i) * &a)[j] + shift[j]);
        let moved = CovariateMatrix::new(moved_x, data.y().clone(), None).unwrap();
        let moved_target = TargetSummary::new(a.tr_mul(&target.xbar0) + &shift);
        for method in Method::ALL {
            let (w0, w1) = if method == Method::Stable {
                (solve_stable(&data, &target, 0.0).weights, solve_stable(&moved, &moved_target, 0.0).weights)
            } else {
                (solve(&data, &target, method).weights, solve(&moved, &moved_target, method).weights)
            };
            prop_assert!((w0 - w1).amax() <= 1e-8, "{method}");
        }
    }
}

#[test]
fn stable_weights_dominate_entropy_in_ess() {
    let mut checked = 0;
    let mut seed = 0;
    while checked < 100 {
        seed += 1;
        let (data, target) = near_mean_instance(seed, 40, 3, 0.15);
        let stable = solve_stable(&data, &target, 0.0);
        if stable.weights.min() <= 1e-10 {
            continue;
        }
        let entropy = solve(&data, &target, Method::Entropy);
        let (s, e) = (
            effective_sample_size(&stable.weights).unwrap(),
            effective_sample_size(&entropy.weights).unwrap(),
        );
        assert!(s >= e - 1e-8, "seed {seed}: stable {s} < entropy {e}");
        checked += 1;
    }
}

#[test]
fn target_outside_the_hull_is_infeasible() {
    let (data, _) = near_mean_instance(3, 30, 2, 0.0);
    let far = TargetSummary::new(DVector::from_vec(vec![25.0, -25.0]));
    for method in Method::ALL {
        let err = CalibrationProblem::new(&data, &far, method).unwrap().solve().unwrap_err();
        assert_eq!(err.exit_code(), 2, "{method}: {err}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn stable_weights_satisfy_kkt(
        seed in any::<u64>(),
        n in 15usize..60,
        p in 1usize..5,
        shift in 0.0f64..0.6,
        d in prop::collection::vec(0.0f64..0.1, 4),
    ) {
        let (data, target) = near_mean_instance(seed, n, p, shift);
        let d = DVector::from_iterator(p, d.iter().take(p).map(|&v| if v < 0.02 { 0.0 } else { v }));
        let solved = CalibrationProblem::new(&data, &target, Method::Stable)
            .unwrap()
            .with_tolerance(d.clone())
            .unwrap()
            .solve();
        prop_assume!(solved.is_ok());
        let sol = solved.unwrap();
        let (primal, stationarity, dual_sign) = common::stable_kkt(data.x(), &target.xbar0, &d, &sol.weights, &sol.dual_params);
        prop_assert!(primal <= 1e-10, "primal {primal}");
        prop_assert!(stationarity <= 1e-8, "stationarity {stationarity}");
        prop_assert!(dual_sign <= 1e-10, "dual {dual_sign}");
    }
}
