use super::{
    effective_sample_size, imbalance, CalibrationProblem, Method, Standardized, WeightSolution,
    BALANCE_TOLERANCE,
};
use crate::error::{Error, Result};
use crate::numkit::{solve_qp, BoxConstraints, QpProblem};
use nalgebra::{DMatrix, DVector};

/// Minimize `sum (w_i - 1/n)^2` subject to `sum w = 1`, `w >= 0` and
/// `|sum w_i x_i - x̄₀| <= d`. Covariates with `d_j = 0` become equality rows.
pub(super) fn solve(problem: &CalibrationProblem<'_>) -> Result<WeightSolution> {
    let x = problem.data.x();
    let xbar0 = &problem.target.xbar0;
    let n = x.nrows();
    let p = x.ncols();
    let std = Standardized::new(x, xbar0)?;
    let d = &problem.tolerance_d;

    let exact: Vec<usize> = (0..p).filter(|&j| d[j] == 0.0).collect();
    let relaxed: Vec<usize> = (0..p).filter(|&j| d[j] > 0.0).collect();

    let mut eq = DMatrix::zeros(1 + exact.len(), n);
    eq.row_mut(0).fill(1.0);
    for (r, &j) in exact.iter().enumerate() {
        eq.row_mut(r + 1).copy_from(&std.u.column(j).transpose());
    }
    let mut eq_rhs = DVector::zeros(1 + exact.len());
    eq_rhs[0] = 1.0;

    let boxes = (!relaxed.is_empty()).then(|| {
        let mut matrix = DMatrix::zeros(relaxed.len(), n);
        for (r, &j) in relaxed.iter().enumerate() {
            matrix.row_mut(r).copy_from(&std.u.column(j).transpose());
        }
        BoxConstraints {
            matrix,
            center: DVector::zeros(relaxed.len()),
            halfwidth: DVector::from_iterator(relaxed.len(), relaxed.iter().map(|&j| d[j] / std.sd[j])),
        }
    });

    let qp = QpProblem {
        quadratic: DMatrix::identity(n, n) * 2.0,
        linear: DVector::from_element(n, -2.0 / n as f64),
        equality: Some((eq, eq_rhs)),
        nonnegative: (0..n).collect(),
        boxes,
    };
    let sol = solve_qp(&qp).map_err(|e| match e {
        Error::QpInfeasible { family, index } => {
            let uniform = DVector::from_element(n, 1.0 / n as f64);
            Error::CalibrationInfeasible {
                reason: format!(
                    "stable weights infeasible ({family} constraint {index}); imbalance shown at uniform weights"
                ),
                imbalance: imbalance(x, &uniform, xbar0).iter().copied().collect(),
            }
        }
        other => other,
    })?;

    let mut weights = sol.x.map(|w| w.max(0.0));
    let total = weights.sum();
    weights /= total;

    let mut dual = DVector::zeros(p);
    for (r, &j) in exact.iter().enumerate() {
        dual[j] = sol.equality_multipliers[r + 1] / std.sd[j];
    }
    let net = sol.box_multipliers();
    for (r, &j) in relaxed.iter().enumerate() {
        dual[j] = net[r] / std.sd[j];
    }

    let imbalance = imbalance(x, &weights, xbar0);
    let converged = imbalance
        .iter()
        .zip(d.iter())
        .all(|(di, tol)| di.abs() <= tol + BALANCE_TOLERANCE);
    let ess = effective_sample_size(&weights)?;

    Ok(WeightSolution {
        weights,
        dual_params: dual,
        method: Method::Stable,
        tolerance_d: d.clone(),
        converged,
        imbalance,
        ess,
        iterations: sol.iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calibration::{CovariateMatrix, TargetSummary};
    use approx::assert_abs_diff_eq;

    fn three(target: f64) -> (CovariateMatrix, TargetSummary) {
        (
            CovariateMatrix::new(
                DMatrix::from_column_slice(3, 1, &[-1.0, 0.0, 1.0]),
                DVector::zeros(3),
                None,
            )
            .unwrap(),
            TargetSummary::new(DVector::from_element(1, target)),
        )
    }

    #[test]
    fn interior_closed_form() {
        let (data, target) = three(0.2);
        let sol = solve(&CalibrationProblem::new(&data, &target, Method::Stable).unwrap()).unwrap();
        // w_i = 1/3 + 0.1 x_i
        for (w, x) in sol.weights.iter().zip([-1.0, 0.0, 1.0]) {
            assert_abs_diff_eq!(*w, 1.0 / 3.0 + 0.1 * x, epsilon = 1e-12);
        }
        assert!(sol.converged);
    }

    #[test]
    fn bound_becomes_active() {
        let (data, target) = three(0.9);
        let sol = solve(&CalibrationProblem::new(&data, &target, Method::Stable).unwrap()).unwrap();
        for (w, e) in sol.weights.iter().zip([0.0, 0.1, 0.9]) {
            assert_abs_diff_eq!(*w, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn sample_mean_target_any_tolerance() {
        let (data, target) = three(0.0);
        for d in [0.0, 0.01, 0.5] {
            let sol = solve(
                &CalibrationProblem::new(&data, &target, Method::Stable)
                    .unwrap()
                    .with_tolerance(DVector::from_element(1, d))
                    .unwrap(),
            )
            .unwrap();
            for w in sol.weights.iter() {
                assert_abs_diff_eq!(*w, 1.0 / 3.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn tolerance_limits_imbalance() {
        let (data, target) = three(0.5);
        let sol = solve(
            &CalibrationProblem::new(&data, &target, Method::Stable)
                .unwrap()
                .with_tolerance(DVector::from_element(1, 0.1))
                .unwrap(),
        )
        .unwrap();
        // Closest admissible mean is 0.4; the tolerance binds from below.
        assert_abs_diff_eq!(sol.imbalance[0], -0.1, epsilon = 1e-12);
        assert!(sol.converged);
    }

    #[test]
    fn outside_hull_is_infeasible() {
        let (data, target) = three(1.5);
        let err = solve(&CalibrationProblem::new(&data, &target, Method::Stable).unwrap()).unwrap_err();
        assert!(matches!(err, Error::CalibrationInfeasible { .. }));
    }
}
