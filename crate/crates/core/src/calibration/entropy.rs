use super::{check_balance, imbalance, CalibrationProblem, Standardized, WeightSolution};
use crate::calibration::effective_sample_size;
use crate::error::Result;
use crate::numkit::minimize_smooth;
use nalgebra::{DMatrix, DVector};

const POLISH_STEPS: usize = 50;

/// Softmax weights `w_i ∝ exp(-γ'x_i)` normalized to sum one.
pub fn entropy_weights(x: &DMatrix<f64>, gamma: &DVector<f64>) -> DVector<f64> {
    let mut eta = -(x * gamma);
    let shift = eta.max();
    eta.apply(|v| *v = (*v - shift).exp());
    let total = eta.sum();
    eta / total
}

/// `log sum_i exp(-γ'u_i)` and its weights.
fn log_partition(u: &DMatrix<f64>, gamma: &DVector<f64>) -> (f64, DVector<f64>) {
    let mut eta = -(u * gamma);
    let shift = eta.max();
    eta.apply(|v| *v = (*v - shift).exp());
    let total = eta.sum();
    (shift + total.ln(), eta / total)
}

/// Newton refinement of the dual; BFGS stops at the line-search noise floor
/// of the objective, which is coarser than the balance we want to report.
fn polish(u: &DMatrix<f64>, gamma: &mut DVector<f64>) -> usize {
    let p = u.ncols();
    let (_, mut w) = log_partition(u, gamma);
    let mut grad = -u.tr_mul(&w);
    let mut steps = 0;
    while steps < POLISH_STEPS && grad.amax() > 1e-15 {
        let mut hess = DMatrix::zeros(p, p);
        let wu = DMatrix::from_fn(u.nrows(), p, |i, j| u[(i, j)] * w[i].sqrt());
        hess.gemm_tr(1.0, &wu, &wu, 0.0);
        hess.ger(-1.0, &grad, &grad, 1.0);
        let Some(chol) = hess.cholesky() else { break };
        let direction = -chol.solve(&grad);
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let candidate = &*gamma + step * &direction;
            let (_, wc) = log_partition(u, &candidate);
            let gc = -u.tr_mul(&wc);
            if gc.amax() < grad.amax() {
                *gamma = candidate;
                w = wc;
                grad = gc;
                improved = true;
                break;
            }
            step *= 0.5;
        }
        steps += 1;
        if !improved {
            break;
        }
    }
    steps
}

pub(super) fn solve(problem: &CalibrationProblem<'_>) -> Result<WeightSolution> {
    let x = problem.data.x();
    let std = Standardized::new(x, &problem.target.xbar0)?;
    let u = &std.u;
    let p = u.ncols();

    let result = minimize_smooth(
        |g| log_partition(u, g).0,
        |g| -u.tr_mul(&log_partition(u, g).1),
        &DVector::zeros(p),
        &problem.control,
    )?;
    let mut gamma = result.argmin;
    let polish_steps = polish(u, &mut gamma);

    let gamma_orig = gamma.component_div(&std.sd);
    let weights = entropy_weights(x, &gamma_orig);
    let imbalance = imbalance(x, &weights, &problem.target.xbar0);
    let converged = check_balance(&imbalance, gamma.norm(), "entropy")?;
    let ess = effective_sample_size(&weights)?;

    Ok(WeightSolution {
        weights,
        dual_params: gamma_orig,
        method: super::Method::Entropy,
        tolerance_d: DVector::zeros(p),
        converged,
        imbalance,
        ess,
        iterations: result.iterations + polish_steps,
    })
}
