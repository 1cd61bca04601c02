use super::{
    check_balance, effective_sample_size, imbalance, CalibrationProblem, Method, Standardized,
    WeightSolution,
};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

const MAX_HALVINGS: usize = 60;

struct State {
    t: DVector<f64>,
    objective: f64,
    gradient: DVector<f64>,
}

/// Evaluate `-sum log(1 + λ'u_i)` and `sum u_i / (1 + λ'u_i)`; `None` outside
/// the domain `1 + λ'u_i > 0`.
fn evaluate(u: &DMatrix<f64>, lambda: &DVector<f64>) -> Option<State> {
    let t = u * lambda;
    let t = t.map(|v| 1.0 + v);
    if t.iter().any(|v| !(*v > 0.0)) {
        return None;
    }
    let objective = -t.iter().map(|v| v.ln()).sum::<f64>();
    let inv = t.map(|v| 1.0 / v);
    let gradient = u.tr_mul(&inv);
    Some(State {
        t,
        objective,
        gradient,
    })
}

/// Damped Newton iteration for the empirical-likelihood multiplier.
pub(super) fn solve(problem: &CalibrationProblem<'_>) -> Result<WeightSolution> {
    let x = problem.data.x();
    let xbar0 = &problem.target.xbar0;
    let n = x.nrows();
    let p = x.ncols();
    let std = Standardized::new(x, xbar0)?;
    let u = &std.u;

    let mut lambda = DVector::zeros(p);
    let mut state = evaluate(u, &lambda).expect("λ = 0 is always in the domain");
    let mut iterations = 0;

    while iterations < problem.control.max_iterations {
        if state.gradient.amax() / n as f64 <= 1e-15 {
            break;
        }
        iterations += 1;
        let scaled = DMatrix::from_fn(n, p, |i, j| u[(i, j)] / state.t[i]);
        let hess = scaled.tr_mul(&scaled);
        let Some(chol) = hess.cholesky() else { break };
        let direction = chol.solve(&state.gradient);

        let mut step = 1.0;
        let mut next = None;
        for _ in 0..MAX_HALVINGS {
            let candidate = &lambda + step * &direction;
            if let Some(s) = evaluate(u, &candidate) {
                if s.objective < state.objective || s.gradient.amax() < state.gradient.amax() {
                    next = Some((candidate, s));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((candidate, s)) = next else { break };
        lambda = candidate;
        state = s;
        if lambda.norm() > super::DIVERGED_DUAL_NORM {
            break;
        }
    }

    let raw = state.t.map(|t| 1.0 / (n as f64 * t));
    let total = raw.sum();
    if !total.is_finite() || total <= 0.0 {
        return Err(Error::CalibrationInfeasible {
            reason: "empirical-likelihood weights degenerated".into(),
            imbalance: vec![f64::NAN; p],
        });
    }
    let weights = raw / total;
    let imbalance = imbalance(x, &weights, xbar0);
    let converged = check_balance(&imbalance, lambda.norm(), "empirical-likelihood")?;
    let ess = effective_sample_size(&weights)?;

    Ok(WeightSolution {
        weights,
        dual_params: lambda.component_div(&std.sd),
        method: Method::EmpiricalLikelihood,
        tolerance_d: DVector::zeros(p),
        converged,
        imbalance,
        ess,
        iterations,
    })
}
