use super::{OptimControl, OptimResult};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

const ARMIJO_SLOPE: f64 = 1e-4;
const CONTRACTION: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;
/// Curvature parameter of the approximate Wolfe fallback.
const CURVATURE: f64 = 0.9;
/// Relative objective change treated as rounding noise by the fallback.
const ROUNDING_SLACK: f64 = 1e-10;
/// Consecutive iterations without progress in objective or gradient that
/// count as a stall.
const STALL_LIMIT: usize = 3;

/// Minimize a smooth function with BFGS and an Armijo backtracking line search.
///
/// Stops when the gradient max-norm falls below `control.gradient_tolerance`,
/// when for several consecutive iterations neither the gradient shrinks nor
/// the objective drops by more than `control.relative_tolerance` (relative),
/// when the line search can make no further progress, or after
/// `control.max_iterations` iterations. Reaching the iteration cap is
/// reported through `converged = false`, not as an error.
pub fn minimize_smooth<F, G>(
    objective: F,
    gradient: G,
    start: &DVector<f64>,
    control: &OptimControl,
) -> Result<OptimResult>
where
    F: Fn(&DVector<f64>) -> f64,
    G: Fn(&DVector<f64>) -> DVector<f64>,
{
    control.validate()?;
    let dim = start.len();
    let mut x = start.clone();
    let mut f = objective(&x);
    let mut g = gradient(&x);
    if !f.is_finite() || g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain(
            "objective or gradient is not finite at the starting point".into(),
        ));
    }
    if g.len() != dim {
        return Err(Error::Dimension(format!(
            "gradient has length {}, expected {dim}",
            g.len()
        )));
    }

    let mut inv_hessian = DMatrix::<f64>::identity(dim, dim);
    let mut first_step = true;
    let mut iterations = 0;
    let mut stalled = 0;

    while iterations < control.max_iterations {
        if g.amax() <= control.gradient_tolerance {
            break;
        }
        iterations += 1;

        let mut direction = -(&inv_hessian * &g);
        let mut slope = direction.dot(&g);
        if slope >= 0.0 {
            // Lost positive definiteness; fall back to steepest descent.
            inv_hessian.fill_with_identity();
            direction = -g.clone();
            slope = direction.dot(&g);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let candidate = &x + step * &direction;
            let fc = objective(&candidate);
            if fc.is_finite() {
                if fc <= f + ARMIJO_SLOPE * step * slope {
                    accepted = Some((candidate, fc, None));
                    break;
                }
                // Near the minimum the Armijo test drowns in rounding; accept
                // on approximate Wolfe conditions from the directional derivative.
                if fc <= f + ROUNDING_SLACK * f.abs() {
                    let gc = gradient(&candidate);
                    let dc = gc.dot(&direction);
                    if dc <= (2.0 * ARMIJO_SLOPE - 1.0) * slope && dc >= CURVATURE * slope {
                        accepted = Some((candidate, fc, Some(gc)));
                        break;
                    }
                }
            }
            step *= CONTRACTION;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            break;
        };
        let g_new = g_new.unwrap_or_else(|| gradient(&x_new));
        if g_new.iter().any(|v| !v.is_finite()) {
            break;
        }

        let s = &x_new - &x;
        let y = &g_new - &g;
        let sy = s.dot(&y);
        if sy > f64::EPSILON * s.norm() * y.norm() {
            if first_step {
                // Scale the initial inverse Hessian to the observed curvature.
                inv_hessian *= sy / y.dot(&y);
                first_step = false;
            }
            let rho = 1.0 / sy;
            let hy = &inv_hessian * &y;
            let yhy = y.dot(&hy);
            // H+ = H - rho (s hy' + hy s') + (rho^2 y'Hy + rho) s s'
            inv_hessian.ger(-rho, &s, &hy, 1.0);
            inv_hessian.ger(-rho, &hy, &s, 1.0);
            inv_hessian.ger(rho * rho * yhy + rho, &s, &s, 1.0);
        }

        let decrease = f - f_new;
        let gradient_shrank = g_new.amax() < g.amax();
        x = x_new;
        g = g_new;
        f = f_new;
        if !gradient_shrank && decrease.abs() <= control.relative_tolerance * (f.abs() + control.relative_tolerance) {
            stalled += 1;
            if stalled >= STALL_LIMIT {
                break;
            }
        } else {
            stalled = 0;
        }
    }

    let gradient_norm = g.amax();
    Ok(OptimResult {
        argmin: x,
        objective_value: f,
        converged: gradient_norm <= control.gradient_tolerance,
        iterations,
        gradient_norm,
    })
}
