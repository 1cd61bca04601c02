use super::OptimControl;
use crate::error::{Error, Result};

/// Find a root of a monotone scalar function inside a sign-changing bracket.
///
/// Bisection safeguarded Illinois (modified regula falsi) steps; stops when
/// `|g(x)| <= control.gradient_tolerance` or the bracket collapses to machine
/// precision.
pub fn find_root_scalar<G>(g: G, bracket: (f64, f64), control: &OptimControl) -> Result<f64>
where
    G: Fn(f64) -> f64,
{
    control.validate()?;
    let (mut lo, mut hi) = if bracket.0 <= bracket.1 {
        bracket
    } else {
        (bracket.1, bracket.0)
    };
    let mut g_lo = g(lo);
    let mut g_hi = g(hi);
    if !g_lo.is_finite() || !g_hi.is_finite() {
        return Err(Error::Domain("function is not finite at the bracket ends".into()));
    }
    if g_lo == 0.0 {
        return Ok(lo);
    }
    if g_hi == 0.0 {
        return Ok(hi);
    }
    if g_lo.signum() == g_hi.signum() {
        return Err(Error::Bracket {
            lo,
            hi,
            g_lo,
            g_hi,
        });
    }

    let tol = control.gradient_tolerance;
    let mut side = 0i8;
    // Regula falsi converges in few steps for smooth g; the bisection fallback
    // bounds the worst case at ~64 halvings of the bracket.
    for _ in 0..(control.max_iterations.max(200)) {
        let mut x = (lo * g_hi - hi * g_lo) / (g_hi - g_lo);
        if !x.is_finite() || x <= lo || x >= hi {
            x = 0.5 * (lo + hi);
        }
        let gx = g(x);
        if gx.abs() <= tol || hi - lo <= 4.0 * f64::EPSILON * (lo.abs() + hi.abs()).max(1e-300) {
            return Ok(x);
        }
        if gx.signum() == g_lo.signum() {
            lo = x;
            g_lo = gx;
            if side == -1 {
                g_hi *= 0.5;
            }
            side = -1;
        } else {
            hi = x;
            g_hi = gx;
            if side == 1 {
                g_lo *= 0.5;
            }
            side = 1;
        }
        if (hi - lo).abs() <= f64::EPSILON * hi.abs().max(lo.abs()) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}
