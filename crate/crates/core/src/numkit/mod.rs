//! Numerical kernels shared by the weight solvers: a BFGS minimizer, a dense
//! active-set quadratic-program solver, a bracketing root finder and a
//! splittable deterministic random stream.
//!
//! Dense linear algebra is delegated to `nalgebra`.

mod bfgs;
mod qp;
mod rng;
mod roots;

pub use bfgs::minimize_smooth;
pub use qp::{solve_qp, BoxConstraints, QpProblem, QpSolution};
pub use rng::RngStream;
pub use roots::find_root_scalar;

use crate::error::{Error, Result};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

/// Iteration and tolerance controls for the iterative solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimControl {
    pub max_iterations: usize,
    /// Relative objective-change stopping rule, `|f_k - f_{k+1}| <= rtol * (|f_k| + rtol)`.
    pub relative_tolerance: f64,
    /// Max-norm of the gradient below which a point counts as stationary.
    pub gradient_tolerance: f64,
}

impl Default for OptimControl {
    fn default() -> Self {
        OptimControl {
            max_iterations: 300,
            relative_tolerance: 1e-8,
            gradient_tolerance: 1e-8,
        }
    }
}

impl OptimControl {
    pub fn new(
        max_iterations: usize,
        relative_tolerance: f64,
        gradient_tolerance: f64,
    ) -> Result<Self> {
        let control = OptimControl {
            max_iterations,
            relative_tolerance,
            gradient_tolerance,
        };
        control.validate()?;
        Ok(control)
    }

    /// Looser controls used for refits inside resampling loops.
    pub fn relaxed() -> Self {
        OptimControl {
            max_iterations: 300,
            relative_tolerance: 1e-5,
            gradient_tolerance: 1e-5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iterations < 1 {
            return Err(Error::Domain("max_iterations must be at least 1".into()));
        }
        if !(self.relative_tolerance > 0.0) || !(self.gradient_tolerance > 0.0) {
            return Err(Error::Domain("tolerances must be positive".into()));
        }
        Ok(())
    }
}

/// Outcome of [`minimize_smooth`].
#[derive(Debug, Clone)]
pub struct OptimResult {
    pub argmin: DVector<f64>,
    pub objective_value: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Max-norm of the gradient at `argmin`.
    pub gradient_norm: f64,
}
