//! Calibration weights: find `w_i >= 0` summing to one, close to uniform,
//! such that the weighted trial covariate means reproduce the target means.
//!
//! Three distances are supported:
//!
//! * **entropy** (`sum w log w`), equivalent to MAIC. Weights have the
//!   exponential-tilt form `w_i ∝ exp(-γ'x_i)`; `γ` is found by minimizing the
//!   convex dual `log sum_i exp(-γ'x_i) + γ'x̄₀` with BFGS.
//! * **stable** (`sum (w - 1/n)^2`) with non-negativity and an elementwise
//!   balance tolerance `d`, solved as a quadratic program.
//! * **empirical likelihood** (`-sum log w`), with weights
//!   `w_i = 1 / (n (1 + λ'u_i))`, `u_i = x_i - x̄₀`, and `λ` found by damped
//!   Newton iteration.
//!
//! Covariates never include an intercept column: `sum w = 1` is enforced
//! structurally by every solver. Internally columns are centred at the
//! target means and scaled by their trial standard deviations; dual
//! parameters are reported on the original covariate scale.

mod empirical;
mod entropy;
mod stable;

pub use entropy::entropy_weights;

use crate::error::{Error, Result};
use crate::numkit::OptimControl;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Maximum balance residual of a converged exact-balance solution.
pub const BALANCE_TOLERANCE: f64 = 1e-8;
/// Residual above which an unfinished solve is declared infeasible.
pub(crate) const INFEASIBLE_IMBALANCE: f64 = 1e-6;
/// Dual parameter norm beyond which the target is taken to be outside the hull.
pub(crate) const DIVERGED_DUAL_NORM: f64 = 1e6;

/// Trial individual-level data.
#[derive(Debug, Clone)]
pub struct CovariateMatrix {
    x: DMatrix<f64>,
    y: DVector<f64>,
    arm: Option<Vec<i64>>,
}

impl CovariateMatrix {
    /// Validated constructor: `n >= p + 1`, finite entries, and no constant
    /// covariate column.
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, arm: Option<Vec<i64>>) -> Result<Self> {
        let data = Self::from_parts(x, y, arm)?;
        let (n, p) = (data.n(), data.p());
        if p == 0 {
            return Err(Error::Dimension("at least one covariate is required".into()));
        }
        if n < p + 1 {
            return Err(Error::Dimension(format!(
                "{n} rows cannot balance {p} covariates (need at least {})",
                p + 1
            )));
        }
        for (j, col) in data.x.column_iter().enumerate() {
            let first = col[0];
            if col.iter().all(|v| *v == first) {
                return Err(Error::Domain(format!("covariate column {j} has zero variance")));
            }
        }
        Ok(data)
    }

    /// Shape and finiteness checks only; used for resampled data, where a
    /// degenerate draw should surface as a solver failure instead.
    pub(crate) fn from_parts(
        x: DMatrix<f64>,
        y: DVector<f64>,
        arm: Option<Vec<i64>>,
    ) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(Error::Dimension(format!(
                "{} covariate rows but {} outcomes",
                x.nrows(),
                y.len()
            )));
        }
        if let Some(a) = &arm {
            if a.len() != y.len() {
                return Err(Error::Dimension(format!(
                    "{} arm labels but {} outcomes",
                    a.len(),
                    y.len()
                )));
            }
        }
        if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Domain("data contain non-finite values".into()));
        }
        Ok(CovariateMatrix { x, y, arm })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn y(&self) -> &DVector<f64> {
        &self.y
    }

    pub fn arm(&self) -> Option<&[i64]> {
        self.arm.as_deref()
    }

    pub fn column_means(&self) -> DVector<f64> {
        self.x.row_mean().transpose()
    }

    /// Rows picked by `indices` (with repetition), as used for resampling.
    pub fn select_rows(&self, indices: &[usize]) -> CovariateMatrix {
        let x = self.x.select_rows(indices);
        let y = DVector::from_iterator(indices.len(), indices.iter().map(|&i| self.y[i]));
        let arm = self
            .arm
            .as_ref()
            .map(|a| indices.iter().map(|&i| a[i]).collect());
        CovariateMatrix { x, y, arm }
    }

    /// Same covariates and arms with a different outcome vector.
    pub fn with_outcome(&self, y: DVector<f64>) -> Result<CovariateMatrix> {
        CovariateMatrix::from_parts(self.x.clone(), y, self.arm.clone())
    }
}

/// Aggregate statistics available for the target population.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetSummary {
    pub xbar0: DVector<f64>,
    pub n0: Option<usize>,
    /// Mean outcome in the target population under its own treatment.
    pub ybar0: Option<f64>,
    pub sigma0_sq: Option<f64>,
    /// Mean outcome of the shared anchor arm in the target population.
    pub mu02: Option<f64>,
}

impl TargetSummary {
    pub fn new(xbar0: DVector<f64>) -> Self {
        TargetSummary {
            xbar0,
            n0: None,
            ybar0: None,
            sigma0_sq: None,
            mu02: None,
        }
    }

    pub fn with_n0(mut self, n0: usize) -> Self {
        self.n0 = Some(n0);
        self
    }

    pub fn with_ybar0(mut self, ybar0: f64) -> Self {
        self.ybar0 = Some(ybar0);
        self
    }

    pub fn with_sigma0_sq(mut self, sigma0_sq: f64) -> Self {
        self.sigma0_sq = Some(sigma0_sq);
        self
    }

    pub fn with_mu02(mut self, mu02: f64) -> Self {
        self.mu02 = Some(mu02);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Entropy,
    Stable,
    EmpiricalLikelihood,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Entropy, Method::Stable, Method::EmpiricalLikelihood];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Entropy => "entropy",
            Method::Stable => "stable",
            Method::EmpiricalLikelihood => "empirical_likelihood",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "maic" | "entropy" => Ok(Method::Entropy),
            "sbw" | "stable" => Ok(Method::Stable),
            "el" | "empirical_likelihood" => Ok(Method::EmpiricalLikelihood),
            other => Err(Error::parse(None, format!("unknown method '{other}'"))),
        }
    }
}

/// Balancing weights together with the solver diagnostics.
#[derive(Debug, Clone)]
pub struct WeightSolution {
    pub weights: DVector<f64>,
    /// γ for entropy (`w ∝ exp(-γ'x)`), λ for empirical likelihood, balance
    /// multipliers for the stable weights. Original covariate scale.
    pub dual_params: DVector<f64>,
    pub method: Method,
    pub tolerance_d: DVector<f64>,
    pub converged: bool,
    /// `D = sum_i w_i x_i - x̄₀`.
    pub imbalance: DVector<f64>,
    pub ess: f64,
    pub iterations: usize,
}

/// A weight-finding task: data, target means, distance and controls.
#[derive(Debug, Clone)]
pub struct CalibrationProblem<'a> {
    pub data: &'a CovariateMatrix,
    pub target: &'a TargetSummary,
    pub method: Method,
    pub tolerance_d: DVector<f64>,
    pub control: OptimControl,
}

impl<'a> CalibrationProblem<'a> {
    pub fn new(data: &'a CovariateMatrix, target: &'a TargetSummary, method: Method) -> Result<Self> {
        if target.xbar0.len() != data.p() {
            return Err(Error::Dimension(format!(
                "target has {} means, data have {} covariates",
                target.xbar0.len(),
                data.p()
            )));
        }
        if target.xbar0.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("target means must be finite".into()));
        }
        Ok(CalibrationProblem {
            data,
            target,
            method,
            tolerance_d: DVector::zeros(data.p()),
            control: OptimControl::default(),
        })
    }

    /// Balance tolerance for stable weights (original covariate units).
    pub fn with_tolerance(mut self, d: DVector<f64>) -> Result<Self> {
        if d.len() != self.data.p() {
            return Err(Error::Dimension(format!(
                "tolerance has {} entries, data have {} covariates",
                d.len(),
                self.data.p()
            )));
        }
        if d.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain("balance tolerance must be finite and non-negative".into()));
        }
        if self.method != Method::Stable && d.iter().any(|v| *v != 0.0) {
            return Err(Error::Domain(format!(
                "a balance tolerance only applies to stable weights, not {}",
                self.method
            )));
        }
        self.tolerance_d = d;
        Ok(self)
    }

    pub fn with_control(mut self, control: OptimControl) -> Self {
        self.control = control;
        self
    }

    /// Same problem on different data (e.g. a bootstrap resample).
    pub fn rebind<'b>(&self, data: &'b CovariateMatrix) -> CalibrationProblem<'b>
    where
        'a: 'b,
    {
        CalibrationProblem {
            data,
            target: self.target,
            method: self.method,
            tolerance_d: self.tolerance_d.clone(),
            control: self.control,
        }
    }

    pub fn solve(&self) -> Result<WeightSolution> {
        self.control.validate()?;
        match self.method {
            Method::Entropy => solve_entropy(self),
            Method::Stable => solve_stable(self),
            Method::EmpiricalLikelihood => solve_empirical_likelihood(self),
        }
    }
}

pub fn solve_entropy(problem: &CalibrationProblem<'_>) -> Result<WeightSolution> {
    entropy::solve(problem)
}

pub fn solve_stable(problem: &CalibrationProblem<'_>) -> Result<WeightSolution> {
    stable::solve(problem)
}

pub fn solve_empirical_likelihood(problem: &CalibrationProblem<'_>) -> Result<WeightSolution> {
    empirical::solve(problem)
}

/// Kish effective sample size `(sum w)^2 / sum w^2`.
pub fn effective_sample_size(weights: &DVector<f64>) -> Result<f64> {
    if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
        return Err(Error::Domain("weights must be finite and non-negative".into()));
    }
    let total = weights.sum();
    let sq = weights.norm_squared();
    if sq == 0.0 {
        return Err(Error::Domain("all weights are zero".into()));
    }
    Ok(total * total / sq)
}

/// `sum_i w_i x_i - x̄₀`.
pub fn imbalance(x: &DMatrix<f64>, weights: &DVector<f64>, xbar0: &DVector<f64>) -> DVector<f64> {
    x.tr_mul(weights) - xbar0
}

/// Covariates centred at the target means and scaled by trial SDs.
pub(crate) struct Standardized {
    /// `(x_ij - x̄₀_j) / sd_j`, n x p.
    pub u: DMatrix<f64>,
    pub sd: DVector<f64>,
}

impl Standardized {
    pub fn new(x: &DMatrix<f64>, xbar0: &DVector<f64>) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::Dimension("need at least two rows".into()));
        }
        let mut u = x.clone();
        let mut sd = DVector::zeros(x.ncols());
        for (j, mut col) in u.column_iter_mut().enumerate() {
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let s = var.sqrt();
            if !(s > 0.0) {
                return Err(Error::Domain(format!("covariate column {j} has zero variance")));
            }
            sd[j] = s;
            col.apply(|v| *v = (*v - xbar0[j]) / s);
        }
        Ok(Standardized { u, sd })
    }
}

/// Final imbalance checks shared by the exact-balance solvers.
pub(crate) fn check_balance(
    imbalance: &DVector<f64>,
    dual_norm: f64,
    what: &str,
) -> Result<bool> {
    let worst = imbalance.amax();
    if !dual_norm.is_finite() || dual_norm > DIVERGED_DUAL_NORM {
        return Err(Error::CalibrationInfeasible {
            reason: format!("{what} dual parameters diverged; target means likely outside the convex hull of the data"),
            imbalance: imbalance.iter().copied().collect(),
        });
    }
    if !worst.is_finite() || worst > INFEASIBLE_IMBALANCE {
        return Err(Error::CalibrationInfeasible {
            reason: format!("{what} weights failed to balance the covariates"),
            imbalance: imbalance.iter().copied().collect(),
        });
    }
    Ok(worst <= BALANCE_TOLERANCE)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn ess_examples() {
        let uniform = DVector::from_element(10, 0.1);
        assert_abs_diff_eq!(effective_sample_size(&uniform).unwrap(), 10.0, epsilon = 1e-12);
        let two = DVector::from_vec(vec![0.75, 0.25]);
        assert_abs_diff_eq!(effective_sample_size(&two).unwrap(), 1.6, epsilon = 1e-12);
        let one = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert_abs_diff_eq!(effective_sample_size(&one).unwrap(), 1.0, epsilon = 1e-15);
        assert!(effective_sample_size(&DVector::zeros(3)).is_err());
    }

    #[test]
    fn covariate_matrix_validation() {
        let x = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let y = DVector::from_vec(vec![1.0, 3.0]);
        assert!(CovariateMatrix::new(x.clone(), y.clone(), None).is_ok());
        // n < p + 1
        let wide = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        assert!(matches!(
            CovariateMatrix::new(wide, y.clone(), None),
            Err(Error::Dimension(_))
        ));
        let constant = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        assert!(matches!(
            CovariateMatrix::new(constant, y.clone(), None),
            Err(Error::Domain(_))
        ));
        let nan = DMatrix::from_row_slice(2, 1, &[0.0, f64::NAN]);
        assert!(CovariateMatrix::new(nan, y, None).is_err());
    }

    #[test]
    fn tolerance_only_for_stable() {
        let data = CovariateMatrix::new(
            DMatrix::from_row_slice(3, 1, &[-1.0, 0.0, 1.0]),
            DVector::zeros(3),
            None,
        )
        .unwrap();
        let target = TargetSummary::new(DVector::from_element(1, 0.2));
        let d = DVector::from_element(1, 0.01);
        assert!(CalibrationProblem::new(&data, &target, Method::Entropy)
            .unwrap()
            .with_tolerance(d.clone())
            .is_err());
        assert!(CalibrationProblem::new(&data, &target, Method::Stable)
            .unwrap()
            .with_tolerance(d)
            .is_ok());
    }

    #[test]
    fn method_names() {
        assert_eq!("maic".parse::<Method>().unwrap(), Method::Entropy);
        assert_eq!("sbw".parse::<Method>().unwrap(), Method::Stable);
        assert_eq!("el".parse::<Method>().unwrap(), Method::EmpiricalLikelihood);
        assert!("ipw".parse::<Method>().is_err());
    }
}
