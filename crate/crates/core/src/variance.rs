//! Variance estimators for the weighted mean `μ̂₁ = sum w_i y_i`.
//!
//! `v0` ignores the estimation of the weights, `v_ss` is the survey-sampling
//! form with a fitted outcome model, and `v_2s` is the two-step sandwich for
//! entropy weights that accounts for solving the balance equations.

use crate::calibration::{CalibrationProblem, CovariateMatrix, Method, TargetSummary, WeightSolution, BALANCE_TOLERANCE};
use crate::error::{Error, Result};
use crate::estimators::{evaluate, EstimandKind, EstimandSpec};
use crate::numkit::RngStream;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// `sum w_i^2 (y_i - μ̂₁)^2`.
pub fn v0(data: &CovariateMatrix, w: &DVector<f64>, mu1_hat: f64) -> f64 {
    w.iter()
        .zip(data.y().iter())
        .map(|(wi, yi)| (wi * (yi - mu1_hat)).powi(2))
        .sum()
}

/// `sum w_i^2 (y_i - m̂(x_i))^2` for caller-supplied fitted values.
pub fn v_ss(data: &CovariateMatrix, w: &DVector<f64>, fitted: &DVector<f64>) -> Result<f64> {
    if fitted.len() != data.n() || w.len() != data.n() {
        return Err(Error::Dimension("fitted values and weights must have one entry per row".into()));
    }
    Ok(w.iter()
        .zip(data.y().iter().zip(fitted.iter()))
        .map(|(wi, (yi, mi))| (wi * (yi - mi)).powi(2))
        .sum())
}

/// Pieces of the two-step sandwich.
#[derive(Debug, Clone)]
pub struct SandwichWork {
    /// `sum_i w_i x_i (x_i - x̄₀)'`.
    pub a: DMatrix<f64>,
    /// `sum_i w_i x_i (y_i - μ̂₁)`.
    pub b: DVector<f64>,
    /// Rows `S₁ᵢ = w_i (x_i - x̄₀)`.
    pub s1: DMatrix<f64>,
    /// `S₂ᵢ = w_i (y_i - μ̂₁)`.
    pub s2: DVector<f64>,
    /// `Sᵢ = S₂ᵢ - B'A⁻¹S₁ᵢ`.
    pub corrected: DVector<f64>,
}

impl SandwichWork {
    pub fn variance(&self) -> f64 {
        self.corrected.norm_squared()
    }
}

pub fn sandwich_work(
    data: &CovariateMatrix,
    solution: &WeightSolution,
    target: &TargetSummary,
    mu1_hat: f64,
) -> Result<SandwichWork> {
    if solution.method != Method::Entropy {
        return Err(Error::Domain(format!(
            "the two-step sandwich is defined for entropy weights, not {}",
            solution.method
        )));
    }
    let x = data.x();
    let (n, p) = (data.n(), data.p());
    let w = &solution.weights;
    let xbar0 = &target.xbar0;
    if w.len() != n || xbar0.len() != p {
        return Err(Error::Dimension("weights or target means do not match the data".into()));
    }

    let s1 = DMatrix::from_fn(n, p, |i, j| w[i] * (x[(i, j)] - xbar0[j]));
    let s2 = DVector::from_fn(n, |i, _| w[i] * (data.y()[i] - mu1_hat));
    let sum1 = s1.row_sum();
    if sum1.amax() > BALANCE_TOLERANCE {
        return Err(Error::EstimatingEquations(format!(
            "balance equations off by {:.3e}",
            sum1.amax()
        )));
    }
    if s2.sum().abs() > BALANCE_TOLERANCE * (1.0 + mu1_hat.abs()) {
        return Err(Error::EstimatingEquations(format!(
            "outcome equation off by {:.3e}",
            s2.sum().abs()
        )));
    }

    let a = x.tr_mul(&s1);
    let b = x.tr_mul(&s2);
    // S₁ᵢ'A⁻ᵀB for every row at once.
    let lu = a.transpose().lu();
    let scale = a.amax();
    let min_pivot = lu.u().diagonal().amin();
    if !(scale > 0.0) || min_pivot <= 1e-12 * scale {
        return Err(Error::SingularSandwich);
    }
    let coef = lu.solve(&b).ok_or(Error::SingularSandwich)?;
    let corrected = &s2 - &s1 * coef;
    Ok(SandwichWork { a, b, s1, s2, corrected })
}

/// Two-step sandwich variance `sum_i S_i^2` for entropy weights.
pub fn v_2s(data: &CovariateMatrix, solution: &WeightSolution, target: &TargetSummary, mu1_hat: f64) -> Result<f64> {
    Ok(sandwich_work(data, solution, target, mu1_hat)?.variance())
}

pub const DEFAULT_REPLICATES: usize = 50;

#[derive(Debug, Clone)]
pub struct BootstrapSpec {
    pub replicates: usize,
    pub rng: RngStream,
    /// Weights are always re-solved on each resample.
    pub reestimate_weights: bool,
}

impl BootstrapSpec {
    pub fn new(replicates: usize, rng: RngStream) -> Result<Self> {
        if replicates < 2 {
            return Err(Error::Domain(format!("need at least 2 bootstrap replicates, got {replicates}")));
        }
        Ok(BootstrapSpec {
            replicates,
            rng,
            reestimate_weights: true,
        })
    }
}

/// Nonparametric bootstrap over rows of `problem.data` with the target held
/// fixed. Returns the sample variance (denominator `k - 1`) over the `k`
/// replicates that solved, and the number that did not.
pub fn bootstrap_variance(
    problem: &CalibrationProblem<'_>,
    estimand: &EstimandSpec,
    spec: &BootstrapSpec,
) -> Result<(f64, usize)> {
    let data = problem.data;
    let n = data.n();
    let estimates: Vec<Option<f64>> = (0..spec.replicates)
        .into_par_iter()
        .map(|r| {
            let mut rng = spec.rng.split(r as u64);
            let rows: Vec<usize> = (0..n).map(|_| rng.index(n)).collect();
            let resample = data.select_rows(&rows);
            let weights = if estimand.kind == EstimandKind::RegressionMu1 {
                DVector::from_element(n, 1.0 / n as f64)
            } else {
                problem.rebind(&resample).solve().ok()?.weights
            };
            evaluate(estimand, &resample, &weights, problem.target)
                .ok()
                .filter(|v| v.is_finite())
        })
        .collect();

    let ok: Vec<f64> = estimates.iter().flatten().copied().collect();
    let failures = spec.replicates - ok.len();
    if ok.len() < 2 {
        return Err(Error::BootstrapFailed {
            replicates: spec.replicates,
        });
    }
    let k = ok.len() as f64;
    let mean = ok.iter().sum::<f64>() / k;
    let var = ok.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    Ok((var, failures))
}

/// `v + σ₀²/n₀`, adding the sampling variance of the target-sample mean.
pub fn augment_target_variance(v_mu1: f64, target: &TargetSummary) -> Result<f64> {
    let sigma0_sq = target.sigma0_sq.ok_or(Error::MissingSummary("sigma0_sq"))?;
    let n0 = target.n0.ok_or(Error::MissingSummary("n0"))?;
    Ok(v_mu1 + sigma0_sq / n0 as f64)
}
