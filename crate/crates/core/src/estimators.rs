//! Weighted point estimators for the target-population estimands and the
//! regression (outcome-model) comparator.
//!
//! The module is agnostic about which party owns individual-level data: the
//! caller decides which sample is `data` and which summary is the target.

use crate::calibration::{CovariateMatrix, TargetSummary};
use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::str::FromStr;

/// Arm label of the treatment of interest in within-trial contrasts.
pub const TREATED_LABEL: i64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimandKind {
    /// `sum w_i y_i`, the mean outcome under trial treatment in the target.
    Mu1Weighted,
    /// `sum w_i y_i - ȳ₀`.
    UnanchoredDelta,
    /// Weighted within-trial arm contrast transported to the target.
    GeneralizationDelta,
    /// Weighted arm contrast minus the target's anchored contrast.
    AnchoredDelta,
    /// Outcome regression prediction at the target means.
    RegressionMu1,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimandSpec {
    pub kind: EstimandKind,
    /// Comparator arm label for arm contrasts; defaults to 0 for
    /// generalization and 2 for anchored comparisons.
    pub anchor_arm_label: Option<i64>,
}

impl EstimandSpec {
    pub fn new(kind: EstimandKind) -> Self {
        EstimandSpec {
            kind,
            anchor_arm_label: None,
        }
    }

    pub fn with_anchor(mut self, label: i64) -> Self {
        self.anchor_arm_label = Some(label);
        self
    }

    pub fn comparator_label(&self) -> i64 {
        self.anchor_arm_label.unwrap_or(match self.kind {
            EstimandKind::AnchoredDelta => 2,
            _ => 0,
        })
    }

    /// Whether the estimand is a weighted mean `sum w_i y_i` up to a constant,
    /// so the variance formulas for the weighted mean apply to it.
    pub fn is_weighted_mean(&self) -> bool {
        matches!(self.kind, EstimandKind::Mu1Weighted | EstimandKind::UnanchoredDelta)
    }
}

impl FromStr for EstimandSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let kind = match s.to_ascii_lowercase().as_str() {
            "mu1" => EstimandKind::Mu1Weighted,
            "unanchored" => EstimandKind::UnanchoredDelta,
            "generalize" | "generalization" => EstimandKind::GeneralizationDelta,
            "anchored" => EstimandKind::AnchoredDelta,
            "regression" | "stc" => EstimandKind::RegressionMu1,
            other => return Err(Error::parse(None, format!("unknown estimand '{other}'"))),
        };
        Ok(EstimandSpec::new(kind))
    }
}

fn check_len(data: &CovariateMatrix, w: &DVector<f64>) -> Result<()> {
    if w.len() != data.n() {
        return Err(Error::Dimension(format!(
            "{} weights for {} rows",
            w.len(),
            data.n()
        )));
    }
    Ok(())
}

pub fn weighted_mu1(data: &CovariateMatrix, w: &DVector<f64>) -> Result<f64> {
    check_len(data, w)?;
    Ok(w.dot(data.y()))
}

pub fn unanchored_delta(data: &CovariateMatrix, w: &DVector<f64>, target: &TargetSummary) -> Result<f64> {
    let ybar0 = target.ybar0.ok_or(Error::MissingSummary("ybar0"))?;
    Ok(weighted_mu1(data, w)? - ybar0)
}

/// `n * sum_i w_i y_i (T_i / n_t - C_i / n_c)`. With weights summing to one,
/// the factor `n` puts them on the count scale, so uniform weights give the
/// plain difference in arm means.
fn arm_contrast(data: &CovariateMatrix, w: &DVector<f64>, comparator: i64) -> Result<f64> {
    check_len(data, w)?;
    let arm = data
        .arm()
        .ok_or_else(|| Error::MissingArm("no arm labels in the data".into()))?;
    let n_t = arm.iter().filter(|&&a| a == TREATED_LABEL).count();
    let n_c = arm.iter().filter(|&&a| a == comparator).count();
    if n_t == 0 || n_c == 0 {
        return Err(Error::MissingArm(format!(
            "{n_t} units in arm {TREATED_LABEL}, {n_c} in arm {comparator}"
        )));
    }
    if let Some(bad) = arm.iter().find(|&&a| a != TREATED_LABEL && a != comparator) {
        return Err(Error::Domain(format!(
            "arm label {bad} is neither {TREATED_LABEL} nor {comparator}"
        )));
    }
    let n = data.n() as f64;
    let total: f64 = arm
        .iter()
        .zip(w.iter().zip(data.y().iter()))
        .map(|(&a, (wi, yi))| {
            let coef = if a == TREATED_LABEL {
                1.0 / n_t as f64
            } else {
                -1.0 / n_c as f64
            };
            wi * yi * coef
        })
        .sum();
    Ok(n * total)
}

pub fn generalization_delta(data: &CovariateMatrix, w: &DVector<f64>) -> Result<f64> {
    arm_contrast(data, w, 0)
}

pub fn generalization_delta_with(data: &CovariateMatrix, w: &DVector<f64>, spec: &EstimandSpec) -> Result<f64> {
    arm_contrast(data, w, spec.comparator_label())
}

pub fn anchored_delta(
    data: &CovariateMatrix,
    w: &DVector<f64>,
    target: &TargetSummary,
    anchor_label: i64,
) -> Result<f64> {
    let mu00 = target.ybar0.ok_or(Error::MissingSummary("ybar0"))?;
    let mu02 = target.mu02.ok_or(Error::MissingSummary("mu02"))?;
    Ok(arm_contrast(data, w, anchor_label)? - (mu00 - mu02))
}

/// Least-squares fit of the outcome on an intercept plus covariates.
#[derive(Debug, Clone)]
pub struct OlsFit {
    /// Intercept first.
    pub coefficients: DVector<f64>,
    pub fitted: DVector<f64>,
}

pub fn ols_fit(data: &CovariateMatrix) -> Result<OlsFit> {
    let (n, p) = (data.n(), data.p());
    if n < p + 1 {
        return Err(Error::SingularFit);
    }
    let mut design = DMatrix::from_element(n, p + 1, 1.0);
    design.columns_mut(1, p).copy_from(data.x());
    let scale = design.norm();
    let qr = design.clone().qr();
    let r = qr.r();
    if (0..=p).any(|j| r[(j, j)].abs() <= 1e-10 * scale) {
        return Err(Error::SingularFit);
    }
    let qty = qr.q().tr_mul(data.y());
    let coefficients = r
        .solve_upper_triangular(&qty)
        .ok_or(Error::SingularFit)?;
    let fitted = &design * &coefficients;
    Ok(OlsFit {
        coefficients,
        fitted,
    })
}

/// Regression (simulated treatment comparison) estimate `[1, x̄₀]'β̂`.
pub fn regression_mu1(data: &CovariateMatrix, target: &TargetSummary) -> Result<f64> {
    if target.xbar0.len() != data.p() {
        return Err(Error::Dimension("target means do not match covariates".into()));
    }
    let fit = ols_fit(data)?;
    Ok(fit.coefficients[0] + fit.coefficients.rows(1, data.p()).dot(&target.xbar0))
}

/// `D = sum_i w_i x_i - x̄₀`.
pub fn imbalance_vector(data: &CovariateMatrix, w: &DVector<f64>, target: &TargetSummary) -> DVector<f64> {
    crate::calibration::imbalance(data.x(), w, &target.xbar0)
}

/// Evaluate any estimand; weights are ignored for the regression estimand.
pub fn evaluate(
    spec: &EstimandSpec,
    data: &CovariateMatrix,
    w: &DVector<f64>,
    target: &TargetSummary,
) -> Result<f64> {
    match spec.kind {
        EstimandKind::Mu1Weighted => weighted_mu1(data, w),
        EstimandKind::UnanchoredDelta => unanchored_delta(data, w, target),
        EstimandKind::GeneralizationDelta => arm_contrast(data, w, spec.comparator_label()),
        EstimandKind::AnchoredDelta => anchored_delta(data, w, target, spec.comparator_label()),
        EstimandKind::RegressionMu1 => regression_mu1(data, target),
    }
}

/// The same estimand with uniform weights.
pub fn unadjusted(spec: &EstimandSpec, data: &CovariateMatrix, target: &TargetSummary) -> Result<f64> {
    let n = data.n();
    evaluate(spec, data, &DVector::from_element(n, 1.0 / n as f64), target)
}

/// Point estimate with standard errors from several variance estimators.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub estimate: f64,
    pub estimand: EstimandSpec,
    pub unadjusted_estimate: f64,
    pub weights_used: WeightSummary,
    /// Keys among `v0`, `vss`, `v2s`, `bootstrap`.
    pub se_by_method: BTreeMap<String, f64>,
    pub ci95_by_method: BTreeMap<String, (f64, f64)>,
    pub bootstrap_failures: Option<usize>,
    pub caveats: Vec<String>,
}

impl EstimateReport {
    pub fn insert_se(&mut self, key: &str, se: f64) {
        self.se_by_method.insert(key.to_string(), se);
        self.ci95_by_method.insert(
            key.to_string(),
            (self.estimate - 1.96 * se, self.estimate + 1.96 * se),
        );
    }
}

/// Serializable view of a [`crate::calibration::WeightSolution`].
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct WeightSummary {
    pub method: crate::calibration::Method,
    pub weights: Vec<f64>,
    pub dual_params: Vec<f64>,
    pub tolerance_d: Vec<f64>,
    pub imbalance: Vec<f64>,
    pub ess: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl From<&crate::calibration::WeightSolution> for WeightSummary {
    fn from(sol: &crate::calibration::WeightSolution) -> Self {
        WeightSummary {
            method: sol.method,
            weights: sol.weights.iter().copied().collect(),
            dual_params: sol.dual_params.iter().copied().collect(),
            tolerance_d: sol.tolerance_d.iter().copied().collect(),
            imbalance: sol.imbalance.iter().copied().collect(),
            ess: sol.ess,
            converged: sol.converged,
            iterations: sol.iterations,
        }
    }
}
