//! Monte Carlo engine for the coverage and bias study and the three-way
//! method comparison.
//!
//! A scenario fixes one target sample (stream 0 of the scenario seed) and then
//! draws `n_runs` independent trials, run `i` on stream `i + 1`. Runs execute in
//! parallel and are reduced in run order, so results do not depend on the
//! thread count.

mod output;

pub use output::{write_comparison_csv, write_sim_rows_csv, ComparisonRecord, SimRecord};

use crate::calibration::{CalibrationProblem, CovariateMatrix, Method, TargetSummary};
use crate::error::{Error, Result};
use crate::numkit::{OptimControl, RngStream};
use crate::variance::{bootstrap_variance, v0, v_2s, BootstrapSpec};
use crate::estimators::{EstimandKind, EstimandSpec};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

/// Seed used when none is given.
pub const DEFAULT_SEED: u64 = 134;

/// Share of failed runs above which a scenario is flagged.
pub const DEGENERATE_FAILURE_SHARE: f64 = 0.10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum YModel {
    /// `y = β'x + ε`.
    Linear,
    /// `y = 1{β'x + ε > 0}`.
    Threshold,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PModel {
    /// `x ~ N(m, I)`.
    Normal,
    /// `x = exp(z / 2)`, `z ~ N(m, I)`; applied to the target too.
    Lognormal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub n1: usize,
    pub n0: usize,
    /// Trial covariate means; its length is the covariate count.
    pub m: Vec<f64>,
    pub beta: f64,
    /// Outcome noise SD; zero gives a noise-free outcome.
    pub sigma_eps: f64,
    pub y_model: YModel,
    pub p_model: PModel,
    pub n_runs: usize,
    /// Zero skips the bootstrap.
    pub bootstrap_replicates: usize,
    pub seed: u64,
}

impl ScenarioConfig {
    /// Common-shift scenario with `m = b 1_p`, `β = 0.3` and `n0 = 2000`.
    /// The linear outcome has noise SD 0.5 and the threshold outcome is
    /// noise-free; these reproduce the published coverage tables.
    pub fn shifted(n1: usize, b: f64, p: usize, y_model: YModel, p_model: PModel) -> Self {
        ScenarioConfig {
            name: format!("n1={n1},b={b},p={p},{},{}", y_model.label(), p_model.label()),
            n1,
            n0: 2000,
            m: vec![b; p],
            beta: 0.3,
            sigma_eps: match y_model {
                YModel::Linear => 0.5,
                YModel::Threshold => 0.0,
            },
            y_model,
            p_model,
            n_runs: 2000,
            bootstrap_replicates: 50,
            seed: DEFAULT_SEED,
        }
    }

    /// Mixed-shift scenario: the first two means are 0.5, the rest 0.25.
    pub fn mixed(n1: usize, p: usize, y_model: YModel, p_model: PModel) -> Self {
        let mut config = Self::shifted(n1, 0.5, p, y_model, p_model);
        for v in config.m.iter_mut().skip(2) {
            *v = 0.25;
        }
        config.name = format!("n1={n1},mixed,p={p},{},{}", y_model.label(), p_model.label());
        config
    }

    pub fn p(&self) -> usize {
        self.m.len()
    }

    /// Echo of the common shift; the first mean for mixed patterns.
    pub fn b(&self) -> f64 {
        self.m.first().copied().unwrap_or(0.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m.is_empty() {
            return Err(Error::Domain("scenario needs at least one covariate".into()));
        }
        if self.n1 < self.p() + 1 {
            return Err(Error::Domain(format!("n1 = {} is below p + 1", self.n1)));
        }
        if self.n0 < 1 || self.n_runs < 1 {
            return Err(Error::Domain("n0 and n_runs must be at least 1".into()));
        }
        if self.bootstrap_replicates == 1 {
            return Err(Error::Domain("bootstrap needs 0 or at least 2 replicates".into()));
        }
        if !(self.sigma_eps >= 0.0) || !self.beta.is_finite() || self.m.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("scenario parameters must be finite with sigma_eps >= 0".into()));
        }
        Ok(())
    }

    fn draw_covariates(&self, rng: &mut RngStream, means: &[f64]) -> Vec<f64> {
        means
            .iter()
            .map(|mean| {
                let z = mean + rng.standard_normal();
                match self.p_model {
                    PModel::Normal => z,
                    PModel::Lognormal => (0.5 * z).exp(),
                }
            })
            .collect()
    }
}

impl YModel {
    pub fn label(&self) -> &'static str {
        match self {
            YModel::Linear => "linear",
            YModel::Threshold => "threshold",
        }
    }
}

impl PModel {
    pub fn label(&self) -> &'static str {
        match self {
            PModel::Normal => "normal",
            PModel::Lognormal => "lognormal",
        }
    }
}

/// Fixed target shared by every run of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioTruth {
    pub xbar0: DVector<f64>,
    pub mu1_true: f64,
}

impl ScenarioTruth {
    pub fn target(&self) -> TargetSummary {
        TargetSummary::new(self.xbar0.clone())
    }
}

/// Draw the target sample and compute the true mean outcome over it. Noise in
/// the threshold model is integrated out analytically.
pub fn generate_target(config: &ScenarioConfig, rng: &mut RngStream) -> ScenarioTruth {
    let p = config.p();
    let zeros = vec![0.0; p];
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut sums = DVector::zeros(p);
    let mut mu = 0.0;
    for _ in 0..config.n0 {
        let x = config.draw_covariates(rng, &zeros);
        let eta: f64 = config.beta * x.iter().sum::<f64>();
        for (s, v) in sums.iter_mut().zip(&x) {
            *s += v;
        }
        mu += match config.y_model {
            YModel::Linear => eta,
            YModel::Threshold if config.sigma_eps > 0.0 => std_normal.cdf(eta / config.sigma_eps),
            YModel::Threshold => f64::from(u8::from(eta > 0.0)),
        };
    }
    let n0 = config.n0 as f64;
    ScenarioTruth {
        xbar0: sums / n0,
        mu1_true: mu / n0,
    }
}

/// Draw one trial of `n1` units.
pub fn generate_trial(config: &ScenarioConfig, rng: &mut RngStream) -> Result<CovariateMatrix> {
    let (n, p) = (config.n1, config.p());
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    for i in 0..n {
        let row = config.draw_covariates(rng, &config.m);
        let eps = if config.sigma_eps > 0.0 {
            config.sigma_eps * rng.standard_normal()
        } else {
            0.0
        };
        let eta = config.beta * row.iter().sum::<f64>() + eps;
        for (j, v) in row.into_iter().enumerate() {
            x[(i, j)] = v;
        }
        y[i] = match config.y_model {
            YModel::Linear => eta,
            YModel::Threshold => f64::from(u8::from(eta > 0.0)),
        };
    }
    CovariateMatrix::new(x, y, None)
}

/// Per-scenario summary in the layout of the coverage tables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimRow {
    pub config: ScenarioConfig,
    pub mu1_true: f64,
    pub bias_unadjusted: f64,
    pub bias_method: f64,
    pub coverage_2s: f64,
    /// NaN when the bootstrap was skipped.
    pub coverage_boot: f64,
    pub se_2s: f64,
    pub se_boot: f64,
    pub se_maic: f64,
    pub se_empirical: f64,
    pub solver_failures: usize,
    pub bootstrap_failures: usize,
    pub warning: Option<String>,
}

#[derive(Debug, Clone, Copy)]
struct RunOutcome {
    ybar: f64,
    estimate: f64,
    v2s: f64,
    v0: f64,
    boot: Option<f64>,
    boot_failed: usize,
}

fn run_stream(config: &ScenarioConfig, run: usize) -> RngStream {
    RngStream::new(config.seed, run as u64 + 1)
}

fn single_run(config: &ScenarioConfig, target: &TargetSummary, run: usize) -> Result<RunOutcome> {
    let mut rng = run_stream(config, run);
    let trial = generate_trial(config, &mut rng)?;
    let problem = CalibrationProblem::new(&trial, target, Method::Entropy)?;
    let sol = problem.solve()?;
    let estimate = sol.weights.dot(trial.y());
    let v2s = v_2s(&trial, &sol, target, estimate)?;
    let v0 = v0(&trial, &sol.weights, estimate);

    let (boot, boot_failed) = if config.bootstrap_replicates >= 2 {
        let spec = BootstrapSpec::new(config.bootstrap_replicates, rng.split(0))?;
        let relaxed = problem.clone().with_control(OptimControl::relaxed());
        match bootstrap_variance(&relaxed, &EstimandSpec::new(EstimandKind::Mu1Weighted), &spec) {
            Ok((v, failed)) => (Some(v), failed),
            Err(_) => (None, config.bootstrap_replicates),
        }
    } else {
        (None, 0)
    };
    Ok(RunOutcome {
        ybar: trial.y().mean(),
        estimate,
        v2s,
        v0,
        boot,
        boot_failed,
    })
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        f64::NAN
    } else {
        sum / count as f64
    }
}

fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return f64::NAN;
    }
    let m = mean(values.iter().copied());
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}

fn degenerate_warning(failures: usize, runs: usize) -> Option<String> {
    (failures as f64 > DEGENERATE_FAILURE_SHARE * runs as f64)
        .then(|| format!("scenario degenerate: {failures} of {runs} runs failed to calibrate"))
}

/// Run every trial of a scenario with entropy weights and summarize.
pub fn run_scenario(config: &ScenarioConfig) -> Result<SimRow> {
    config.validate()?;
    let truth = generate_target(config, &mut RngStream::new(config.seed, 0));
    let target = truth.target();
    let outcomes: Vec<Option<RunOutcome>> = (0..config.n_runs)
        .into_par_iter()
        .map(|run| single_run(config, &target, run).ok())
        .collect();

    let ok: Vec<RunOutcome> = outcomes.iter().flatten().copied().collect();
    let failures = config.n_runs - ok.len();
    let mu = truth.mu1_true;
    let covered = |est: f64, var: f64| f64::from(u8::from((mu - est).abs() < 1.96 * var.sqrt()));
    let booted: Vec<&RunOutcome> = ok.iter().filter(|o| o.boot.is_some()).collect();
    let estimates: Vec<f64> = ok.iter().map(|o| o.estimate).collect();

    Ok(SimRow {
        config: config.clone(),
        mu1_true: mu,
        bias_unadjusted: mean(ok.iter().map(|o| o.ybar - mu)),
        bias_method: mean(ok.iter().map(|o| o.estimate - mu)),
        coverage_2s: mean(ok.iter().map(|o| covered(o.estimate, o.v2s))),
        coverage_boot: mean(booted.iter().map(|o| covered(o.estimate, o.boot.unwrap_or(f64::NAN)))),
        se_2s: mean(ok.iter().map(|o| o.v2s)).sqrt(),
        se_boot: mean(booted.iter().map(|o| o.boot.unwrap_or(f64::NAN))).sqrt(),
        se_maic: mean(ok.iter().map(|o| o.v0)).sqrt(),
        se_empirical: sample_sd(&estimates),
        solver_failures: failures,
        bootstrap_failures: ok.iter().map(|o| o.boot_failed).sum(),
        warning: degenerate_warning(failures, config.n_runs),
    })
}

/// Per-run error of one method, `μ̂₁ - μ₁`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub run: usize,
    pub method: Method,
    pub scenario: String,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    /// Failed runs per method, in the order of the requested methods.
    pub failures: Vec<(Method, usize)>,
    pub warning: Option<String>,
}

impl ComparisonTable {
    pub fn errors(&self, method: Method) -> Vec<f64> {
        self.rows
            .iter()
            .filter(|r| r.method == method)
            .map(|r| r.error)
            .collect()
    }
}

/// Fit every method on the same trials and record the per-run errors. The
/// tolerance `d` applies to stable weights only.
pub fn run_method_comparison(config: &ScenarioConfig, methods: &[Method], d: &DVector<f64>) -> Result<ComparisonTable> {
    config.validate()?;
    if d.len() != config.p() {
        return Err(Error::Dimension(format!("tolerance has {} entries for {} covariates", d.len(), config.p())));
    }
    let truth = generate_target(config, &mut RngStream::new(config.seed, 0));
    let target = truth.target();

    let per_run: Vec<Vec<Option<f64>>> = (0..config.n_runs)
        .into_par_iter()
        .map(|run| {
            let mut rng = run_stream(config, run);
            let Ok(trial) = generate_trial(config, &mut rng) else {
                return vec![None; methods.len()];
            };
            methods
                .iter()
                .map(|&method| {
                    let mut problem = CalibrationProblem::new(&trial, &target, method).ok()?;
                    if method == Method::Stable {
                        problem = problem.with_tolerance(d.clone()).ok()?;
                    }
                    let sol = problem.solve().ok()?;
                    Some(sol.weights.dot(trial.y()) - truth.mu1_true)
                })
                .collect()
        })
        .collect();

    let mut rows = Vec::new();
    let mut failures: Vec<(Method, usize)> = methods.iter().map(|&m| (m, 0)).collect();
    for (run, errors) in per_run.iter().enumerate() {
        for (k, error) in errors.iter().enumerate() {
            match error {
                Some(e) => rows.push(ComparisonRow {
                    run,
                    method: methods[k],
                    scenario: config.name.clone(),
                    error: *e,
                }),
                None => failures[k].1 += 1,
            }
        }
    }
    let worst = failures.iter().map(|f| f.1).max().unwrap_or(0);
    Ok(ComparisonTable {
        rows,
        failures,
        warning: degenerate_warning(worst, config.n_runs),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small(y_model: YModel, p_model: PModel) -> ScenarioConfig {
        let mut c = ScenarioConfig::shifted(60, 0.5, 3, y_model, p_model);
        c.n_runs = 8;
        c.bootstrap_replicates = 0;
        c
    }

    #[test]
    fn null_coefficients_truth() {
        let mut c = small(YModel::Linear, PModel::Normal);
        c.beta = 0.0;
        let t = generate_target(&c, &mut RngStream::new(1, 0));
        assert_eq!(t.mu1_true, 0.0);
        let mut c = small(YModel::Threshold, PModel::Normal);
        c.beta = 0.0;
        c.sigma_eps = 1.0;
        let t = generate_target(&c, &mut RngStream::new(1, 0));
        assert_abs_diff_eq!(t.mu1_true, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn linear_truth_is_near_zero() {
        let c = small(YModel::Linear, PModel::Normal);
        let t = generate_target(&c, &mut RngStream::new(77, 0));
        // sd of the mean is 0.3 * sqrt(3) / sqrt(2000)
        let se = 0.3 * 3f64.sqrt() / 2000f64.sqrt();
        assert!(t.mu1_true.abs() < 4.0 * se, "{}", t.mu1_true);
        assert_abs_diff_eq!(t.mu1_true, 0.3 * t.xbar0.sum(), epsilon = 1e-12);
    }

    #[test]
    fn trial_shapes_and_supports() {
        let c = small(YModel::Threshold, PModel::Lognormal);
        let trial = generate_trial(&c, &mut RngStream::new(5, 1)).unwrap();
        assert_eq!((trial.n(), trial.p()), (60, 3));
        assert!(trial.y().iter().all(|&y| y == 0.0 || y == 1.0));
        assert!(trial.x().iter().all(|&x| x > 0.0));
    }

    #[test]
    fn noise_free_linear_outcome_is_recovered_exactly() {
        let mut c = small(YModel::Linear, PModel::Normal);
        c.sigma_eps = 0.0;
        let truth = generate_target(&c, &mut RngStream::new(c.seed, 0));
        let trial = generate_trial(&c, &mut RngStream::new(c.seed, 1)).unwrap();
        for i in 0..trial.n() {
            assert_abs_diff_eq!(trial.y()[i], 0.3 * trial.x().row(i).sum(), epsilon = 1e-14);
        }
        let target = truth.target();
        let sol = CalibrationProblem::new(&trial, &target, Method::Entropy).unwrap().solve().unwrap();
        assert_abs_diff_eq!(sol.weights.dot(trial.y()), 0.3 * truth.xbar0.sum(), epsilon = 1e-10);
    }

    #[test]
    fn scenario_is_deterministic() {
        let mut c = small(YModel::Linear, PModel::Normal);
        c.bootstrap_replicates = 5;
        let a = run_scenario(&c).unwrap();
        let b = run_scenario(&c).unwrap();
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        assert_eq!(a.solver_failures, 0);
        assert!((0.0..=1.0).contains(&a.coverage_2s));
        assert!((0.0..=1.0).contains(&a.coverage_boot));
    }

    #[test]
    fn null_effect_has_no_bias() {
        let mut c = small(YModel::Linear, PModel::Normal);
        c.beta = 0.0;
        c.sigma_eps = 1e-6;
        let row = run_scenario(&c).unwrap();
        assert!(row.bias_unadjusted.abs() < 1e-5);
        assert!(row.bias_method.abs() < 1e-5);
        assert!(row.coverage_boot.is_nan());
    }

    #[test]
    fn one_run_comparison_has_one_row_per_method() {
        let mut c = small(YModel::Linear, PModel::Normal);
        c.n_runs = 1;
        let d = DVector::from_element(3, 0.005);
        let table = run_method_comparison(&c, &Method::ALL, &d).unwrap();
        assert_eq!(table.rows.len(), 3);
        assert!(table.warning.is_none());
    }

    #[test]
    fn invalid_configs() {
        let mut c = small(YModel::Linear, PModel::Normal);
        c.n_runs = 0;
        assert!(c.validate().is_err());
        let mut c = small(YModel::Linear, PModel::Normal);
        c.n1 = 3;
        assert!(c.validate().is_err());
        let mut c = small(YModel::Linear, PModel::Normal);
        c.bootstrap_replicates = 1;
        assert!(c.validate().is_err());
    }
}
