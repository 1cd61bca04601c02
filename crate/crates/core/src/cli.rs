//! Command-line front end: `weights`, `estimate`, `simulate` and `compare`.
//!
//! Exit codes: 0 success, 1 other failure, 2 calibration infeasible, 3 parse
//! or usage error, 4 a summary statistic required by the estimand is missing.

use crate::calibration::{CalibrationProblem, Method, WeightSolution};
use crate::error::{Error, Result};
use crate::estimators::{
    evaluate, ols_fit, unadjusted, EstimandKind, EstimandSpec, EstimateReport, WeightSummary,
};
use crate::io::{read_ipd_path, read_scenario_file, write_weights, IpdData, TargetFile};
use crate::numkit::RngStream;
use crate::simulation::{
    run_method_comparison, run_scenario, write_comparison_csv, write_sim_rows_csv, PModel, ScenarioConfig, SimRow,
    YModel, DEFAULT_SEED,
};
use crate::variance::{augment_target_variance, bootstrap_variance, v0, v_2s, v_ss, BootstrapSpec, DEFAULT_REPLICATES};
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;
use serde::Serialize;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "CALIBRA_THREADS";

#[derive(Debug, Parser)]
#[command(name = "calibra", version, about = "Covariate-balancing weights for indirect comparisons")]
pub struct Cli {
    /// Seed for every random draw; defaults to 134.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve balancing weights and write them with diagnostics.
    Weights(WeightsArgs),
    /// Estimate a target-population quantity with standard errors.
    Estimate(EstimateArgs),
    /// Run coverage simulations from a scenario file.
    Simulate(SimulateArgs),
    /// Compare the three weighting methods on one simulated scenario.
    Compare(CompareArgs),
}

#[derive(Debug, Clone, Args)]
pub struct InputArgs {
    /// IPD CSV with a header row, covariates, optional `y`, `arm` and `row_id`.
    #[arg(long)]
    pub ipd: PathBuf,
    /// Target summary JSON.
    #[arg(long)]
    pub target: PathBuf,
    /// maic|entropy, sbw|stable or el.
    #[arg(long, default_value = "maic", value_parser = parse_method)]
    pub method: Method,
    /// Balance tolerance for stable weights: one value or one per covariate.
    #[arg(long)]
    pub d: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct WeightsArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// Weight CSV (`row_id,weight`); diagnostics JSON goes to stdout.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct EstimateArgs {
    #[command(flatten)]
    pub input: InputArgs,
    /// mu1, unanchored, generalize or anchored.
    #[arg(long, default_value = "mu1", value_parser = parse_estimand)]
    pub estimand: EstimandSpec,
    /// Comparator arm label for generalize/anchored.
    #[arg(long)]
    pub anchor_arm: Option<i64>,
    /// Comma-separated subset of v0, vss, v2s, boot.
    #[arg(long, value_delimiter = ',', default_value = "v0,v2s", value_parser = parse_variance)]
    pub variance: Vec<VarianceMethod>,
    #[arg(long, default_value_t = DEFAULT_REPLICATES)]
    pub boot_reps: usize,
    /// Report JSON; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    /// Scenario file (TOML, or JSON by extension).
    pub config: PathBuf,
    /// Output directory for one CSV per table label.
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Override `n_runs` of every entry.
    #[arg(long)]
    pub runs: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    #[arg(long, default_value_t = 200)]
    pub n1: usize,
    #[arg(long, default_value_t = 0.5)]
    pub b: f64,
    #[arg(long, default_value_t = 7)]
    pub p: usize,
    #[arg(long, default_value = "threshold", value_parser = parse_y_model)]
    pub y_model: YModel,
    #[arg(long, default_value = "normal", value_parser = parse_p_model)]
    pub p_model: PModel,
    #[arg(long, default_value_t = 1000)]
    pub runs: usize,
    /// Tolerance for stable weights, broadcast to every covariate.
    #[arg(long, default_value_t = 0.005)]
    pub d: f64,
    #[arg(long, value_delimiter = ',', default_value = "maic,sbw,el", value_parser = parse_method)]
    pub methods: Vec<Method>,
    /// Long CSV `run,method,scenario,error`; stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum VarianceMethod {
    V0,
    Vss,
    V2s,
    Boot,
}

impl VarianceMethod {
    /// Key in the report's SE and CI maps.
    pub fn key(&self) -> &'static str {
        match self {
            VarianceMethod::V0 => "v0",
            VarianceMethod::Vss => "vss",
            VarianceMethod::V2s => "v2s",
            VarianceMethod::Boot => "bootstrap",
        }
    }
}

impl FromStr for VarianceMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "v0" | "maic" => Ok(VarianceMethod::V0),
            "vss" => Ok(VarianceMethod::Vss),
            "v2s" | "2s" => Ok(VarianceMethod::V2s),
            "boot" | "bootstrap" => Ok(VarianceMethod::Boot),
            other => Err(Error::parse(None, format!("unknown variance method '{other}'"))),
        }
    }
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_estimand(s: &str) -> std::result::Result<EstimandSpec, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_variance(s: &str) -> std::result::Result<VarianceMethod, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_y_model(s: &str) -> std::result::Result<YModel, String> {
    match s {
        "linear" => Ok(YModel::Linear),
        "threshold" => Ok(YModel::Threshold),
        other => Err(format!("unknown outcome model '{other}'")),
    }
}

fn parse_p_model(s: &str) -> std::result::Result<PModel, String> {
    match s {
        "normal" => Ok(PModel::Normal),
        "lognormal" => Ok(PModel::Lognormal),
        other => Err(format!("unknown covariate model '{other}'")),
    }
}

/// Parse `0.1` or `0.1,0.2,...` into a tolerance vector of length `p`.
pub fn parse_tolerance(text: &str, p: usize) -> Result<DVector<f64>> {
    let values: Vec<f64> = text
        .split(',')
        .map(|v| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(None, format!("--d: '{v}' is not a number")))
        })
        .collect::<Result<_>>()?;
    match values.len() {
        1 => Ok(DVector::from_element(p, values[0])),
        k if k == p => Ok(DVector::from_vec(values)),
        k => Err(Error::parse(None, format!("--d has {k} values for {p} covariates"))),
    }
}

/// Loaded inputs shared by `weights` and `estimate`.
pub struct Inputs {
    pub target_file: TargetFile,
    pub ipd: IpdData,
    pub tolerance: Option<DVector<f64>>,
}

impl Inputs {
    pub fn load(args: &InputArgs) -> Result<Self> {
        let target_file = TargetFile::read(&args.target)?;
        let p = target_file.means.len();
        let ipd = read_ipd_path(&args.ipd, target_file.names.as_deref(), p)?;
        let tolerance = match &args.d {
            Some(_) if args.method != Method::Stable => {
                return Err(Error::parse(None, "--d applies to stable weights only"));
            }
            Some(text) => Some(parse_tolerance(text, p)?),
            None => None,
        };
        Ok(Inputs {
            target_file,
            ipd,
            tolerance,
        })
    }
}

fn solve_weights<'a>(
    problem: CalibrationProblem<'a>,
    tolerance: &Option<DVector<f64>>,
) -> Result<(CalibrationProblem<'a>, WeightSolution)> {
    let problem = match tolerance {
        Some(d) => problem.with_tolerance(d.clone())?,
        None => problem,
    };
    let sol = problem.solve()?;
    Ok((problem, sol))
}

/// Diagnostics printed by `weights`; the weights themselves go to the CSV.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub method: Method,
    pub covariates: Vec<String>,
    /// Entropy `γ`, empirical-likelihood `λ` or stable-weight multipliers, on
    /// the original covariate scale.
    pub dual_params: Vec<f64>,
    pub tolerance_d: Vec<f64>,
    pub imbalance: Vec<f64>,
    pub ess: f64,
    pub converged: bool,
    pub iterations: usize,
}

pub fn cmd_weights(args: &WeightsArgs) -> Result<Diagnostics> {
    let inputs = Inputs::load(&args.input)?;
    let target = inputs.target_file.summary();
    let problem = CalibrationProblem::new(&inputs.ipd.data, &target, args.input.method)?;
    let (_, sol) = solve_weights(problem, &inputs.tolerance)?;
    let mut out = BufWriter::new(File::create(&args.out)?);
    write_weights(&mut out, &inputs.ipd.row_ids, &sol.weights)?;
    out.flush()?;
    let summary = WeightSummary::from(&sol);
    Ok(Diagnostics {
        method: summary.method,
        covariates: inputs.ipd.covariate_names.clone(),
        dual_params: summary.dual_params,
        tolerance_d: summary.tolerance_d,
        imbalance: summary.imbalance,
        ess: summary.ess,
        converged: summary.converged,
        iterations: summary.iterations,
    })
}

/// Analysis settings for [`estimate_report`].
#[derive(Debug, Clone)]
pub struct AnalysisConfig {
    pub method: Method,
    pub tolerance: Option<DVector<f64>>,
    pub estimand: EstimandSpec,
    pub variance_methods: Vec<VarianceMethod>,
    pub boot_reps: usize,
    pub seed: u64,
}

pub fn estimate_report(ipd: &IpdData, target_file: &TargetFile, config: &AnalysisConfig) -> Result<EstimateReport> {
    let target = target_file.summary();
    let spec = config.estimand;
    if !ipd.has_outcome {
        return Err(Error::parse(Some(1), "IPD has no outcome column 'y'"));
    }
    match spec.kind {
        EstimandKind::UnanchoredDelta if target.ybar0.is_none() => return Err(Error::MissingSummary("ybar0")),
        EstimandKind::AnchoredDelta if target.ybar0.is_none() => return Err(Error::MissingSummary("ybar0")),
        EstimandKind::AnchoredDelta if target.mu02.is_none() => return Err(Error::MissingSummary("mu02")),
        _ => {}
    }
    let data = &ipd.data;
    let problem = CalibrationProblem::new(data, &target, config.method)?;
    let (problem, sol) = solve_weights(problem, &config.tolerance)?;
    let estimate = evaluate(&spec, data, &sol.weights, &target)?;

    let mut report = EstimateReport {
        estimate,
        estimand: spec,
        unadjusted_estimate: unadjusted(&spec, data, &target)?,
        weights_used: WeightSummary::from(&sol),
        se_by_method: BTreeMap::new(),
        ci95_by_method: BTreeMap::new(),
        bootstrap_failures: None,
        caveats: Vec::new(),
    };
    if !sol.converged {
        report
            .caveats
            .push("weights did not reach the balance tolerance; estimates may be unreliable".into());
    }

    let mu1 = sol.weights.dot(data.y());
    let augment = spec.kind == EstimandKind::UnanchoredDelta && target.sigma0_sq.is_some() && target.n0.is_some();
    let mut methods = config.variance_methods.clone();
    methods.sort();
    methods.dedup();
    for vm in methods {
        let variance = match vm {
            VarianceMethod::Boot => {
                let bs = BootstrapSpec::new(config.boot_reps, RngStream::new(config.seed, 0))?;
                let (v, failures) = bootstrap_variance(&problem, &spec, &bs)?;
                report.bootstrap_failures = Some(failures);
                v
            }
            _ if !spec.is_weighted_mean() => {
                report.caveats.push(format!(
                    "{} is defined for weighted means only; use boot for this estimand",
                    vm.key()
                ));
                continue;
            }
            VarianceMethod::V0 => v0(data, &sol.weights, mu1),
            VarianceMethod::Vss => match ols_fit(data) {
                Ok(fit) => v_ss(data, &sol.weights, &fit.fitted)?,
                Err(e) => {
                    report.caveats.push(format!("vss omitted: {e}"));
                    continue;
                }
            },
            VarianceMethod::V2s if config.method != Method::Entropy => {
                report.caveats.push(format!(
                    "v2s is derived for entropy (maic) weights only; omitted for {}",
                    config.method
                ));
                continue;
            }
            VarianceMethod::V2s => v_2s(data, &sol, &target, mu1)?,
        };
        let variance = if augment {
            augment_target_variance(variance, &target)?
        } else {
            variance
        };
        report.insert_se(vm.key(), variance.sqrt());
    }
    if augment {
        report
            .caveats
            .push("standard errors include the target-mean variance sigma0_sq/n0".into());
    }
    if spec.kind == EstimandKind::AnchoredDelta {
        report
            .caveats
            .push("bootstrap holds the target contrast fixed; its sampling variance is not included".into());
    }
    Ok(report)
}

pub fn cmd_estimate(args: &EstimateArgs, seed: u64) -> Result<EstimateReport> {
    let inputs = Inputs::load(&args.input)?;
    let mut estimand = args.estimand;
    if let Some(label) = args.anchor_arm {
        estimand = estimand.with_anchor(label);
    }
    let config = AnalysisConfig {
        method: args.input.method,
        tolerance: inputs.tolerance.clone(),
        estimand,
        variance_methods: args.variance.clone(),
        boot_reps: args.boot_reps,
        seed,
    };
    estimate_report(&inputs.ipd, &inputs.target_file, &config)
}

/// Run every scenario and comparison of a file, writing `<table>.csv` files
/// into `out_dir`. Returns the written paths.
pub fn cmd_simulate(args: &SimulateArgs, seed: Option<u64>) -> Result<Vec<PathBuf>> {
    let mut file = read_scenario_file(&args.config, seed)?;
    if let Some(runs) = args.runs {
        if runs == 0 {
            return Err(Error::parse(None, "--runs must be at least 1"));
        }
        for (_, c) in file.scenarios.iter_mut() {
            c.n_runs = runs;
        }
        for c in file.comparisons.iter_mut() {
            c.config.n_runs = runs;
        }
    }
    std::fs::create_dir_all(&args.out)?;

    let mut tables: Vec<(String, Vec<SimRow>)> = Vec::new();
    for (table, config) in &file.scenarios {
        let row = run_scenario(config)?;
        if let Some(w) = &row.warning {
            eprintln!("{}: {w}", config.name);
        }
        match tables.iter_mut().find(|(t, _)| t == table) {
            Some((_, rows)) => rows.push(row),
            None => tables.push((table.clone(), vec![row])),
        }
    }
    let mut written = Vec::new();
    for (table, rows) in &tables {
        let path = args.out.join(format!("{table}.csv"));
        write_sim_rows_csv(rows, BufWriter::new(File::create(&path)?))?;
        written.push(path);
    }

    let mut long: Vec<(String, Vec<_>)> = Vec::new();
    for spec in &file.comparisons {
        let d = DVector::from_element(spec.config.p(), spec.d);
        let result = run_method_comparison(&spec.config, &spec.methods, &d)?;
        if let Some(w) = &result.warning {
            eprintln!("{}: {w}", spec.config.name);
        }
        match long.iter_mut().find(|(t, _)| *t == spec.table) {
            Some((_, rows)) => rows.extend(result.rows),
            None => long.push((spec.table.clone(), result.rows)),
        }
    }
    for (table, rows) in &long {
        let path = args.out.join(format!("{table}.csv"));
        write_comparison_csv(rows, BufWriter::new(File::create(&path)?))?;
        written.push(path);
    }
    Ok(written)
}

pub fn cmd_compare(args: &CompareArgs, seed: u64) -> Result<crate::simulation::ComparisonTable> {
    let mut config = ScenarioConfig::shifted(args.n1, args.b, args.p, args.y_model, args.p_model);
    config.n_runs = args.runs;
    config.bootstrap_replicates = 0;
    config.seed = seed;
    config.validate().map_err(|e| Error::parse(None, e.to_string()))?;
    let d = DVector::from_element(args.p, args.d);
    run_method_comparison(&config, &args.methods, &d)
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Domain(e.to_string()))?;
    match out {
        Some(path) => std::fs::write(path, text + "\n")?,
        None => println!("{text}"),
    }
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .trim()
        .parse()
        .ok()
        .filter(|&t| t > 0)
        .ok_or_else(|| Error::parse(None, format!("{THREADS_ENV}='{value}' is not a positive integer")))?;
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    configure_threads()?;
    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    match &cli.command {
        Command::Weights(args) => write_json(&cmd_weights(args)?, None),
        Command::Estimate(args) => write_json(&cmd_estimate(args, seed)?, args.out.as_deref()),
        Command::Simulate(args) => {
            for path in cmd_simulate(args, cli.seed)? {
                eprintln!("wrote {}", path.display());
            }
            Ok(())
        }
        Command::Compare(args) => {
            let table = cmd_compare(args, seed)?;
            for &method in &args.methods {
                let errors = table.errors(method);
                let k = errors.len() as f64;
                let mean = errors.iter().sum::<f64>() / k;
                let sd = (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
                eprintln!("{method}: mean error {mean:.4}, sd {sd:.4}, runs {}", errors.len());
            }
            match &args.out {
                Some(path) => write_comparison_csv(&table.rows, BufWriter::new(File::create(path)?)),
                None => write_comparison_csv(&table.rows, std::io::stdout().lock()),
            }
        }
    }
}


/// Parse arguments, run the command and return the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 3 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_broadcast() {
        assert_eq!(parse_tolerance("0.1", 3).unwrap(), DVector::from_element(3, 0.1));
        assert_eq!(parse_tolerance("0.1, 0.2", 2).unwrap(), DVector::from_vec(vec![0.1, 0.2]));
        assert_eq!(parse_tolerance("0.1,0.2", 3).unwrap_err().exit_code(), 3);
        assert_eq!(parse_tolerance("x", 1).unwrap_err().exit_code(), 3);
    }

    #[test]
    fn usage_errors_exit_three() {
        assert_eq!(run(["calibra", "weights", "--method", "ipw"]), 3);
        assert_eq!(run(["calibra", "frobnicate"]), 3);
        assert_eq!(run(["calibra", "--help"]), 0);
    }

    #[test]
    fn variance_names() {
        assert_eq!("boot".parse::<VarianceMethod>().unwrap(), VarianceMethod::Boot);
        assert_eq!(VarianceMethod::Boot.key(), "bootstrap");
        assert!("vxx".parse::<VarianceMethod>().is_err());
    }
}
