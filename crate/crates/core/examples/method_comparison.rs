//! Entropy, stable and empirical-likelihood weights on the same simulated
//! trials with a misspecified outcome model. Prints per-method error
//! summaries; pass a path to also write the long CSV for box plots.
//!
//! cargo run --release --example method_comparison -- [runs] [out.csv]

use calibra::calibration::Method;
use calibra::simulation::{run_method_comparison, write_comparison_csv, PModel, ScenarioConfig, YModel};
use nalgebra::DVector;

fn main() -> calibra::Result<()> {
    let mut args = std::env::args().skip(1);
    let runs: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(300);

    let mut config = ScenarioConfig::shifted(200, 0.5, 7, YModel::Threshold, PModel::Normal);
    config.n_runs = runs;
    let d = DVector::from_element(7, 0.005);
    let table = run_method_comparison(&config, &Method::ALL, &d)?;

    println!("{:<22} {:>9} {:>9} {:>9} {:>9}", "method", "mean", "sd", "q05", "q95");
    for method in Method::ALL {
        let mut errors = table.errors(method);
        errors.sort_by(f64::total_cmp);
        let n = errors.len() as f64;
        let mean = errors.iter().sum::<f64>() / n;
        let sd = (errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let q = |f: f64| errors[((n - 1.0) * f).round() as usize];
        println!("{method:<22} {mean:>9.4} {sd:>9.4} {:>9.4} {:>9.4}", q(0.05), q(0.95));
    }
    for (method, failed) in &table.failures {
        if *failed > 0 {
            println!("{method}: {failed} runs failed");
        }
    }
    if let Some(path) = args.next() {
        write_comparison_csv(&table.rows, std::fs::File::create(path)?)?;
    }
    Ok(())
}
