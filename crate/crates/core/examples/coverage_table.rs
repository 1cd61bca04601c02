//! Coverage study in the layout of the published tables: bias, CI coverage
//! and standard errors over repeated trials against a fixed target.
//!
//! cargo run --release --example coverage_table -- [runs] [bootstrap reps]

use calibra::simulation::{run_scenario, write_sim_rows_csv, PModel, ScenarioConfig, YModel};

fn main() -> calibra::Result<()> {
    let mut args = std::env::args().skip(1);
    let runs: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(200);
    let reps: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(0);

    let mut rows = Vec::new();
    for (y_model, p_model) in [
        (YModel::Linear, PModel::Normal),
        (YModel::Threshold, PModel::Normal),
        (YModel::Linear, PModel::Lognormal),
    ] {
        for (n1, b, p) in [(200, 0.5, 3), (500, 0.5, 3), (500, 0.5, 7)] {
            let mut config = ScenarioConfig::shifted(n1, b, p, y_model, p_model);
            config.n_runs = runs;
            config.bootstrap_replicates = reps;
            let row = run_scenario(&config)?;
            if let Some(w) = &row.warning {
                eprintln!("{}: {w}", config.name);
            }
            rows.push(row);
        }
    }
    write_sim_rows_csv(&rows, std::io::stdout().lock())
}
