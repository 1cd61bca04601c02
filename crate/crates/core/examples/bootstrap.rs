//! Nonparametric bootstrap with weights re-solved on every resample. The
//! result is reproducible from the seed regardless of thread count.
//!
//! cargo run --example bootstrap

use calibra::calibration::{CalibrationProblem, Method};
use calibra::estimators::{EstimandKind, EstimandSpec};
use calibra::numkit::{OptimControl, RngStream};
use calibra::simulation::{generate_target, generate_trial, PModel, ScenarioConfig, YModel};
use calibra::variance::{bootstrap_variance, v_2s, BootstrapSpec};

fn main() -> calibra::Result<()> {
    let config = ScenarioConfig::shifted(200, 0.75, 3, YModel::Threshold, PModel::Normal);
    let truth = generate_target(&config, &mut RngStream::new(config.seed, 0));
    let target = truth.target();
    let trial = generate_trial(&config, &mut RngStream::new(config.seed, 1))?;

    let problem = CalibrationProblem::new(&trial, &target, Method::Entropy)?;
    let sol = problem.solve()?;
    let mu1 = sol.weights.dot(trial.y());
    println!("estimate {mu1:.4}   SE v2s {:.4}", v_2s(&trial, &sol, &target, mu1)?.sqrt());

    let relaxed = problem.clone().with_control(OptimControl::relaxed());
    let estimand = EstimandSpec::new(EstimandKind::Mu1Weighted);
    for reps in [50, 200] {
        let spec = BootstrapSpec::new(reps, RngStream::new(11, 0))?;
        let (var, failures) = bootstrap_variance(&relaxed, &estimand, &spec)?;
        println!("{reps:>4} replicates: SE {:.4}, {failures} failed", var.sqrt());
    }
    Ok(())
}
