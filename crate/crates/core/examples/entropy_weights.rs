//! Entropy-balancing (MAIC) weights for a simulated trial whose covariate
//! means are shifted away from a published target.
//!
//! cargo run --example entropy_weights

use calibra::calibration::{CalibrationProblem, Method, TargetSummary};
use calibra::numkit::RngStream;
use calibra::simulation::{generate_trial, PModel, ScenarioConfig, YModel};
use nalgebra::DVector;

fn main() -> calibra::Result<()> {
    let config = ScenarioConfig::shifted(300, 0.5, 3, YModel::Linear, PModel::Normal);
    let trial = generate_trial(&config, &mut RngStream::new(7, 1))?;
    let target = TargetSummary::new(DVector::from_vec(vec![0.0, 0.1, -0.1]));

    let sol = CalibrationProblem::new(&trial, &target, Method::Entropy)?.solve()?;

    println!("trial means   {:.4?}", trial.column_means().as_slice());
    println!("target means  {:.4?}", target.xbar0.as_slice());
    println!("gamma         {:.4?}", sol.dual_params.as_slice());
    println!("imbalance     {:.2e}", sol.imbalance.amax());
    println!("ESS           {:.1} of {}", sol.ess, trial.n());
    println!("converged     {} after {} iterations", sol.converged, sol.iterations);
    println!("max weight    {:.4}", sol.weights.max());

    let mu1 = sol.weights.dot(trial.y());
    println!("weighted mean outcome {mu1:.4} (unweighted {:.4})", trial.y().mean());
    Ok(())
}
