//! Stable balancing weights: loosening the balance tolerance `d` buys
//! effective sample size at the cost of residual imbalance.
//!
//! cargo run --example stable_weights

use calibra::calibration::{CalibrationProblem, Method, TargetSummary};
use calibra::numkit::RngStream;
use calibra::simulation::{generate_trial, PModel, ScenarioConfig, YModel};
use nalgebra::DVector;

fn main() -> calibra::Result<()> {
    let config = ScenarioConfig::shifted(200, 0.5, 4, YModel::Linear, PModel::Normal);
    let trial = generate_trial(&config, &mut RngStream::new(21, 1))?;
    let target = TargetSummary::new(DVector::zeros(4));

    let entropy = CalibrationProblem::new(&trial, &target, Method::Entropy)?.solve()?;
    println!("entropy            ESS {:6.1}", entropy.ess);

    println!("{:>8} {:>8} {:>12} {:>8}", "d", "ESS", "max |D|", "zeros");
    for d in [0.0, 0.005, 0.02, 0.05, 0.1, 0.2] {
        let sol = CalibrationProblem::new(&trial, &target, Method::Stable)?
            .with_tolerance(DVector::from_element(4, d))?
            .solve()?;
        let zeros = sol.weights.iter().filter(|&&w| w == 0.0).count();
        println!("{d:>8.3} {:>8.1} {:>12.2e} {zeros:>8}", sol.ess, sol.imbalance.amax());
    }
    Ok(())
}
