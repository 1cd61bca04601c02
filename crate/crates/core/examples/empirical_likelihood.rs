//! The three calibration distances on one data set. On an exactly
//! determined problem (n = p + 1) they coincide; on larger ones they differ
//! in how far the weights stray from uniform.
//!
//! cargo run --example empirical_likelihood

use calibra::calibration::{CalibrationProblem, CovariateMatrix, Method, TargetSummary};
use calibra::numkit::RngStream;
use calibra::simulation::{generate_trial, PModel, ScenarioConfig, YModel};
use nalgebra::{DMatrix, DVector};

fn main() -> calibra::Result<()> {
    let x = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 0.0, 0.0, 1.0]);
    let small = CovariateMatrix::new(x, DVector::from_vec(vec![1.0, 2.0, 3.0]), None)?;
    let target = TargetSummary::new(DVector::from_vec(vec![0.3, 0.2]));
    println!("exactly determined, n = p + 1:");
    for method in Method::ALL {
        let sol = CalibrationProblem::new(&small, &target, method)?.solve()?;
        println!("  {method:<22} {:.10?}", sol.weights.as_slice());
    }

    let config = ScenarioConfig::shifted(150, 0.5, 3, YModel::Threshold, PModel::Normal);
    let trial = generate_trial(&config, &mut RngStream::new(3, 1))?;
    let target = TargetSummary::new(DVector::zeros(3));
    println!("\nn = 150, p = 3:");
    for method in Method::ALL {
        let sol = CalibrationProblem::new(&trial, &target, method)?.solve()?;
        println!(
            "  {method:<22} ESS {:6.1}  max w {:.4}  dual {:.3?}",
            sol.ess,
            sol.weights.max(),
            sol.dual_params.as_slice()
        );
    }
    Ok(())
}
