//! Standard errors of the weighted mean: the naive sandwich, the
//! survey-sampling form with a regression fit, the two-step sandwich that
//! accounts for estimating the weights, and the target-variance augmentation.
//!
//! cargo run --example variance_estimates

use calibra::calibration::{CalibrationProblem, Method, TargetSummary};
use calibra::estimators::ols_fit;
use calibra::numkit::RngStream;
use calibra::simulation::{generate_target, generate_trial, PModel, ScenarioConfig, YModel};
use calibra::variance::{augment_target_variance, sandwich_work, v0, v_ss};

fn main() -> calibra::Result<()> {
    let config = ScenarioConfig::shifted(500, 0.5, 3, YModel::Linear, PModel::Normal);
    let truth = generate_target(&config, &mut RngStream::new(config.seed, 0));
    let trial = generate_trial(&config, &mut RngStream::new(config.seed, 1))?;
    let target: TargetSummary = truth.target().with_n0(config.n0).with_sigma0_sq(0.52);

    let sol = CalibrationProblem::new(&trial, &target, Method::Entropy)?.solve()?;
    let mu1 = sol.weights.dot(trial.y());
    let work = sandwich_work(&trial, &sol, &target, mu1)?;
    let fit = ols_fit(&trial)?;

    println!("estimate {mu1:.4}, truth {:.4}", truth.mu1_true);
    println!("SE v0   {:.4}", v0(&trial, &sol.weights, mu1).sqrt());
    println!("SE vss  {:.4}", v_ss(&trial, &sol.weights, &fit.fitted)?.sqrt());
    println!("SE v2s  {:.4}", work.variance().sqrt());
    println!("balance equations sum to {:.1e}", work.s1.row_sum().amax());
    println!(
        "v2s plus sigma0^2/n0: SE {:.4}",
        augment_target_variance(work.variance(), &target)?.sqrt()
    );
    Ok(())
}
