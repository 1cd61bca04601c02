use calibra::calibration::Method;
use calibra::numkit::RngStream;
use calibra::simulation::{generate_target, run_method_comparison, run_scenario, PModel, ScenarioConfig, SimRow, YModel};
use nalgebra::DVector;

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

fn fingerprint(row: &SimRow) -> String {
    format!("{row:?}")
}

fn quick(n1: usize, b: f64, p: usize, runs: usize) -> ScenarioConfig {
    let mut config = ScenarioConfig::shifted(n1, b, p, YModel::Linear, PModel::Normal);
    config.n_runs = runs;
    config.bootstrap_replicates = 0;
    config
}

#[test]
fn scenario_rows_do_not_depend_on_thread_count() {
    let mut config = quick(120, 0.5, 3, 24);
    config.bootstrap_replicates = 6;
    let one = in_pool(1, || run_scenario(&config).unwrap());
    let four = in_pool(4, || run_scenario(&config).unwrap());
    assert_eq!(fingerprint(&one), fingerprint(&four));
    assert_eq!(fingerprint(&one), fingerprint(&run_scenario(&config).unwrap()));

    let d = DVector::from_element(3, 0.005);
    let a = in_pool(1, || run_method_comparison(&config, &Method::ALL, &d).unwrap());
    let b = in_pool(3, || run_method_comparison(&config, &Method::ALL, &d).unwrap());
    assert_eq!(a.rows, b.rows);
}

#[test]
fn target_is_drawn_once_per_scenario() {
    let base = quick(100, 0.5, 3, 5);
    let truth = generate_target(&base, &mut RngStream::new(base.seed, 0));
    for (n1, runs) in [(100, 5), (100, 40), (300, 5)] {
        let row = run_scenario(&quick(n1, 0.5, 3, runs)).unwrap();
        assert_eq!(row.mu1_true.to_bits(), truth.mu1_true.to_bits());
    }
    let mut threshold = base.clone();
    threshold.y_model = YModel::Threshold;
    threshold.sigma_eps = 0.0;
    let t = generate_target(&threshold, &mut RngStream::new(base.seed, 0));
    assert_eq!(t.xbar0, truth.xbar0);
}

#[test]
fn empirical_se_grows_with_shift_and_dimension() {
    let se = |b: f64, p: usize| run_scenario(&quick(200, b, p, 400)).unwrap().se_empirical;
    let by_shift = [se(0.25, 3), se(0.5, 3), se(0.75, 3)];
    assert!(by_shift[0] < by_shift[1] && by_shift[1] < by_shift[2], "{by_shift:?}");
    let by_dim = [se(0.5, 3), se(0.5, 5), se(0.5, 7)];
    assert!(by_dim[0] < by_dim[1] && by_dim[1] < by_dim[2], "{by_dim:?}");
}

#[test]
fn large_trial_sandwich_coverage_is_nominal() {
    let row = run_scenario(&quick(1000, 0.5, 3, 2000)).unwrap();
    assert!((0.92..=0.96).contains(&row.coverage_2s), "coverage {}", row.coverage_2s);
    assert_eq!(row.solver_failures, 0);
}
