#![allow(dead_code)]

use calibra::calibration::{CovariateMatrix, TargetSummary};
use calibra::numkit::RngStream;
use nalgebra::{DMatrix, DVector};

/// Standard normal matrix.
pub fn normal_matrix(rng: &mut RngStream, n: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, p, |_, _| rng.standard_normal())
}

/// Strictly positive random weights summing to one.
pub fn positive_simplex(rng: &mut RngStream, n: usize) -> DVector<f64> {
    let raw = DVector::from_fn(n, |_, _| (0.5 * rng.standard_normal()).exp());
    let total = raw.sum();
    raw / total
}

/// Data with a target at a random interior convex combination of the rows.
pub fn interior_instance(seed: u64, n: usize, p: usize) -> (CovariateMatrix, TargetSummary, DVector<f64>) {
    let mut rng = RngStream::new(seed, 0);
    let x = normal_matrix(&mut rng, n, p);
    let y = DVector::from_fn(n, |_, _| rng.standard_normal());
    let lambda = positive_simplex(&mut rng, n);
    let xbar0 = x.tr_mul(&lambda);
    let data = CovariateMatrix::new(x, y, None).unwrap();
    (data, TargetSummary::new(xbar0), lambda)
}

/// Target a small shift away from the sample means, well inside the hull.
pub fn near_mean_instance(seed: u64, n: usize, p: usize, shift: f64) -> (CovariateMatrix, TargetSummary) {
    let mut rng = RngStream::new(seed, 0);
    let x = normal_matrix(&mut rng, n, p);
    let y = DVector::from_fn(n, |_, _| rng.standard_normal());
    let data = CovariateMatrix::new(x, y, None).unwrap();
    let xbar0 = data.column_means() + DVector::from_fn(p, |_, _| shift * rng.standard_normal());
    (data, TargetSummary::new(xbar0))
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// Row-by-row transcription of the reference two-step variance code:
/// `A11 = t(X) %*% (Xim * w)`, `A12 = t(X) %*% (w * (Y - est))`,
/// `S12 = Xim %*% solve(A11) %*% A12`, `sum(w^2 * (Y - est - S12)^2)`.
pub fn transcribed_v2s(x: &DMatrix<f64>, y: &DVector<f64>, w: &DVector<f64>, xbar0: &DVector<f64>) -> f64 {
    let (n, p) = x.shape();
    let est: f64 = (0..n).map(|i| y[i] * w[i]).sum();
    let mut a11 = DMatrix::<f64>::zeros(p, p);
    let mut a12 = DVector::<f64>::zeros(p);
    for i in 0..n {
        for r in 0..p {
            for c in 0..p {
                a11[(r, c)] += x[(i, r)] * (x[(i, c)] - xbar0[c]) * w[i];
            }
            a12[r] += x[(i, r)] * w[i] * (y[i] - est);
        }
    }
    let coef = a11.try_inverse().unwrap() * a12;
    let mut total = 0.0;
    for i in 0..n {
        let s12: f64 = (0..p).map(|j| (x[(i, j)] - xbar0[j]) * coef[j]).sum();
        total += w[i] * w[i] * (y[i] - est - s12).powi(2);
    }
    total
}

/// Largest KKT violation of stable weights for
/// `min sum (w_i - 1/n)^2, sum w = 1, w >= 0, |X'w - x̄₀| <= d`, with the
/// balance multipliers taken from `dual` and the remaining ones recovered.
/// Returns `(primal, stationarity, dual_sign)`.
pub fn stable_kkt(
    x: &DMatrix<f64>,
    xbar0: &DVector<f64>,
    d: &DVector<f64>,
    w: &DVector<f64>,
    dual: &DVector<f64>,
) -> (f64, f64, f64) {
    const ACTIVE: f64 = 1e-9;
    let (n, p) = x.shape();
    let imbalance = x.tr_mul(w) - xbar0;
    let mut primal = (w.sum() - 1.0).abs().max(-w.min());
    for j in 0..p {
        primal = primal.max(imbalance[j].abs() - d[j]);
    }

    // 2 (w - 1/n) = eta 1 + nu + (X - x̄₀) dual
    let residual = DVector::from_fn(n, |i, _| {
        let fitted: f64 = (0..p).map(|j| (x[(i, j)] - xbar0[j]) * dual[j]).sum();
        2.0 * (w[i] - 1.0 / n as f64) - fitted
    });
    let positive: Vec<usize> = (0..n).filter(|&i| w[i] > ACTIVE).collect();
    let eta = positive.iter().map(|&i| residual[i]).sum::<f64>() / positive.len() as f64;
    let stationarity = positive.iter().map(|&i| (residual[i] - eta).abs()).fold(0.0, f64::max);

    let mut dual_sign = 0.0f64;
    for i in (0..n).filter(|&i| w[i] <= ACTIVE) {
        dual_sign = dual_sign.max(-(residual[i] - eta));
    }
    for j in (0..p).filter(|&j| d[j] > 0.0) {
        let violation = if imbalance[j] >= d[j] - ACTIVE {
            dual[j]
        } else if imbalance[j] <= -d[j] + ACTIVE {
            -dual[j]
        } else {
            dual[j].abs()
        };
        dual_sign = dual_sign.max(violation);
    }
    (primal, stationarity, dual_sign)
}
