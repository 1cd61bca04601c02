//! Dense strictly convex quadratic programs
//!
//! ```text
//!     minimize     1/2 x' G x + c' x
//!     subject to   E x  = e                 (equality)
//!                  x_i >= 0,  i in S        (non-negativity)
//!                  |M x - m| <= h           (box around residuals)
//! ```
//!
//! solved with the Goldfarb-Idnani dual active-set method: start from the
//! unconstrained minimizer, repeatedly pick the most violated constraint and
//! move along a primal-dual path that keeps every active multiplier
//! non-negative, dropping constraints whose multipliers would turn negative.
//! The factorization `J' N = [R; 0]` of the active normals is maintained with
//! Givens rotations, so each active-set change costs O(n^2).

use crate::error::{ConstraintFamily, Error, Result};
use nalgebra::{DMatrix, DVector};

/// Scaled violation below which a constraint counts as satisfied.
const FEASIBILITY_TOL: f64 = 1e-12;
/// Relative size of the projected normal below which it is treated as
/// linearly dependent on the active set.
const DEPENDENCE_TOL: f64 = 1e-12;

/// Two-sided bounds `center - halfwidth <= matrix * x <= center + halfwidth`.
#[derive(Debug, Clone)]
pub struct BoxConstraints {
    pub matrix: DMatrix<f64>,
    pub center: DVector<f64>,
    pub halfwidth: DVector<f64>,
}

#[derive(Debug, Clone)]
pub struct QpProblem {
    /// Symmetric positive definite `G`.
    pub quadratic: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub equality: Option<(DMatrix<f64>, DVector<f64>)>,
    pub nonnegative: Vec<usize>,
    pub boxes: Option<BoxConstraints>,
}

/// Minimizer with its Lagrange multipliers, following the sign convention
/// `G x + c = E' eq + sum_i nn_i e_i + M' (lower - upper)`.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub x: DVector<f64>,
    pub objective: f64,
    pub equality_multipliers: DVector<f64>,
    /// One entry per index in `QpProblem::nonnegative`.
    pub nonnegative_multipliers: DVector<f64>,
    pub box_lower_multipliers: DVector<f64>,
    pub box_upper_multipliers: DVector<f64>,
    /// Number of active-set changes.
    pub iterations: usize,
}

impl QpSolution {
    /// Net multiplier on each box row, `lower - upper`.
    pub fn box_multipliers(&self) -> DVector<f64> {
        &self.box_lower_multipliers - &self.box_upper_multipliers
    }
}

#[derive(Debug)]
enum Normal {
    Dense(DVector<f64>),
    Unit(usize),
}

#[derive(Debug)]
struct Constraint {
    normal: Normal,
    rhs: f64,
    norm: f64,
    equality: bool,
    family: ConstraintFamily,
    index: usize,
}

impl Constraint {
    fn value(&self, x: &DVector<f64>) -> f64 {
        match &self.normal {
            Normal::Dense(a) => a.dot(x),
            Normal::Unit(i) => x[*i],
        }
    }

    /// `sign * J' a`, with `J` stored column-major.
    fn project(&self, j: &DMatrix<f64>, sign: f64) -> DVector<f64> {
        match &self.normal {
            Normal::Dense(a) => sign * j.tr_mul(a),
            Normal::Unit(i) => sign * j.row(*i).transpose(),
        }
    }
}

/// Working state of the dual active-set iteration.
struct ActiveSet {
    n: usize,
    j: DMatrix<f64>,
    r: DMatrix<f64>,
    members: Vec<usize>,
    signs: Vec<f64>,
    multipliers: Vec<f64>,
    flags: Vec<bool>,
}

impl ActiveSet {
    fn len(&self) -> usize {
        self.members.len()
    }

    /// Solve `R v = d[..q]` by back substitution.
    fn dual_direction(&self, d: &DVector<f64>) -> Vec<f64> {
        let q = self.len();
        let mut v = vec![0.0; q];
        for i in (0..q).rev() {
            let mut acc = d[i];
            for k in i + 1..q {
                acc -= self.r[(i, k)] * v[k];
            }
            v[i] = acc / self.r[(i, i)];
        }
        v
    }

    fn rotate_columns(&mut self, a: usize, b: usize, c: f64, s: f64) {
        let n = self.n;
        let data = self.j.as_mut_slice();
        let (head, tail) = data.split_at_mut(b * n);
        let col_a = &mut head[a * n..a * n + n];
        let col_b = &mut tail[..n];
        for (ja, jb) in col_a.iter_mut().zip(col_b.iter_mut()) {
            let (va, vb) = (*ja, *jb);
            *ja = c * va + s * vb;
            *jb = -s * va + c * vb;
        }
    }

    fn add(&mut self, constraint: usize, sign: f64, multiplier: f64, mut d: DVector<f64>) {
        let q = self.len();
        for idx in (q + 1..self.n).rev() {
            let (a, b) = (d[idx - 1], d[idx]);
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            d[idx - 1] = h;
            d[idx] = 0.0;
            self.rotate_columns(idx - 1, idx, c, s);
        }
        for i in 0..=q {
            self.r[(i, q)] = d[i];
        }
        self.members.push(constraint);
        self.signs.push(sign);
        self.multipliers.push(multiplier);
        self.flags[constraint] = true;
    }

    fn drop(&mut self, k: usize) {
        let q = self.len();
        self.flags[self.members[k]] = false;
        self.members.remove(k);
        self.signs.remove(k);
        self.multipliers.remove(k);
        for col in k..q - 1 {
            for row in 0..=(col + 1) {
                self.r[(row, col)] = self.r[(row, col + 1)];
            }
        }
        for row in 0..q {
            self.r[(row, q - 1)] = 0.0;
        }
        // Columns k.. are now upper Hessenberg; restore triangular form.
        for i in k..q - 1 {
            let (a, b) = (self.r[(i, i)], self.r[(i + 1, i)]);
            if b == 0.0 {
                continue;
            }
            let h = a.hypot(b);
            let (c, s) = (a / h, b / h);
            for col in i..q - 1 {
                let (ri, rn) = (self.r[(i, col)], self.r[(i + 1, col)]);
                self.r[(i, col)] = c * ri + s * rn;
                self.r[(i + 1, col)] = -s * ri + c * rn;
            }
            self.rotate_columns(i, i + 1, c, s);
        }
        for col in 0..q {
            self.r[(q - 1, col)] = 0.0;
        }
    }
}

fn build_constraints(problem: &QpProblem, n: usize) -> Result<Vec<Constraint>> {
    let mut constraints = Vec::new();
    if let Some((mat, rhs)) = &problem.equality {
        if mat.ncols() != n || mat.nrows() != rhs.len() {
            return Err(Error::Dimension("equality system does not match problem size".into()));
        }
        for (i, row) in mat.row_iter().enumerate() {
            let a = row.transpose();
            constraints.push(Constraint {
                norm: a.norm(),
                normal: Normal::Dense(a),
                rhs: rhs[i],
                equality: true,
                family: ConstraintFamily::Equality,
                index: i,
            });
        }
    }
    for (k, &i) in problem.nonnegative.iter().enumerate() {
        if i >= n {
            return Err(Error::Dimension(format!("non-negativity index {i} out of range")));
        }
        constraints.push(Constraint {
            normal: Normal::Unit(i),
            rhs: 0.0,
            norm: 1.0,
            equality: false,
            family: ConstraintFamily::NonNegativity,
            index: k,
        });
    }
    if let Some(b) = &problem.boxes {
        if b.matrix.ncols() != n
            || b.matrix.nrows() != b.center.len()
            || b.center.len() != b.halfwidth.len()
        {
            return Err(Error::Dimension("box constraints do not match problem size".into()));
        }
        if b.halfwidth.iter().any(|h| !(*h >= 0.0)) {
            return Err(Error::Domain("box halfwidths must be non-negative".into()));
        }
        for (i, row) in b.matrix.row_iter().enumerate() {
            let a = row.transpose();
            let norm = a.norm();
            constraints.push(Constraint {
                normal: Normal::Dense(a.clone()),
                rhs: b.center[i] - b.halfwidth[i],
                norm,
                equality: false,
                family: ConstraintFamily::Box,
                index: 2 * i,
            });
            constraints.push(Constraint {
                normal: Normal::Dense(-a),
                rhs: -(b.center[i] + b.halfwidth[i]),
                norm,
                equality: false,
                family: ConstraintFamily::Box,
                index: 2 * i + 1,
            });
        }
    }
    for c in &constraints {
        if !(c.norm > 0.0) || !c.rhs.is_finite() {
            return Err(Error::Domain(format!(
                "{} constraint {} has a zero or non-finite normal",
                c.family, c.index
            )));
        }
    }
    Ok(constraints)
}

/// Pick the next constraint to enforce: violated equalities first, then the
/// inequality with the largest scaled violation.
fn most_violated(constraints: &[Constraint], flags: &[bool], x: &DVector<f64>) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for pass_equality in [true, false] {
        for (idx, c) in constraints.iter().enumerate() {
            if flags[idx] || c.equality != pass_equality {
                continue;
            }
            let s = (c.value(x) - c.rhs) / c.norm;
            let violation = if c.equality { s.abs() } else { -s };
            let tol = FEASIBILITY_TOL * (1.0 + c.rhs.abs() / c.norm);
            if violation > tol && best.is_none_or(|(_, v)| violation > v) {
                best = Some((idx, violation));
            }
        }
        if best.is_some() {
            break;
        }
    }
    best.map(|(idx, _)| idx)
}

/// Solve a dense strictly convex QP with equality, non-negativity and box
/// constraints.
pub fn solve_qp(problem: &QpProblem) -> Result<QpSolution> {
    let n = problem.linear.len();
    if problem.quadratic.nrows() != n || problem.quadratic.ncols() != n {
        return Err(Error::Dimension(format!(
            "quadratic term is {}x{}, linear term has length {n}",
            problem.quadratic.nrows(),
            problem.quadratic.ncols()
        )));
    }
    let constraints = build_constraints(problem, n)?;
    let m = constraints.len();

    let chol = problem
        .quadratic
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Domain("quadratic term is not positive definite".into()))?;
    let mut x = -chol.solve(&problem.linear);
    let l_inv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or_else(|| Error::Domain("singular Cholesky factor".into()))?;

    let mut set = ActiveSet {
        n,
        j: l_inv.transpose(),
        r: DMatrix::zeros(n, n),
        members: Vec::new(),
        signs: Vec::new(),
        multipliers: Vec::new(),
        flags: vec![false; m],
    };

    let max_changes = 20 * (n + m) + 100;
    let mut changes = 0usize;

    while let Some(p) = most_violated(&constraints, &set.flags, &x) {
        let cp = &constraints[p];
        let raw_slack = cp.value(&x) - cp.rhs;
        // Equalities violated from above are entered with flipped sign.
        let sign = if cp.equality && raw_slack > 0.0 { -1.0 } else { 1.0 };
        let mut slack = sign * raw_slack;
        let mut u_plus = 0.0;

        loop {
            changes += 1;
            if changes > max_changes {
                return Err(Error::Domain(
                    "quadratic program solver exceeded its active-set change budget".into(),
                ));
            }
            let q = set.len();
            let d = cp.project(&set.j, sign);
            let d_tail = d.rows(q, n - q);
            let z = set.j.columns(q, n - q) * d_tail;
            let tail_sq = d_tail.norm_squared();
            let dual_dir = set.dual_direction(&d);

            let mut t1 = f64::INFINITY;
            let mut drop_at = None;
            for (i, &rv) in dual_dir.iter().enumerate() {
                if rv > 0.0 && !constraints[set.members[i]].equality {
                    let t = set.multipliers[i] / rv;
                    if t < t1 {
                        t1 = t;
                        drop_at = Some(i);
                    }
                }
            }
            let dependent = tail_sq <= (DEPENDENCE_TOL * DEPENDENCE_TOL) * d.norm_squared();
            // a' z = |d_tail|^2 for the entering normal a.
            let t2 = if dependent {
                f64::INFINITY
            } else {
                (-slack / tail_sq).max(0.0)
            };

            if t1.is_infinite() && t2.is_infinite() {
                return Err(Error::QpInfeasible {
                    family: cp.family,
                    index: cp.index,
                });
            }

            if t2.is_infinite() {
                for (u, rv) in set.multipliers.iter_mut().zip(&dual_dir) {
                    *u -= t1 * rv;
                }
                u_plus += t1;
                set.drop(drop_at.expect("finite t1 has a blocking constraint"));
                continue;
            }

            let t = t1.min(t2);
            x.axpy(t, &z, 1.0);
            for (u, rv) in set.multipliers.iter_mut().zip(&dual_dir) {
                *u -= t * rv;
            }
            u_plus += t;

            if t2 <= t1 {
                set.add(p, sign, u_plus, d);
                break;
            }
            set.drop(drop_at.expect("partial step has a blocking constraint"));
            slack = sign * (cp.value(&x) - cp.rhs);
        }
    }

    let n_eq = problem.equality.as_ref().map_or(0, |(_, r)| r.len());
    let n_box = problem.boxes.as_ref().map_or(0, |b| b.center.len());
    let mut eq_mult = DVector::zeros(n_eq);
    let mut nn_mult = DVector::zeros(problem.nonnegative.len());
    let mut lo_mult = DVector::zeros(n_box);
    let mut hi_mult = DVector::zeros(n_box);
    for ((&member, &sign), &u) in set.members.iter().zip(&set.signs).zip(&set.multipliers) {
        let c = &constraints[member];
        match c.family {
            ConstraintFamily::Equality => eq_mult[c.index] = sign * u,
            ConstraintFamily::NonNegativity => nn_mult[c.index] = u,
            ConstraintFamily::Box if c.index % 2 == 0 => lo_mult[c.index / 2] = u,
            ConstraintFamily::Box => hi_mult[c.index / 2] = u,
        }
    }

    let objective = 0.5 * x.dot(&(&problem.quadratic * &x)) + problem.linear.dot(&x);
    Ok(QpSolution {
        x,
        objective,
        equality_multipliers: eq_mult,
        nonnegative_multipliers: nn_mult,
        box_lower_multipliers: lo_mult,
        box_upper_multipliers: hi_mult,
        iterations: changes,
    })
}
