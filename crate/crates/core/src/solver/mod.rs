//! Smooth inequality-constrained minimization for small dense problems.
//!
//! Two methods share the [`NlpProblem`] interface: an SQP method with damped
//! BFGS curvature and Goldfarb-Idnani QP subproblems (the primary method), and
//! an augmented Lagrangian method with a projected quasi-Newton inner loop used
//! for cross-checking.

mod auglag;
pub mod qp;
mod sqp;

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `min f(x)` subject to `g(x) <= 0` and `lower <= x <= upper`.
pub trait NlpProblem {
    fn num_variables(&self) -> usize;

    fn num_constraints(&self) -> usize;

    /// Objective value; fills `g` with the constraint values.
    fn evaluate(&self, x: &[f64], g: &mut [f64]) -> f64;

    fn lower_bounds(&self) -> Vec<f64> {
        vec![f64::NEG_INFINITY; self.num_variables()]
    }

    fn upper_bounds(&self) -> Vec<f64> {
        vec![f64::INFINITY; self.num_variables()]
    }

    /// Typical magnitude of a unit change in each variable. The solvers work in
    /// `x / scale` so that steps in mixed units (mm and rad) are comparable.
    fn variable_scales(&self) -> Vec<f64> {
        vec![1.0; self.num_variables()]
    }

    /// Objective gradient and constraint Jacobian (rows = constraints).
    /// Central differences with step `fd_step * max(1, |x_i|)` unless overridden.
    fn derivatives(&self, x: &[f64], fd_step: f64, grad: &mut [f64], jac: &mut DMatrix<f64>) {
        central_differences(self, x, fd_step, grad, jac);
    }
}

/// `problem` seen through the substitution `x = scale * y`.
struct Scaled<'a, P: ?Sized> {
    problem: &'a P,
    scale: Vec<f64>,
}

impl<P: NlpProblem + ?Sized> Scaled<'_, P> {
    fn to_x(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.scale).map(|(a, s)| a * s).collect()
    }

    fn to_y(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.scale).map(|(a, s)| a / s).collect()
    }
}

impl<P: NlpProblem + ?Sized> NlpProblem for Scaled<'_, P> {
    fn num_variables(&self) -> usize {
        self.problem.num_variables()
    }

    fn num_constraints(&self) -> usize {
        self.problem.num_constraints()
    }

    fn evaluate(&self, y: &[f64], g: &mut [f64]) -> f64 {
        self.problem.evaluate(&self.to_x(y), g)
    }

    fn lower_bounds(&self) -> Vec<f64> {
        self.to_y(&self.problem.lower_bounds())
    }

    fn upper_bounds(&self) -> Vec<f64> {
        self.to_y(&self.problem.upper_bounds())
    }

    fn derivatives(&self, y: &[f64], fd_step: f64, grad: &mut [f64], jac: &mut DMatrix<f64>) {
        self.problem.derivatives(&self.to_x(y), fd_step, grad, jac);
        for (i, &s) in self.scale.iter().enumerate() {
            grad[i] *= s;
            jac.column_mut(i).scale_mut(s);
        }
    }
}

/// Central-difference gradient and Jacobian of `problem` at `x`.
pub fn central_differences<P: NlpProblem + ?Sized>(
    problem: &P,
    x: &[f64],
    fd_step: f64,
    grad: &mut [f64],
    jac: &mut DMatrix<f64>,
) {
    let m = problem.num_constraints();
    let mut xp = x.to_vec();
    let mut gp = vec![0.0; m];
    let mut gm = vec![0.0; m];
    for i in 0..x.len() {
        let h = fd_step * x[i].abs().max(1.0);
        xp[i] = x[i] + h;
        let fp = problem.evaluate(&xp, &mut gp);
        xp[i] = x[i] - h;
        let fm = problem.evaluate(&xp, &mut gm);
        xp[i] = x[i];
        grad[i] = (fp - fm) / (2.0 * h);
        for j in 0..m {
            jac[(j, i)] = (gp[j] - gm[j]) / (2.0 * h);
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    #[default]
    Sqp,
    AugmentedLagrangian,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub method: Method,
    pub max_iterations: usize,
    pub kkt_tolerance: f64,
    /// Largest admissible `max(g)`; radians for joint-limit constraints.
    pub constraint_tolerance: f64,
    pub step_tolerance: f64,
    pub fd_step: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            method: Method::Sqp,
            max_iterations: 100,
            kkt_tolerance: 1e-6,
            constraint_tolerance: 1e-6,
            step_tolerance: 1e-12,
            fd_step: 1e-6,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("kkt_tolerance", self.kkt_tolerance),
            ("constraint_tolerance", self.constraint_tolerance),
            ("step_tolerance", self.step_tolerance),
            ("fd_step", self.fd_step),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(Error::InvalidOptions(format!("{name} must be positive, got {value}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    IterationLimit,
    Stalled,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub status: Status,
    pub method: Method,
    pub x: Vec<f64>,
    pub objective: f64,
    pub max_violation: f64,
    pub kkt_residual: f64,
    pub multipliers: Vec<f64>,
    pub iterations: usize,
    /// One entry per iterate, starting with the initial point.
    pub iterates: Vec<Vec<f64>>,
    pub objective_trajectory: Vec<f64>,
    pub violation_trajectory: Vec<f64>,
    /// Merit before and after each accepted step, at that step's penalty (SQP only).
    pub merit_steps: Vec<(f64, f64)>,
    pub wall_time_s: f64,
}

impl SolveReport {
    /// Same report with the wall-clock time zeroed, for reproducibility checks.
    pub fn without_timing(&self) -> SolveReport {
        SolveReport { wall_time_s: 0.0, ..self.clone() }
    }
}

pub(crate) struct Trace {
    iterates: Vec<Vec<f64>>,
    objective: Vec<f64>,
    violation: Vec<f64>,
    merit_steps: Vec<(f64, f64)>,
}

impl Trace {
    fn new() -> Self {
        Trace { iterates: Vec::new(), objective: Vec::new(), violation: Vec::new(), merit_steps: Vec::new() }
    }

    fn record(&mut self, x: &[f64], f: f64, g: &[f64]) {
        self.iterates.push(x.to_vec());
        self.objective.push(f);
        self.violation.push(max_violation(g));
    }
}

pub(crate) struct Outcome {
    status: Status,
    x: Vec<f64>,
    multipliers: Vec<f64>,
    kkt: f64,
    trace: Trace,
}

/// Largest constraint value clipped at zero.
pub fn max_violation(g: &[f64]) -> f64 {
    g.iter().fold(0.0, |acc, &v| acc.max(v))
}

pub(crate) fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lower[i], upper[i]);
        // snap rounding residue so active bounds are recognised exactly
        if lower[i].is_finite() && (x[i] - lower[i]).abs() <= 1e-12 * lower[i].abs().max(1.0) {
            x[i] = lower[i];
        } else if upper[i].is_finite() && (x[i] - upper[i]).abs() <= 1e-12 * upper[i].abs().max(1.0) {
            x[i] = upper[i];
        }
    }
}

/// KKT residual from precomputed derivatives: infinity norm of the
/// bound-projected Lagrangian gradient plus the largest `|lambda_i g_i|`.
pub fn kkt_residual(
    x: &[f64],
    lower: &[f64],
    upper: &[f64],
    grad: &[f64],
    jac: &DMatrix<f64>,
    g: &[f64],
    multipliers: &[f64],
) -> f64 {
    let n = x.len();
    let mut stationarity: f64 = 0.0;
    for i in 0..n {
        let mut gl = grad[i];
        for (j, &lam) in multipliers.iter().enumerate() {
            if lam != 0.0 {
                gl += lam * jac[(j, i)];
            }
        }
        let at_lower = x[i] <= lower[i];
        let at_upper = x[i] >= upper[i];
        let projected = if at_lower && at_upper {
            0.0
        } else if at_lower {
            gl.min(0.0)
        } else if at_upper {
            gl.max(0.0)
        } else {
            gl
        };
        stationarity = stationarity.max(projected.abs());
    }
    let complementarity = multipliers.iter().zip(g).fold(0.0f64, |acc, (&lam, &gi)| acc.max((lam * gi).abs()));
    stationarity + complementarity
}

/// KKT residual of `problem` at `x` for nonnegative constraint multipliers.
pub fn stationarity_measure<P: NlpProblem + ?Sized>(
    problem: &P,
    x: &[f64],
    multipliers: &[f64],
    fd_step: f64,
) -> Result<f64> {
    let (n, m) = (problem.num_variables(), problem.num_constraints());
    if x.len() != n || multipliers.len() != m {
        return Err(Error::InvalidOptions("dimension mismatch".into()));
    }
    if multipliers.iter().any(|&l| !(l >= 0.0)) {
        return Err(Error::InvalidOptions("multipliers must be nonnegative".into()));
    }
    let mut g = vec![0.0; m];
    problem.evaluate(x, &mut g);
    let mut grad = vec![0.0; n];
    let mut jac = DMatrix::zeros(m, n);
    problem.derivatives(x, fd_step, &mut grad, &mut jac);
    Ok(kkt_residual(x, &problem.lower_bounds(), &problem.upper_bounds(), &grad, &jac, &g, multipliers))
}

/// Minimizes `problem` from `x0` with the method selected in `opts`.
///
/// The reported KKT residual is measured in the scaled variables.
pub fn minimize<P: NlpProblem + ?Sized>(problem: &P, x0: &[f64], opts: &SolverOptions) -> Result<SolveReport> {
    opts.validate()?;
    let n = problem.num_variables();
    if x0.len() != n {
        return Err(Error::InvalidOptions(format!("x0 has {} entries, expected {n}", x0.len())));
    }
    let (lower, upper) = (problem.lower_bounds(), problem.upper_bounds());
    if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
        return Err(Error::InvalidOptions("lower bound exceeds upper bound".into()));
    }
    let scale = problem.variable_scales();
    if scale.len() != n || scale.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidOptions("variable scales must be positive".into()));
    }
    let start = Instant::now();
    let scaled = Scaled { problem, scale };
    let y0 = scaled.to_y(x0);
    let mut outcome = match opts.method {
        Method::Sqp => sqp::run(&scaled, &y0, opts),
        Method::AugmentedLagrangian => auglag::run(&scaled, &y0, opts),
    };
    outcome.x = scaled.to_x(&outcome.x);
    let mut trace = outcome.trace;
    for it in &mut trace.iterates {
        *it = scaled.to_x(it);
    }
    let mut g = vec![0.0; problem.num_constraints()];
    let objective = problem.evaluate(&outcome.x, &mut g);
    Ok(SolveReport {
        status: outcome.status,
        method: opts.method,
        objective,
        max_violation: max_violation(&g),
        kkt_residual: outcome.kkt,
        multipliers: outcome.multipliers,
        iterations: trace.iterates.len() - 1,
        x: outcome.x,
        iterates: trace.iterates,
        objective_trajectory: trace.objective,
        violation_trajectory: trace.violation,
        merit_steps: trace.merit_steps,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}


#[cfg(test)]
mod tests {
    use super::test_problems::*;
    use super::*;

    fn both_methods() -> [SolverOptions; 2] {
        [SolverOptions::default(), SolverOptions { method: Method::AugmentedLagrangian, ..SolverOptions::default() }]
    }

    #[test]
    fn unconstrained_quadratic() {
        let p = Quadratic { center: vec![1.0], rows: vec![], lower: None, upper: None };
        for opts in both_methods() {
            let r = minimize(&p, &[5.0], &opts).unwrap();
            assert_eq!(r.status, Status::Optimal, "{:?}", opts.method);
            assert!((r.x[0] - 1.0).abs() < 1e-8, "{:?}: {}", opts.method, r.x[0]);
        }
    }

    #[test]
    fn bound_via_constraint() {
        // min x^2 s.t. x >= 1, written as 1 - x <= 0
        let p = Quadratic { center: vec![0.0], rows: vec![(vec![-1.0], -1.0)], lower: None, upper: None };
        for opts in both_methods() {
            let r = minimize(&p, &[5.0], &opts).unwrap();
            assert_eq!(r.status, Status::Optimal);
            assert!((r.x[0] - 1.0).abs() < 1e-7, "{:?}: {}", opts.method, r.x[0]);
            assert!((r.multipliers[0] - 2.0).abs() < 1e-5, "{:?}: {:?}", opts.method, r.multipliers);
        }
    }

    #[test]
    fn simple_bounds() {
        let p = Quadratic {
            center: vec![3.0, -2.0],
            rows: vec![],
            lower: Some(vec![-1.0, -1.0]),
            upper: Some(vec![1.0, 1.0]),
        };
        for opts in both_methods() {
            let r = minimize(&p, &[0.0, 0.0], &opts).unwrap();
            assert_eq!(r.status, Status::Optimal);
            assert!((r.x[0] - 1.0).abs() < 1e-9 && (r.x[1] + 1.0).abs() < 1e-9, "{:?}", r.x);
        }
    }

    #[test]
    fn nonlinear_constraint() {
        for opts in both_methods() {
            let r = minimize(&DiscRosenbrock, &[-1.0, 0.5], &SolverOptions { max_iterations: 200, ..opts }).unwrap();
            assert_eq!(r.status, Status::Optimal, "{:?}", opts.method);
            assert!((r.x[0] - 0.9072).abs() < 1e-3 && (r.x[1] - 0.8228).abs() < 1e-3, "{:?}", r.x);
            assert!(r.max_violation <= 1e-6);
        }
    }

    #[test]
    fn stationarity_examples() {
        let p = Quadratic { center: vec![1.0, -1.0], rows: vec![], lower: None, upper: None };
        assert!(stationarity_measure(&p, &[1.0, -1.0], &[], 1e-6).unwrap() < 1e-10);
        assert!(stationarity_measure(&p, &[2.0, 0.0], &[], 1e-6).unwrap() > 0.1);

        let p = Quadratic { center: vec![0.0], rows: vec![(vec![-1.0], -1.0)], lower: None, upper: None };
        assert!(stationarity_measure(&p, &[1.0], &[2.0], 1e-6).unwrap() < 1e-8);
        assert!(stationarity_measure(&p, &[1.0], &[0.0], 1e-6).unwrap() > 1.0);
        assert!(stationarity_measure(&p, &[1.0], &[-1.0], 1e-6).is_err());
    }

    #[test]
    fn trajectories_and_merit() {
        let opts = SolverOptions { max_iterations: 200, ..SolverOptions::default() };
        let r = minimize(&DiscRosenbrock, &[-1.0, 0.5], &opts).unwrap();
        assert_eq!(r.objective_trajectory.len(), r.iterations + 1);
        assert_eq!(r.violation_trajectory.len(), r.iterations + 1);
        assert_eq!(r.iterates.len(), r.iterations + 1);
        for &(before, after) in &r.merit_steps {
            assert!(after <= before, "{after} > {before}");
        }
        let again = minimize(&DiscRosenbrock, &[-1.0, 0.5], &opts).unwrap();
        assert_eq!(r.without_timing(), again.without_timing());
    }

    #[test]
    fn infeasible_problem_is_not_optimal() {
        // x <= -1 and x >= 1
        let p = Quadratic {
            center: vec![0.0],
            rows: vec![(vec![1.0], -1.0), (vec![-1.0], -1.0)],
            lower: None,
            upper: None,
        };
        for opts in both_methods() {
            let r = minimize(&p, &[0.3], &opts).unwrap();
            assert_ne!(r.status, Status::Optimal);
        }
    }

    #[test]
    fn rejects_bad_options() {
        let p = Quadratic { center: vec![0.0], rows: vec![], lower: None, upper: None };
        let bad = SolverOptions { kkt_tolerance: 0.0, ..SolverOptions::default() };
        assert!(minimize(&p, &[0.0], &bad).is_err());
        assert!(minimize(&p, &[0.0, 1.0], &SolverOptions::default()).is_err());
    }
}
