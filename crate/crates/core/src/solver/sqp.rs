//! SQP with damped BFGS curvature and an l1 merit line search.
//!
//! Each iteration solves the QP `min 1/2 d^T B d + grad^T d` subject to the
//! linearized constraints `g + J d <= 0` and the variable bounds. When the
//! linearization is inconsistent, an elastic QP with one slack `t >= 0` on all
//! constraint rows is solved instead.

use nalgebra::{DMatrix, DVector};

use super::qp::{solve_qp, QpError};
use super::{kkt_residual, max_violation, project, NlpProblem, Outcome, SolverOptions, Status, Trace};

const ARMIJO: f64 = 1e-4;
const MAX_BACKTRACKS: usize = 60;

struct Point {
    x: Vec<f64>,
    f: f64,
    g: Vec<f64>,
    grad: Vec<f64>,
    jac: DMatrix<f64>,
}

impl Point {
    fn new<P: NlpProblem + ?Sized>(problem: &P, x: Vec<f64>, fd_step: f64) -> Point {
        let (n, m) = (x.len(), problem.num_constraints());
        let mut g = vec![0.0; m];
        let f = problem.evaluate(&x, &mut g);
        let mut grad = vec![0.0; n];
        let mut jac = DMatrix::zeros(m, n);
        problem.derivatives(&x, fd_step, &mut grad, &mut jac);
        Point { x, f, g, grad, jac }
    }
}

fn penalty_sum(g: &[f64]) -> f64 {
    g.iter().map(|&v| v.max(0.0)).sum()
}

/// Search direction and constraint multipliers at `pt`.
fn subproblem(
    pt: &Point,
    hess: &DMatrix<f64>,
    lower: &[f64],
    upper: &[f64],
    penalty: f64,
) -> Option<(DVector<f64>, Vec<f64>)> {
    let n = pt.x.len();
    let m = pt.g.len();
    let bound_rows: Vec<(usize, f64, f64)> = (0..n)
        .flat_map(|i| {
            let lo = lower[i].is_finite().then(|| (i, 1.0, lower[i] - pt.x[i]));
            let hi = upper[i].is_finite().then(|| (i, -1.0, pt.x[i] - upper[i]));
            lo.into_iter().chain(hi)
        })
        .collect();
    let grad = DVector::from_column_slice(&pt.grad);

    // -J d >= g, +-d_i >= bound offsets
    let rows = m + bound_rows.len();
    let mut c = DMatrix::zeros(rows, n);
    let mut b = DVector::zeros(rows);
    for j in 0..m {
        for i in 0..n {
            c[(j, i)] = -pt.jac[(j, i)];
        }
        b[j] = pt.g[j];
    }
    for (k, &(i, sign, offset)) in bound_rows.iter().enumerate() {
        c[(m + k, i)] = sign;
        b[m + k] = offset;
    }
    match solve_qp(hess, &grad, &c, &b) {
        Ok(sol) => return Some((sol.x, sol.multipliers.as_slice()[..m].to_vec())),
        Err(QpError::NotPositiveDefinite) => return None,
        Err(_) => {}
    }

    // elastic: -J d + t >= g, t >= 0
    let mut he = DMatrix::zeros(n + 1, n + 1);
    he.view_mut((0, 0), (n, n)).copy_from(hess);
    he[(n, n)] = 1.0;
    let mut ge = DVector::zeros(n + 1);
    ge.rows_mut(0, n).copy_from(&grad);
    ge[n] = penalty;
    let mut ce = DMatrix::zeros(rows + 1, n + 1);
    ce.view_mut((0, 0), (rows, n)).copy_from(&c);
    for j in 0..m {
        ce[(j, n)] = 1.0;
    }
    ce[(rows, n)] = 1.0;
    let mut be = DVector::zeros(rows + 1);
    be.rows_mut(0, rows).copy_from(&b);
    let sol = solve_qp(&he, &ge, &ce, &be).ok()?;
    Some((sol.x.rows(0, n).into_owned(), sol.multipliers.as_slice()[..m].to_vec()))
}

fn lagrangian_gradient(pt: &Point, lambda: &[f64]) -> DVector<f64> {
    let mut out = DVector::from_column_slice(&pt.grad);
    for (j, &lam) in lambda.iter().enumerate() {
        if lam != 0.0 {
            out += pt.jac.row(j).transpose() * lam;
        }
    }
    out
}

/// Powell-damped BFGS update; the first call rescales the identity.
fn bfgs_update(hess: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>, first: bool) {
    let sy = s.dot(y);
    if first && sy > 0.0 {
        let scale = y.dot(y) / sy;
        if scale.is_finite() && scale > 0.0 {
            *hess = DMatrix::identity(s.len(), s.len()) * scale;
        }
    }
    let bs = &*hess * s;
    let sbs = s.dot(&bs);
    if !(sbs > 1e-300) {
        return;
    }
    let r = if sy >= 0.2 * sbs {
        y.clone()
    } else {
        let theta = 0.8 * sbs / (sbs - sy);
        y * theta + &bs * (1.0 - theta)
    };
    let sr = s.dot(&r);
    if !(sr > 1e-300) {
        return;
    }
    *hess -= &bs * bs.transpose() / sbs;
    *hess += &r * r.transpose() / sr;
    // keep exact symmetry against rounding drift
    let sym = (&*hess + hess.transpose()) * 0.5;
    *hess = sym;
}

pub(crate) fn run<P: NlpProblem + ?Sized>(problem: &P, x0: &[f64], opts: &SolverOptions) -> Outcome {
    let n = problem.num_variables();
    let (lower, upper) = (problem.lower_bounds(), problem.upper_bounds());
    let mut x = x0.to_vec();
    project(&mut x, &lower, &upper);
    let mut pt = Point::new(problem, x, opts.fd_step);
    let mut trace = Trace::new();
    trace.record(&pt.x, pt.f, &pt.g);

    let mut hess = DMatrix::<f64>::identity(n, n);
    let mut first_update = true;
    let mut nu = 0.0f64;
    let mut lambda = vec![0.0; pt.g.len()];

    let finish =
        |status, pt: Point, lambda: Vec<f64>, kkt, trace| Outcome { status, x: pt.x, multipliers: lambda, kkt, trace };

    loop {
        let elastic_penalty = 10.0 * nu.max(1.0).max(pt.grad.iter().fold(0.0f64, |a, v| a.max(v.abs())));
        let step = subproblem(&pt, &hess, &lower, &upper, elastic_penalty).or_else(|| {
            hess = DMatrix::identity(n, n);
            first_update = true;
            subproblem(&pt, &hess, &lower, &upper, elastic_penalty)
        });
        let Some((d, lam)) = step else {
            let kkt = kkt_residual(&pt.x, &lower, &upper, &pt.grad, &pt.jac, &pt.g, &lambda);
            return finish(Status::Stalled, pt, lambda, kkt, trace);
        };
        lambda = lam;
        let violation = max_violation(&pt.g);
        let kkt = kkt_residual(&pt.x, &lower, &upper, &pt.grad, &pt.jac, &pt.g, &lambda);
        if kkt <= opts.kkt_tolerance && violation <= opts.constraint_tolerance {
            return finish(Status::Optimal, pt, lambda, kkt, trace);
        }
        if trace.iterates.len() > opts.max_iterations {
            return finish(Status::IterationLimit, pt, lambda, kkt, trace);
        }
        let x_scale = pt.x.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        if d.amax() <= opts.step_tolerance * x_scale {
            return finish(Status::Stalled, pt, lambda, kkt, trace);
        }

        // l1 merit and its directional derivative
        nu = nu.max(1.5 * lambda.iter().fold(0.0f64, |a, v| a.max(*v)));
        let jd = &pt.jac * &d;
        let lin_viol: f64 = pt.g.iter().zip(jd.iter()).map(|(g, s)| (g + s).max(0.0)).sum();
        let cur_viol = penalty_sum(&pt.g);
        let gd = DVector::from_column_slice(&pt.grad).dot(&d);
        let dbd = d.dot(&(&hess * &d));
        let reduction = cur_viol - lin_viol;
        if gd + nu * (lin_viol - cur_viol) > -0.5 * dbd && reduction > 0.0 {
            nu = nu.max((gd + 0.5 * dbd) / reduction * 1.5);
        }
        let dir_deriv = gd + nu * (lin_viol - cur_viol);
        let merit0 = pt.f + nu * cur_viol;

        let mut alpha = 1.0;
        let mut accepted = None;
        let mut g_trial = vec![0.0; pt.g.len()];
        for _ in 0..MAX_BACKTRACKS {
            let mut xt: Vec<f64> = pt.x.iter().zip(d.iter()).map(|(xi, di)| xi + alpha * di).collect();
            project(&mut xt, &lower, &upper);
            let ft = problem.evaluate(&xt, &mut g_trial);
            let merit = ft + nu * penalty_sum(&g_trial);
            if merit <= merit0 + ARMIJO * alpha * dir_deriv.min(0.0) && merit.is_finite() {
                accepted = Some((xt, merit));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xt, merit1)) = accepted else {
            return finish(Status::Stalled, pt, lambda, kkt, trace);
        };
        let next = Point::new(problem, xt, opts.fd_step);
        let s = DVector::from_iterator(n, next.x.iter().zip(&pt.x).map(|(a, b)| a - b));
        let y = lagrangian_gradient(&next, &lambda) - lagrangian_gradient(&pt, &lambda);
        bfgs_update(&mut hess, &s, &y, first_update);
        first_update = false;
        trace.merit_steps.push((merit0, merit1));
        trace.record(&next.x, next.f, &next.g);
        pt = next;
    }
}
