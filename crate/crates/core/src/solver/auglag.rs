//! Augmented Lagrangian method for `g(x) <= 0` with simple bounds.
//!
//! The inner problem `min L_A(x; lambda, rho)` over the bound box is solved by
//! a projected BFGS method; bounds are never relaxed.

use nalgebra::{DMatrix, DVector};

use super::{kkt_residual, max_violation, project, NlpProblem, Outcome, SolverOptions, Status, Trace};

const INITIAL_RHO: f64 = 10.0;
const MAX_RHO: f64 = 1e12;
const INNER_ITERATIONS: usize = 500;
const ARMIJO: f64 = 1e-4;

struct Inner<'a, P: ?Sized> {
    problem: &'a P,
    lambda: &'a [f64],
    rho: f64,
    fd_step: f64,
}

impl<P: NlpProblem + ?Sized> Inner<'_, P> {
    fn value(&self, x: &[f64], g: &mut [f64]) -> f64 {
        let f = self.problem.evaluate(x, g);
        let shift: f64 =
            g.iter().zip(self.lambda).map(|(&gi, &li)| (li + self.rho * gi).max(0.0).powi(2) - li * li).sum();
        f + shift / (2.0 * self.rho)
    }

    fn gradient(&self, x: &[f64], g: &[f64], grad: &mut [f64], jac: &mut DMatrix<f64>) -> DVector<f64> {
        self.problem.derivatives(x, self.fd_step, grad, jac);
        let mut out = DVector::from_column_slice(grad);
        for (j, (&gj, &lj)) in g.iter().zip(self.lambda).enumerate() {
            let weight = (lj + self.rho * gj).max(0.0);
            if weight != 0.0 {
                out += jac.row(j).transpose() * weight;
            }
        }
        out
    }
}

fn projected_gradient_norm(x: &[f64], grad: &DVector<f64>, lower: &[f64], upper: &[f64]) -> f64 {
    (0..x.len()).fold(0.0f64, |acc, i| acc.max((x[i] - (x[i] - grad[i]).clamp(lower[i], upper[i])).abs()))
}

/// Projected BFGS on the bound box; returns the final point.
fn inner_solve<P: NlpProblem + ?Sized>(
    inner: &Inner<'_, P>,
    mut x: Vec<f64>,
    lower: &[f64],
    upper: &[f64],
    tolerance: f64,
) -> Vec<f64> {
    let n = x.len();
    let m = inner.problem.num_constraints();
    let mut g = vec![0.0; m];
    let mut grad_f = vec![0.0; n];
    let mut jac = DMatrix::zeros(m, n);
    let mut value = inner.value(&x, &mut g);
    let mut grad = inner.gradient(&x, &g, &mut grad_f, &mut jac);
    let mut h_inv = DMatrix::<f64>::identity(n, n);
    let mut scaled = false;

    for _ in 0..INNER_ITERATIONS {
        if projected_gradient_norm(&x, &grad, lower, upper) <= tolerance {
            break;
        }
        let fixed: Vec<bool> =
            (0..n).map(|i| (x[i] <= lower[i] && grad[i] > 0.0) || (x[i] >= upper[i] && grad[i] < 0.0)).collect();
        let mut d = -(&h_inv * &grad);
        for i in 0..n {
            if fixed[i] {
                d[i] = 0.0;
            }
        }
        if grad.dot(&d) >= 0.0 {
            h_inv = DMatrix::identity(n, n);
            scaled = false;
            d = -grad.clone();
            for i in 0..n {
                if fixed[i] {
                    d[i] = 0.0;
                }
            }
        }

        let mut alpha = 1.0;
        let mut next = None;
        let mut g_trial = vec![0.0; m];
        for _ in 0..60 {
            let mut xt: Vec<f64> = x.iter().zip(d.iter()).map(|(xi, di)| xi + alpha * di).collect();
            project(&mut xt, lower, upper);
            let decrease: f64 = (0..n).map(|i| grad[i] * (xt[i] - x[i])).sum();
            let vt = inner.value(&xt, &mut g_trial);
            if vt <= value + ARMIJO * decrease && vt.is_finite() {
                next = Some((xt, vt));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xt, vt)) = next else { break };
        g.copy_from_slice(&g_trial);
        let grad_t = inner.gradient(&xt, &g, &mut grad_f, &mut jac);
        let s = DVector::from_iterator(n, xt.iter().zip(&x).map(|(a, b)| a - b));
        let y = &grad_t - &grad;
        let sy = s.dot(&y);
        if sy > 1e-12 * s.norm() * y.norm() {
            if !scaled {
                h_inv = DMatrix::identity(n, n) * (sy / y.dot(&y));
                scaled = true;
            }
            let rho = 1.0 / sy;
            let i = DMatrix::<f64>::identity(n, n);
            let left = &i - &s * y.transpose() * rho;
            h_inv = &left * &h_inv * left.transpose() + &s * s.transpose() * rho;
        }
        x = xt;
        value = vt;
        grad = grad_t;
    }
    x
}

pub(crate) fn run<P: NlpProblem + ?Sized>(problem: &P, x0: &[f64], opts: &SolverOptions) -> Outcome {
    let n = problem.num_variables();
    let m = problem.num_constraints();
    let (lower, upper) = (problem.lower_bounds(), problem.upper_bounds());
    let mut x = x0.to_vec();
    project(&mut x, &lower, &upper);

    let mut g = vec![0.0; m];
    let mut grad = vec![0.0; n];
    let mut jac = DMatrix::zeros(m, n);
    let f = problem.evaluate(&x, &mut g);
    let mut trace = Trace::new();
    trace.record(&x, f, &g);

    let mut lambda = vec![0.0; m];
    let mut rho = INITIAL_RHO;
    let mut inner_tol = 1e-2f64.max(opts.kkt_tolerance);
    let mut last_violation = max_violation(&g);

    loop {
        problem.derivatives(&x, opts.fd_step, &mut grad, &mut jac);
        let kkt = kkt_residual(&x, &lower, &upper, &grad, &jac, &g, &lambda);
        let violation = max_violation(&g);
        if kkt <= opts.kkt_tolerance && violation <= opts.constraint_tolerance {
            return Outcome { status: Status::Optimal, x, multipliers: lambda, kkt, trace };
        }
        if trace.iterates.len() > opts.max_iterations {
            return Outcome { status: Status::IterationLimit, x, multipliers: lambda, kkt, trace };
        }

        let inner = Inner { problem, lambda: &lambda, rho, fd_step: opts.fd_step };
        let x_new = inner_solve(&inner, x.clone(), &lower, &upper, inner_tol);
        let f_new = problem.evaluate(&x_new, &mut g);
        let new_lambda: Vec<f64> = lambda.iter().zip(&g).map(|(&l, &gi)| (l + rho * gi).max(0.0)).collect();
        let violation = max_violation(&g);
        let x_scale = x.iter().fold(1.0f64, |a, v| a.max(v.abs()));
        let moved = x_new.iter().zip(&x).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));
        let lambda_moved = new_lambda.iter().zip(&lambda).fold(0.0f64, |a, (p, q)| a.max((p - q).abs()));

        if violation > 0.25 * last_violation && violation > opts.constraint_tolerance {
            rho = (rho * 10.0).min(MAX_RHO);
        }
        last_violation = violation;
        lambda = new_lambda;
        inner_tol = (inner_tol * 0.1).max(0.1 * opts.kkt_tolerance);
        trace.record(&x_new, f_new, &g);
        let stalled = moved <= opts.step_tolerance * x_scale && lambda_moved == 0.0 && rho >= MAX_RHO;
        x = x_new;
        if stalled {
            problem.derivatives(&x, opts.fd_step, &mut grad, &mut jac);
            let kkt = kkt_residual(&x, &lower, &upper, &grad, &jac, &g, &lambda);
            let status = if kkt <= opts.kkt_tolerance && violation <= opts.constraint_tolerance {
                Status::Optimal
            } else {
                Status::Stalled
            };
            return Outcome { status, x, multipliers: lambda, kkt, trace };
        }
    }
}
