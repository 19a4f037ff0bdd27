//! Dense strictly convex QP by the Goldfarb-Idnani dual active-set method.
//!
//! Solves `min 1/2 x^T G x + a^T x` subject to `C x >= b`, where `G` is
//! symmetric positive definite. The method starts from the unconstrained
//! minimum and adds violated constraints one at a time, so the problems met in
//! SQP (few variables, many mostly inactive constraints) take few iterations.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub x: DVector<f64>,
    /// One multiplier per constraint row, zero for inactive rows.
    pub multipliers: DVector<f64>,
    pub active: Vec<usize>,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum QpError {
    NotPositiveDefinite,
    Infeasible,
    IterationLimit,
}

pub fn solve_qp(g: &DMatrix<f64>, a: &DVector<f64>, c: &DMatrix<f64>, b: &DVector<f64>) -> Result<QpSolution, QpError> {
    let n = g.nrows();
    let m = c.nrows();
    debug_assert_eq!(c.ncols(), n);
    debug_assert_eq!(b.len(), m);

    let chol = g.clone().cholesky().ok_or(QpError::NotPositiveDefinite)?;
    let l = chol.l();
    // J = L^{-T}; J^T G J = I
    let l_inv = l.clone().try_inverse().ok_or(QpError::NotPositiveDefinite)?;
    let mut jmat = l_inv.transpose();
    let mut x = -chol.solve(a);
    let mut r = DMatrix::<f64>::zeros(n, n);
    let mut active: Vec<usize> = Vec::with_capacity(n);
    let mut u: Vec<f64> = Vec::with_capacity(n);
    let row_norms: Vec<f64> = (0..m).map(|i| c.row(i).norm()).collect();

    let max_iter = 50 * (n + m) + 100;
    let mut iterations = 0;

    loop {
        // most violated inactive constraint
        let x_norm = x.norm();
        let mut worst: Option<(usize, f64)> = None;
        for i in 0..m {
            if active.contains(&i) {
                continue;
            }
            let slack = c.row(i).dot(&x.transpose()) - b[i];
            let tol = 1e-12 * (1.0 + b[i].abs() + row_norms[i] * x_norm);
            let scaled = slack / row_norms[i].max(1e-300);
            if slack < -tol && worst.is_none_or(|(_, w)| scaled < w) {
                worst = Some((i, scaled));
            }
        }
        let Some((p, _)) = worst else {
            let mut multipliers = DVector::zeros(m);
            for (k, &i) in active.iter().enumerate() {
                multipliers[i] = u[k];
            }
            return Ok(QpSolution { x, multipliers, active, iterations });
        };
        let np = c.row(p).transpose();
        let mut u_plus = u.clone();
        u_plus.push(0.0);

        loop {
            iterations += 1;
            if iterations > max_iter {
                return Err(QpError::IterationLimit);
            }
            let q = active.len();
            let d = jmat.transpose() * &np;
            let mut z = DVector::zeros(n);
            for j in q..n {
                z += jmat.column(j) * d[j];
            }
            let rv = back_substitute(&r, q, &d);

            let mut t1 = f64::INFINITY;
            let mut drop_idx = None;
            for j in 0..q {
                if rv[j] > 0.0 {
                    let ratio = u_plus[j] / rv[j];
                    if ratio < t1 {
                        t1 = ratio;
                        drop_idx = Some(j);
                    }
                }
            }
            let zn = z.dot(&np);
            let slack = np.dot(&x) - b[p];
            let t2 = if zn.abs() > 1e-14 * np.norm().powi(2).max(1e-300) && z.norm() > 0.0 {
                -slack / zn
            } else {
                f64::INFINITY
            };
            let t = t1.min(t2);
            if !t.is_finite() {
                return Err(QpError::Infeasible);
            }
            for j in 0..q {
                u_plus[j] -= t * rv[j];
            }
            u_plus[q] += t;
            if t2.is_finite() {
                x += &z * t;
            }
            if t2.is_finite() && t2 <= t1 {
                add_constraint(&mut jmat, &mut r, q, d);
                active.push(p);
                u = u_plus;
                break;
            }
            let l_idx = drop_idx.expect("partial step has a blocking constraint");
            drop_constraint(&mut jmat, &mut r, q, l_idx);
            active.remove(l_idx);
            u_plus.remove(l_idx);
            if !t2.is_finite() {
                // dual step only; retry the same constraint with the reduced set
                continue;
            }
        }
    }
}

/// Solves `R[0..q, 0..q] r = d[0..q]` for upper-triangular `R`.
fn back_substitute(r: &DMatrix<f64>, q: usize, d: &DVector<f64>) -> Vec<f64> {
    let mut out = vec![0.0; q];
    for i in (0..q).rev() {
        let mut s = d[i];
        for k in (i + 1)..q {
            s -= r[(i, k)] * out[k];
        }
        out[i] = s / r[(i, i)];
    }
    out
}

fn add_constraint(jmat: &mut DMatrix<f64>, r: &mut DMatrix<f64>, q: usize, mut d: DVector<f64>) {
    let n = jmat.nrows();
    for j in ((q + 1)..n).rev() {
        let h = d[j - 1].hypot(d[j]);
        if h == 0.0 {
            continue;
        }
        let (cs, sn) = (d[j - 1] / h, d[j] / h);
        d[j - 1] = h;
        d[j] = 0.0;
        for k in 0..n {
            let (a, b) = (jmat[(k, j - 1)], jmat[(k, j)]);
            jmat[(k, j - 1)] = cs * a + sn * b;
            jmat[(k, j)] = -sn * a + cs * b;
        }
    }
    for i in 0..=q {
        r[(i, q)] = d[i];
    }
    for i in (q + 1)..n {
        r[(i, q)] = 0.0;
    }
}

fn drop_constraint(jmat: &mut DMatrix<f64>, r: &mut DMatrix<f64>, q: usize, l: usize) {
    let n = jmat.nrows();
    for j in l..(q - 1) {
        for i in 0..n {
            r[(i, j)] = r[(i, j + 1)];
        }
    }
    for i in 0..n {
        r[(i, q - 1)] = 0.0;
    }
    // restore triangularity of the Hessenberg block
    for j in l..(q - 1) {
        let h = r[(j, j)].hypot(r[(j + 1, j)]);
        if h == 0.0 {
            continue;
        }
        let (cs, sn) = (r[(j, j)] / h, r[(j + 1, j)] / h);
        for k in j..(q - 1) {
            let (a, b) = (r[(j, k)], r[(j + 1, k)]);
            r[(j, k)] = cs * a + sn * b;
            r[(j + 1, k)] = -sn * a + cs * b;
        }
        r[(j + 1, j)] = 0.0;
        for k in 0..n {
            let (a, b) = (jmat[(k, j)], jmat[(k, j + 1)]);
            jmat[(k, j)] = cs * a + sn * b;
            jmat[(k, j + 1)] = -sn * a + cs * b;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Enumerates every active set of size <= n and keeps the KKT point.
    fn brute_force(g: &DMatrix<f64>, a: &DVector<f64>, c: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
        let n = g.nrows();
        let m = c.nrows();
        let mut best: Option<(f64, DVector<f64>)> = None;
        for mask in 0u32..(1 << m) {
            let set: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
            if set.len() > n {
                continue;
            }
            let k = set.len();
            let mut kkt = DMatrix::zeros(n + k, n + k);
            let mut rhs = DVector::zeros(n + k);
            kkt.view_mut((0, 0), (n, n)).copy_from(g);
            for (col, &i) in set.iter().enumerate() {
                for j in 0..n {
                    kkt[(j, n + col)] = -c[(i, j)];
                    kkt[(n + col, j)] = c[(i, j)];
                }
                rhs[n + col] = b[i];
            }
            for j in 0..n {
                rhs[j] = -a[j];
            }
            let Some(sol) = kkt.lu().solve(&rhs) else { continue };
            let x = sol.rows(0, n).into_owned();
            let feasible = (0..m).all(|i| c.row(i).transpose().dot(&x) - b[i] >= -1e-9);
            let dual_ok = (0..k).all(|j| sol[n + j] >= -1e-9);
            if feasible && dual_ok {
                let f = 0.5 * x.dot(&(g * &x)) + a.dot(&x);
                if best.as_ref().is_none_or(|(bf, _)| f < *bf) {
                    best = Some((f, x));
                }
            }
        }
        best.map(|(_, x)| x)
    }

    #[test]
    fn unconstrained_minimum() {
        let g = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 4.0]);
        let a = DVector::from_vec(vec![-2.0, -8.0]);
        let c = DMatrix::zeros(0, 2);
        let b = DVector::zeros(0);
        let sol = solve_qp(&g, &a, &c, &b).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-14 && (sol.x[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn single_bound() {
        // min x^2 s.t. x >= 1 -> x = 1, multiplier 2
        let g = DMatrix::from_element(1, 1, 2.0);
        let a = DVector::zeros(1);
        let c = DMatrix::from_element(1, 1, 1.0);
        let b = DVector::from_element(1, 1.0);
        let sol = solve_qp(&g, &a, &c, &b).unwrap();
        assert!((sol.x[0] - 1.0).abs() < 1e-14);
        assert!((sol.multipliers[0] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn detects_infeasibility() {
        let g = DMatrix::from_element(1, 1, 1.0);
        let a = DVector::zeros(1);
        let c = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
        let b = DVector::from_vec(vec![1.0, 0.0]);
        assert_eq!(solve_qp(&g, &a, &c, &b), Err(QpError::Infeasible));
        let g = DMatrix::from_element(1, 1, -1.0);
        assert_eq!(solve_qp(&g, &a, &c, &b), Err(QpError::NotPositiveDefinite));
    }

    #[test]
    fn matches_active_set_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut solved = 0;
        for _ in 0..300 {
            let n = rng.random_range(1..=3);
            let m = rng.random_range(1..=7);
            let mf = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            let g = &mf * mf.transpose() + DMatrix::identity(n, n) * 0.1;
            let a = DVector::from_fn(n, |_, _| rng.random_range(-3.0..3.0));
            let c = DMatrix::from_fn(m, n, |_, _| rng.random_range(-1.0..1.0));
            let b = DVector::from_fn(m, |_, _| rng.random_range(-1.0..1.0));
            let oracle = brute_force(&g, &a, &c, &b);
            match (solve_qp(&g, &a, &c, &b), oracle) {
                (Ok(sol), Some(x)) => {
                    assert!((&sol.x - &x).amax() < 1e-7, "{} vs {}", sol.x, x);
                    // KKT: G x + a = C^T u, u >= 0, complementarity
                    let grad = &g * &sol.x + &a - c.transpose() * &sol.multipliers;
                    assert!(grad.amax() < 1e-8);
                    for i in 0..m {
                        let slack = c.row(i).transpose().dot(&sol.x) - b[i];
                        assert!(sol.multipliers[i] >= 0.0);
                        assert!((sol.multipliers[i] * slack).abs() < 1e-8);
                    }
                    solved += 1;
                }
                (Err(QpError::Infeasible), None) => {}
                (got, want) => panic!("solver {got:?} vs oracle {want:?}"),
            }
        }
        assert!(solved > 100);
    }
}
