use nalgebra::{DMatrix, DVector};

use super::{SolverOptions, Standard};

const DELTA: f64 = 1e-7;
const REFINE_ITERS: usize = 30;
const ACTIVE_SET_ROUNDS: usize = 10;

#[derive(Clone, Copy, PartialEq, Eq)]
enum Bound {
    Lower,
    Upper,
    Equal,
}

/// Solves the KKT system on an active set, returning the primal point and
/// the multipliers of the active rows.
fn solve_active(prob: &Standard, active: &[(usize, Bound)]) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = prob.n();
    let k = active.len();
    let dim = n + k;
    let mut exact = DMatrix::zeros(dim, dim);
    exact.view_mut((0, 0), (n, n)).copy_from(&prob.p);
    let mut rhs = DVector::zeros(dim);
    for j in 0..n {
        rhs[j] = -prob.q[j];
    }
    for (r, &(i, bound)) in active.iter().enumerate() {
        for j in 0..n {
            exact[(n + r, j)] = prob.c[(i, j)];
            exact[(j, n + r)] = prob.c[(i, j)];
        }
        rhs[n + r] = match bound {
            Bound::Lower => prob.l[i],
            Bound::Upper | Bound::Equal => prob.u[i],
        };
    }
    let mut reg = exact.clone();
    for j in 0..n {
        reg[(j, j)] += DELTA;
    }
    for r in 0..k {
        reg[(n + r, n + r)] -= DELTA;
    }
    let lu = reg.lu();
    let mut sol = lu.solve(&rhs)?;
    let scale = rhs.amax().max(1.0);
    for _ in 0..REFINE_ITERS {
        let res = &rhs - &exact * &sol;
        if res.amax() <= 1e-15 * scale {
            break;
        }
        sol += lu.solve(&res)?;
    }
    if !sol.iter().all(|v| v.is_finite()) {
        return None;
    }
    Some((sol.rows(0, n).into_owned(), sol.rows(n, k).into_owned()))
}

/// Active-set refinement of an ADMM solution. Returns `None` when no
/// candidate active set beats the unpolished iterate.
pub(super) fn polish(
    prob: &Standard,
    x: &DVector<f64>,
    y: &DVector<f64>,
    opts: &SolverOptions,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let m = prob.m();
    let cx = &prob.c * x;
    let mut state: Vec<Option<Bound>> = (0..m)
        .map(|i| {
            if prob.l[i] == prob.u[i] {
                Some(Bound::Equal)
            } else if cx[i] - prob.l[i] < -y[i] {
                Some(Bound::Lower)
            } else if prob.u[i] - cx[i] < y[i] {
                Some(Bound::Upper)
            } else {
                None
            }
        })
        .collect();

    let (prim0, dual0) = prob.residuals(x, y);
    let data_scale = prob.p.amax().max(prob.c.amax()).max(prob.q.amax()).max(1.0);
    let feas_tol = opts.eps_abs.min(1e-9 * data_scale).max(1e-12);

    for _ in 0..ACTIVE_SET_ROUNDS {
        let active: Vec<(usize, Bound)> = state
            .iter()
            .enumerate()
            .filter_map(|(i, b)| b.map(|b| (i, b)))
            .collect();
        let (xp, ya) = solve_active(prob, &active)?;
        let mut yp = DVector::zeros(m);
        for (r, &(i, _)) in active.iter().enumerate() {
            yp[i] = ya[r];
        }
        let cxp = &prob.c * &xp;
        let mut changed = false;
        for (r, &(i, bound)) in active.iter().enumerate() {
            let wrong_sign = match bound {
                Bound::Upper => ya[r] < -feas_tol,
                Bound::Lower => ya[r] > feas_tol,
                Bound::Equal => false,
            };
            if wrong_sign {
                state[i] = None;
                changed = true;
            }
        }
        for i in 0..m {
            if state[i].is_none() {
                if cxp[i] > prob.u[i] + feas_tol {
                    state[i] = Some(Bound::Upper);
                    changed = true;
                } else if cxp[i] < prob.l[i] - feas_tol {
                    state[i] = Some(Bound::Lower);
                    changed = true;
                }
            }
        }
        if changed {
            continue;
        }
        let (prim, dual) = prob.residuals(&xp, &yp);
        let floor = 1e-10 * data_scale;
        if prim <= prim0.max(floor) && dual <= dual0.max(floor) {
            return Some((xp, yp));
        }
        return None;
    }
    None
}
