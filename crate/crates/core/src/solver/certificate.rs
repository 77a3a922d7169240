//! Infeasibility and unboundedness certificates.
//!
//! Candidates come from ADMM iterate differences; before a status is
//! reported they are projected onto the exact certificate conditions and
//! re-verified, so a reported certificate is checkable from the data alone.

use nalgebra::{DMatrix, DVector, SVD};

use super::Standard;
use crate::linalg::{inf_norm, vstack};

const REFINE_ROUNDS: usize = 200;
const ACCEPT_TOL: f64 = 1e-8;

fn support(prob: &Standard, y: &DVector<f64>) -> f64 {
    (0..y.len())
        .map(|i| {
            let upper = if y[i] > 0.0 { prob.u[i] * y[i] } else { 0.0 };
            let lower = if y[i] < 0.0 { prob.l[i] * y[i] } else { 0.0 };
            upper + lower
        })
        .sum()
}

fn sign_feasible(prob: &Standard, y: &DVector<f64>, tol: f64) -> bool {
    (0..y.len()).all(|i| {
        (prob.l[i].is_finite() || y[i] >= -tol) && (prob.u[i].is_finite() || y[i] <= tol)
    })
}

fn clamp_signs(prob: &Standard, y: &mut DVector<f64>) {
    for i in 0..y.len() {
        if !prob.l[i].is_finite() && y[i] < 0.0 {
            y[i] = 0.0;
        }
        if !prob.u[i].is_finite() && y[i] > 0.0 {
            y[i] = 0.0;
        }
    }
}

pub(super) fn primal_candidate(prob: &Standard, dy: &DVector<f64>, eps: f64) -> Option<DVector<f64>> {
    let norm = inf_norm(dy);
    if norm < 1e-14 {
        return None;
    }
    let mut y = dy / norm;
    if !sign_feasible(prob, &y, eps) {
        return None;
    }
    clamp_signs(prob, &mut y);
    let scale = prob.c.amax().max(1.0);
    if inf_norm(&(prob.c.transpose() * &y)) > eps * scale {
        return None;
    }
    (support(prob, &y) < -eps).then_some(y)
}

/// Orthonormal basis of the column space of `a`.
fn range_basis(a: &DMatrix<f64>) -> DMatrix<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return DMatrix::zeros(a.nrows(), 0);
    }
    let svd = SVD::new(a.clone(), true, false);
    let u = svd.u.expect("left singular vectors requested");
    let smax = svd.singular_values.max();
    let tol = smax * 1e-10 * a.nrows().max(a.ncols()) as f64;
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > tol)
        .collect();
    DMatrix::from_fn(a.nrows(), keep.len(), |i, j| u[(i, keep[j])])
}

fn project_out(basis: &DMatrix<f64>, v: &DVector<f64>) -> DVector<f64> {
    if basis.ncols() == 0 {
        return v.clone();
    }
    v - basis * (basis.transpose() * v)
}

/// Polishes a candidate Farkas vector: `Cᵀy = 0`, sign constraints on
/// one-sided rows, negative support.
pub(super) fn refine_farkas(prob: &Standard, candidate: &DVector<f64>) -> Option<DVector<f64>> {
    let basis = range_basis(&prob.c);
    let mut y = candidate.clone();
    for _ in 0..REFINE_ROUNDS {
        y = project_out(&basis, &y);
        let before = y.clone();
        clamp_signs(prob, &mut y);
        if (&y - &before).amax() < 1e-15 {
            break;
        }
    }
    let norm = inf_norm(&y);
    if norm < 1e-12 {
        return None;
    }
    y /= norm;
    let scale = prob.c.amax().max(1.0);
    let bscale = prob
        .l
        .iter()
        .chain(prob.u.iter())
        .filter(|v| v.is_finite())
        .fold(1.0_f64, |a, v| a.max(v.abs()));
    let residual = inf_norm(&(prob.c.transpose() * &y));
    let ok = sign_feasible(prob, &y, 0.0)
        && residual <= ACCEPT_TOL * scale
        && support(prob, &y) < -ACCEPT_TOL * bscale;
    ok.then_some(y)
}

pub(super) fn dual_candidate(prob: &Standard, dx: &DVector<f64>, eps: f64) -> Option<DVector<f64>> {
    let norm = inf_norm(dx);
    if norm < 1e-14 {
        return None;
    }
    let d = dx / norm;
    let pscale = prob.p.amax().max(1.0);
    if inf_norm(&(&prob.p * &d)) > eps * pscale {
        return None;
    }
    if prob.q.dot(&d) >= -eps {
        return None;
    }
    let cd = &prob.c * &d;
    let cscale = prob.c.amax().max(1.0);
    let ok = (0..cd.len()).all(|i| {
        let lo = if prob.l[i].is_finite() { cd[i] >= -eps * cscale } else { true };
        let hi = if prob.u[i].is_finite() { cd[i] <= eps * cscale } else { true };
        lo && hi
    });
    ok.then_some(d)
}

/// Polishes a recession direction: `Pd = 0`, `C_eq d = 0`, one-sided rows
/// non-increasing toward their finite bound, `qᵀd < 0`.
pub(super) fn refine_ray(prob: &Standard, candidate: &DVector<f64>) -> Option<DVector<f64>> {
    let n = prob.n();
    let eq_rows: Vec<usize> = (0..prob.m()).filter(|&i| prob.l[i] == prob.u[i]).collect();
    let c_eq = DMatrix::from_fn(eq_rows.len(), n, |i, j| prob.c[(eq_rows[i], j)]);
    let stacked = vstack(&prob.p, &c_eq);
    // Null space of `stacked` = orthogonal complement of its row space.
    let row_basis = range_basis(&stacked.transpose());
    let d = project_out(&row_basis, candidate);
    let norm = inf_norm(&d);
    if norm < 1e-12 {
        return None;
    }
    let d = d / norm;
    let cd = &prob.c * &d;
    let cscale = prob.c.amax().max(1.0);
    let constraints_ok = (0..cd.len()).all(|i| {
        if prob.l[i] == prob.u[i] {
            return true;
        }
        let lo = !prob.l[i].is_finite() || cd[i] >= -1e-7 * cscale;
        let hi = !prob.u[i].is_finite() || cd[i] <= 1e-7 * cscale;
        lo && hi
    });
    let descent = prob.q.dot(&d) < -ACCEPT_TOL * inf_norm(&prob.q).max(1.0);
    (constraints_ok && descent).then_some(d)
}
