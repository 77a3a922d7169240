#![allow(dead_code)]

use bifunc_mpc::bifunction::QuadBifunction;
use bifunc_mpc::qp::FlatQP;
use bifunc_mpc::{LatentTag, StageSpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn v(xs: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(xs)
}

pub fn gauss_mat(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
}

pub fn gauss_vec(r: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| r.random_range(-1.0..1.0))
}

/// `M Mᵀ + ridge·I`.
pub fn random_psd(r: &mut ChaCha8Rng, n: usize, ridge: f64) -> DMatrix<f64> {
    let m = gauss_mat(r, n, n);
    &m * m.transpose() + DMatrix::identity(n, n) * ridge
}

pub fn rel_gap(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1.0)
}

/// The running example; `widened = Some(b)` replaces its boxes with `±b`.
pub fn example1(widened: Option<f64>) -> StageSpec {
    let (xb, ub) = match widened {
        Some(b) => (v(&[b, b]), v(&[b])),
        None => (v(&[3.0, 2.0]), v(&[1.0])),
    };
    StageSpec::new(
        DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.01, 0.0]),
        DMatrix::from_row_slice(2, 1, &[0.0, 1.0]),
        DMatrix::identity(2, 2) * 5.0,
        DMatrix::from_element(1, 1, 3.0),
    )
    .with_box(&(-&xb), &xb, &(-&ub), &ub)
    .unwrap()
}

pub fn example1_x0() -> DVector<f64> {
    v(&[3.0, 1.0])
}

/// Random stage with `n ≤ 3`, `m ≤ 2`, jointly PSD stage cost, strictly convex
/// in `u`, and a box containing the returned initial state unless
/// `push_outside` is set.
pub fn random_stage(r: &mut ChaCha8Rng, push_outside: bool) -> (StageSpec, DVector<f64>) {
    let n = r.random_range(1..=3);
    let m = r.random_range(1..=2);
    let a = gauss_mat(r, n, n);
    let b = gauss_mat(r, n, m);
    let joint = {
        let l = gauss_mat(r, n + m, n + m);
        let mut j = &l * l.transpose();
        for i in n..n + m {
            j[(i, i)] += 0.2;
        }
        j
    };
    let mut spec = StageSpec::new(a, b, joint.view((0, 0), (n, n)).into_owned(), joint.view((n, n), (m, m)).into_owned());
    spec.s = joint.view((0, n), (n, m)).into_owned();
    if r.random_bool(0.5) {
        spec.lin_x = gauss_vec(r, n);
        spec.lin_u = gauss_vec(r, m);
    }
    if r.random_bool(0.3) {
        spec.c = gauss_vec(r, n) * 0.2;
    }
    let xb = DVector::from_fn(n, |_, _| r.random_range(0.5..4.0));
    let ub = DVector::from_fn(m, |_, _| r.random_range(0.3..2.0));
    let x0 = if push_outside {
        DVector::from_fn(n, |i, _| if i == 0 { xb[0] * 1.5 } else { 0.0 })
    } else {
        DVector::from_fn(n, |i, _| xb[i] * r.random_range(-0.9..0.9))
    };
    let spec = spec.with_box(&(-&xb), &xb, &(-&ub), &ub).unwrap();
    (spec, x0)
}

/// Random bifunction whose constraints hold on the cube `[-1, 1]^dim`
/// (so evaluations there are finite), with a strictly convex cost.
pub fn random_bifunction(r: &mut ChaCha8Rng, n_in: usize, n_out: usize) -> QuadBifunction {
    let n_lat = r.random_range(0..=2);
    let dim = n_in + n_out + n_lat;
    let p = random_psd(r, dim, 0.1);
    let q = gauss_vec(r, dim);
    let rows = r.random_range(0..=2);
    let a_in = gauss_mat(r, rows, dim);
    let b_in = DVector::from_fn(rows, |i, _| a_in.row(i).abs().sum() + r.random_range(0.0..0.5));
    QuadBifunction::new(
        n_in,
        n_out,
        vec![LatentTag::Aux; n_lat],
        p,
        q,
        r.random_range(-1.0..1.0),
        DMatrix::zeros(0, dim),
        DVector::zeros(0),
        a_in,
        b_in,
    )
    .unwrap()
}

/// Like [`random_bifunction`] but with one random equality row, so most
/// points are outside the domain.
pub fn random_constrained_bifunction(r: &mut ChaCha8Rng, n_in: usize, n_out: usize) -> QuadBifunction {
    let base = random_bifunction(r, n_in, n_out);
    let dim = base.dim();
    let row = gauss_mat(r, 1, dim);
    QuadBifunction::new(
        n_in,
        n_out,
        base.latent_tags().to_vec(),
        base.p().clone(),
        base.q().clone(),
        base.r(),
        row,
        v(&[r.random_range(-0.3..0.3)]),
        base.a_in().clone(),
        base.b_in().clone(),
    )
    .unwrap()
}

pub fn cube_point(r: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| r.random_range(-1.0..1.0))
}

/// Random strictly convex QP with a known feasible point.
pub fn random_qp(r: &mut ChaCha8Rng, dim: usize) -> FlatQP {
    let p = random_psd(r, dim, 0.1);
    let q = gauss_vec(r, dim) * 3.0;
    let n_eq = r.random_range(0..=dim / 2);
    let n_in = r.random_range(0..=dim.min(6));
    let feasible = gauss_vec(r, dim);
    let a_eq = gauss_mat(r, n_eq, dim);
    let b_eq = &a_eq * &feasible;
    let a_in = gauss_mat(r, n_in, dim);
    let slack = DVector::from_fn(n_in, |_, _| if r.random_bool(0.3) { 0.0 } else { r.random_range(0.0..1.0) });
    let b_in = &a_in * &feasible + slack;
    FlatQP::unlabeled(p, q, 0.0, a_eq, b_eq, a_in, b_in)
}

/// Random QP whose inequalities contain a contradictory pair along a random
/// direction, padded with unrelated rows and equalities.
pub fn random_infeasible_qp(r: &mut ChaCha8Rng, dim: usize) -> FlatQP {
    let base = random_qp(r, dim);
    let d = gauss_mat(r, 1, dim);
    let level = r.random_range(-1.0..1.0);
    let gap = r.random_range(0.1..2.0);
    // d·z ≤ level and −d·z ≤ −(level + gap)
    let a_in = bifunc_mpc::linalg::vstack(&bifunc_mpc::linalg::vstack(&base.a_in, &d), &(-&d));
    let b_in = bifunc_mpc::linalg::vconcat(&base.b_in, &v(&[level, -(level + gap)]));
    // Equalities may already contradict the new pair; either way it is infeasible.
    FlatQP::unlabeled(base.p, base.q, 0.0, base.a_eq, base.b_eq, a_in, b_in)
}

/// Exact minimizer by enumerating active inequality sets (small problems).
/// Returns `None` when no subset yields a KKT point, i.e. the QP is infeasible.
pub fn active_set_oracle(qp: &FlatQP) -> Option<(DVector<f64>, f64)> {
    let n = qp.dim();
    let n_eq = qp.a_eq.nrows();
    let n_in = qp.a_in.nrows();
    assert!(n_in <= 16);
    let mut best: Option<(DVector<f64>, f64)> = None;
    for mask in 0u32..(1 << n_in) {
        let active: Vec<usize> = (0..n_in).filter(|i| mask & (1 << i) != 0).collect();
        let k = n_eq + active.len();
        if k > n {
            continue;
        }
        let mut kkt = DMatrix::zeros(n + k, n + k);
        let mut rhs = DVector::zeros(n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&qp.p);
        for i in 0..n {
            rhs[i] = -qp.q[i];
        }
        for (row, src) in (0..n_eq).map(|i| (qp.a_eq.row(i), qp.b_eq[i])).chain(active.iter().map(|&i| (qp.a_in.row(i), qp.b_in[i]))).enumerate() {
            for j in 0..n {
                kkt[(n + row, j)] = src.0[j];
                kkt[(j, n + row)] = src.0[j];
            }
            rhs[n + row] = src.1;
        }
        let svd = kkt.clone().svd(false, false);
        let smax = svd.singular_values.max();
        if svd.singular_values.min() <= 1e-10 * smax.max(1.0) {
            continue;
        }
        let Some(sol) = kkt.lu().solve(&rhs) else { continue };
        let z = sol.rows(0, n).into_owned();
        let mult = sol.rows(n + n_eq, active.len()).into_owned();
        if mult.iter().any(|&m| m < -1e-9) {
            continue;
        }
        let slack = &qp.a_in * &z - &qp.b_in;
        if slack.iter().any(|&s| s > 1e-9) {
            continue;
        }
        let f = qp.objective(&z);
        if best.as_ref().is_none_or(|(_, b)| f < *b) {
            best = Some((z, f));
        }
    }
    best
}

/// Backward Riccati recursion for `Σ xᵀQx + uᵀRu + x_NᵀQf x_N`; returns the
/// optimal open-loop controls from `x0`.
pub fn riccati_controls(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    qf: &DMatrix<f64>,
    horizon: usize,
    x0: &DVector<f64>,
) -> Vec<DVector<f64>> {
    let mut p = qf.clone();
    let mut gains = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let btp = b.transpose() * &p;
        let k = (r + &btp * b).try_inverse().unwrap() * &btp * a;
        p = q + a.transpose() * &p * a - a.transpose() * &p * b * &k;
        p = (&p + p.transpose()) * 0.5;
        gains.push(k);
    }
    gains.reverse();
    let mut x = x0.clone();
    gains
        .iter()
        .map(|k| {
            let u = -(k * &x);
            x = a * &x + b * &u;
            u
        })
        .collect()
}
