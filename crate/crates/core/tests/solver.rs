mod common;

use bifunc_mpc::qp::FlatQP;
use bifunc_mpc::solver::{self, farkas_residual, kkt_residuals, riccati_lqr, SolverOptions, Status};
use bifunc_mpc::{Error, Terminal};
use common::*;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn m(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

fn empty(n: usize) -> (DMatrix<f64>, DVector<f64>) {
    (DMatrix::zeros(0, n), DVector::zeros(0))
}

#[test]
fn textbook_half_line() {
    // ½·2x² s.t. x ≥ 1
    let (ae, be) = empty(1);
    let qp = FlatQP::unlabeled(m(1, 1, &[2.0]), v(&[0.0]), 0.0, ae, be, m(1, 1, &[-1.0]), v(&[-1.0]));
    let sol = solver::solve(&qp, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, Status::Optimal);
    assert!((sol.z[0] - 1.0).abs() <= 1e-9);
    assert!((sol.objective - 1.0).abs() <= 1e-9);
    let (s, p, c) = kkt_residuals(&qp, &sol);
    assert!(s.max(p).max(c) <= 1e-8);

    let mut moved = sol.clone();
    moved.z[0] += 0.1;
    let (s, p, _) = kkt_residuals(&qp, &moved);
    assert!(s.max(p) > 1e-3);
}

#[test]
fn contradictory_bounds() {
    let (ae, be) = empty(1);
    let qp = FlatQP::unlabeled(m(1, 1, &[2.0]), v(&[0.0]), 0.0, ae, be, m(2, 1, &[1.0, -1.0]), v(&[0.0, -1.0]));
    let sol = solver::solve(&qp, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, Status::PrimalInfeasible);
    assert!(farkas_residual(&qp, sol.certificate.as_ref().unwrap()).unwrap() <= 1e-6);
}

#[test]
fn unbounded_directions() {
    // min −x s.t. x ≥ 0
    let (ae, be) = empty(1);
    let qp = FlatQP::unlabeled(m(1, 1, &[0.0]), v(&[-1.0]), 0.0, ae, be, m(1, 1, &[-1.0]), v(&[0.0]));
    let sol = solver::solve(&qp, &SolverOptions::default()).unwrap();
    assert_eq!(sol.status, Status::DualInfeasibleOrUnbounded);
    let d = sol.certificate.unwrap();
    assert!(d[0] > 0.0);
}

#[test]
fn equality_only_matches_direct_kkt() {
    let mut r = rng(21);
    for _ in 0..10 {
        let n = r.random_range(2..=8);
        let k = r.random_range(1..n);
        let p = random_psd(&mut r, n, 0.1);
        let q = gauss_vec(&mut r, n);
        let a = gauss_mat(&mut r, k, n);
        let b = gauss_vec(&mut r, k);
        let qp = FlatQP::unlabeled(p.clone(), q.clone(), 0.0, a.clone(), b.clone(), DMatrix::zeros(0, n), DVector::zeros(0));
        let sol = solver::solve(&qp, &SolverOptions::default()).unwrap();
        let mut kkt = DMatrix::zeros(n + k, n + k);
        kkt.view_mut((0, 0), (n, n)).copy_from(&p);
        kkt.view_mut((n, 0), (k, n)).copy_from(&a);
        kkt.view_mut((0, n), (n, k)).copy_from(&a.transpose());
        let rhs = bifunc_mpc::linalg::vconcat(&(-&q), &b);
        let direct = kkt.lu().solve(&rhs).unwrap();
        assert!((&sol.z - direct.rows(0, n)).amax() <= 1e-8);
        let (s, pr, c) = kkt_residuals(&qp, &sol);
        assert!(s.max(pr).max(c) <= 1e-10, "{s:e} {pr:e} {c:e}");
    }
}

#[test]
fn objective_matches_recomputation() {
    let mut r = rng(22);
    for _ in 0..50 {
        let dim = r.random_range(1..=10);
        let qp = random_qp(&mut r, dim);
        let sol = solver::solve(&qp, &SolverOptions::default()).unwrap();
        assert!((sol.objective - qp.objective(&sol.z)).abs() <= 1e-10 * sol.objective.abs().max(1.0));
    }
}

#[test]
fn iteration_cap_is_reported() {
    let mut r = rng(23);
    let qp = random_qp(&mut r, 8);
    let opts = SolverOptions { max_iter: 1, polish: false, ..SolverOptions::default() };
    let sol = solver::solve(&qp, &opts).unwrap();
    assert!(matches!(sol.status, Status::MaxIter | Status::Optimal));
    assert!(sol.iterations <= 1);
}

#[test]
fn invalid_inputs_are_errors() {
    let (ae, be) = empty(1);
    let nan = FlatQP::unlabeled(m(1, 1, &[f64::NAN]), v(&[0.0]), 0.0, ae.clone(), be.clone(), ae.clone(), be.clone());
    assert!(solver::solve(&nan, &SolverOptions::default()).is_err());
    let opts = SolverOptions { alpha: 2.5, ..SolverOptions::default() };
    let fine = FlatQP::unlabeled(m(1, 1, &[1.0]), v(&[0.0]), 0.0, ae.clone(), be.clone(), ae, be);
    assert!(solver::solve(&fine, &opts).is_err());
}

#[test]
fn riccati_one_step_formula() {
    let mut r = rng(24);
    let (a, b) = (gauss_mat(&mut r, 2, 2), gauss_mat(&mut r, 2, 1));
    let (q, ru, qf) = (random_psd(&mut r, 2, 0.1), random_psd(&mut r, 1, 0.1), random_psd(&mut r, 2, 0.1));
    let x0 = gauss_vec(&mut r, 2);
    let lqr = riccati_lqr(&a, &b, &q, &ru, &qf, 1, &x0).unwrap();
    let bt = b.transpose();
    let u = -(&ru + &bt * &qf * &b).try_inverse().unwrap() * &bt * &qf * &a * &x0;
    assert!((&lqr.controls[0] - u).amax() <= 1e-12);
    assert_eq!(lqr.states.len(), 2);
}

#[test]
fn riccati_decoupled_when_a_is_zero() {
    let a = DMatrix::zeros(2, 2);
    let b = m(2, 1, &[0.0, 1.0]);
    let q = DMatrix::identity(2, 2) * 5.0;
    let ru = m(1, 1, &[3.0]);
    let x0 = v(&[3.0, 1.0]);
    let lqr = riccati_lqr(&a, &b, &q, &ru, &DMatrix::zeros(2, 2), 4, &x0).unwrap();
    // States after the first are zero without control effort.
    assert!(lqr.controls.iter().all(|u| u.amax() <= 1e-14));
    assert!((lqr.cost - x0.dot(&(&q * &x0))).abs() <= 1e-12);
}

#[test]
fn riccati_rejects_singular_ru() {
    let r = riccati_lqr(
        &DMatrix::identity(1, 1),
        &DMatrix::identity(1, 1),
        &DMatrix::identity(1, 1),
        &DMatrix::zeros(1, 1),
        &DMatrix::zeros(1, 1),
        2,
        &v(&[1.0]),
    );
    assert!(matches!(r, Err(Error::SingularRu)));
}

#[test]
fn riccati_library_matches_test_recursion_and_mpc() {
    let spec = example1(Some(1e6));
    let x0 = example1_x0();
    let qf = DMatrix::identity(2, 2) * 5.0;
    for horizon in [1, 5, 10] {
        let lib = riccati_lqr(&spec.a, &spec.b, &spec.qx, &spec.ru, &qf, horizon, &x0).unwrap();
        let reference = riccati_controls(&spec.a, &spec.b, &spec.qx, &spec.ru, &qf, horizon, &x0);
        for (a, b) in lib.controls.iter().zip(&reference) {
            assert!((a - b).amax() <= 1e-12);
        }
        let qp = bifunc_mpc::qp::build_monolithic(&spec, horizon, &x0, &Terminal::Quadratic(qf.clone())).unwrap();
        let sol = solver::solve(&qp, &SolverOptions::default()).unwrap();
        assert!(rel_gap(sol.objective, lib.cost) <= 1e-8, "{} vs {}", sol.objective, lib.cost);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn matches_active_set_enumeration(seed in any::<u64>(), dim in 1usize..=4) {
        let mut r = rng(seed);
        let qp = random_qp(&mut r, dim);
        let sol = solver::solve(&qp, &SolverOptions::default()).unwrap();
        prop_assert_eq!(sol.status, Status::Optimal);
        let (z, f) = active_set_oracle(&qp).unwrap();
        prop_assert!((&sol.z - z).amax() <= 1e-6);
        prop_assert!(rel_gap(sol.objective, f) <= 1e-6);
    }

    #[test]
    fn kkt_residuals_small(seed in any::<u64>(), dim in 1usize..=10) {
        let mut r = rng(seed);
        let qp = random_qp(&mut r, dim);
        let sol = solver::solve(&qp, &SolverOptions::default()).unwrap();
        prop_assert_eq!(sol.status, Status::Optimal);
        let (s, p, c) = kkt_residuals(&qp, &sol);
        prop_assert!(s.max(p).max(c) <= 1e-6, "{:e} {:e} {:e}", s, p, c);
    }

    #[test]
    fn infeasibility_is_certified(seed in any::<u64>(), dim in 1usize..=8) {
        let mut r = rng(seed);
        let qp = random_infeasible_qp(&mut r, dim);
        if dim <= 4 {
            prop_assert!(active_set_oracle(&qp).is_none());
        }
        let sol = solver::solve(&qp, &SolverOptions::default()).unwrap();
        prop_assert_eq!(sol.status, Status::PrimalInfeasible);
        let cert = sol.certificate.unwrap();
        prop_assert!(farkas_residual(&qp, &cert).unwrap() <= 1e-6);
    }
}
