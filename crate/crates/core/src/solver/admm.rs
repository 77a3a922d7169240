use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use super::{certificate, Solution, SolverOptions, Standard, Status};
use crate::linalg::inf_norm;

const RUIZ_ITERS: usize = 25;
const SCALE_MIN: f64 = 1e-4;
const SCALE_MAX: f64 = 1e4;
const RHO_MIN: f64 = 1e-6;
const RHO_MAX: f64 = 1e6;
const RHO_EQ_FACTOR: f64 = 1e3;
const CHECK_EVERY: usize = 5;
const ADAPT_EVERY: usize = 25;
const ADAPT_TRIGGER: f64 = 5.0;

/// Ruiz-equilibrated copy of the problem.
struct Scaled {
    p: DMatrix<f64>,
    q: DVector<f64>,
    c: DMatrix<f64>,
    l: DVector<f64>,
    u: DVector<f64>,
    d: DVector<f64>,
    e: DVector<f64>,
    cost: f64,
}

fn clamp_scale(norm: f64) -> f64 {
    if norm < SCALE_MIN {
        1.0
    } else {
        (1.0 / norm.sqrt()).clamp(SCALE_MIN, SCALE_MAX)
    }
}

fn equilibrate(prob: &Standard) -> Scaled {
    let n = prob.n();
    let m = prob.m();
    let mut p = prob.p.clone();
    let mut q = prob.q.clone();
    let mut c = prob.c.clone();
    let mut d = DVector::from_element(n, 1.0);
    let mut e = DVector::from_element(m, 1.0);

    for _ in 0..RUIZ_ITERS {
        let dd = DVector::from_fn(n, |j, _| {
            let pn = p.column(j).amax();
            let cn = if m > 0 { c.column(j).amax() } else { 0.0 };
            let step = clamp_scale(pn.max(cn));
            (d[j] * step).clamp(SCALE_MIN, SCALE_MAX) / d[j]
        });
        let de = DVector::from_fn(m, |i, _| {
            let step = clamp_scale(c.row(i).amax());
            (e[i] * step).clamp(SCALE_MIN, SCALE_MAX) / e[i]
        });
        for j in 0..n {
            for i in 0..n {
                p[(i, j)] *= dd[i] * dd[j];
            }
            for i in 0..m {
                c[(i, j)] *= de[i] * dd[j];
            }
            q[j] *= dd[j];
        }
        d.component_mul_assign(&dd);
        e.component_mul_assign(&de);
    }

    // Objective normalization, applied once after equilibration.
    let mean_p = (0..n).map(|j| p.column(j).amax()).sum::<f64>() / n as f64;
    let norm = mean_p.max(inf_norm(&q));
    let cost = if norm < SCALE_MIN { 1.0 } else { (1.0 / norm).clamp(SCALE_MIN, SCALE_MAX) };
    p *= cost;
    q *= cost;
    let l = DVector::from_fn(m, |i, _| prob.l[i] * e[i]);
    let u = DVector::from_fn(m, |i, _| prob.u[i] * e[i]);
    Scaled { p, q, c, l, u, d, e, cost }
}

struct Factor {
    chol: Cholesky<f64, Dyn>,
    rho_vec: DVector<f64>,
}

fn factor(s: &Scaled, rho: f64, sigma: f64) -> Factor {
    let n = s.q.len();
    let m = s.l.len();
    let rho_vec = DVector::from_fn(m, |i, _| {
        if s.l[i] == s.u[i] {
            RHO_EQ_FACTOR * rho
        } else {
            rho
        }
    });
    let mut k = s.p.clone();
    for i in 0..n {
        k[(i, i)] += sigma;
    }
    if m > 0 {
        let mut rc = s.c.clone();
        for i in 0..m {
            rc.row_mut(i).scale_mut(rho_vec[i]);
        }
        k += s.c.transpose() * rc;
    }
    let k = (&k + k.transpose()) * 0.5;
    let chol = Cholesky::new(k).expect("P + σI + CᵀρC is positive definite for σ > 0");
    Factor { chol, rho_vec }
}

pub(super) fn run(prob: &Standard, opts: &SolverOptions) -> Solution {
    let n = prob.n();
    let m = prob.m();
    let s = equilibrate(prob);
    let ct = s.c.transpose();
    let mut rho = opts.rho;
    let mut fac = factor(&s, rho, opts.sigma);

    let mut x: DVector<f64> = DVector::zeros(n);
    let mut z: DVector<f64> = DVector::zeros(m);
    let mut y: DVector<f64> = DVector::zeros(m);
    let alpha = opts.alpha;

    let unscale = |x: &DVector<f64>, y: &DVector<f64>| {
        let xu = x.component_mul(&s.d);
        let yu = y.component_mul(&s.e) / s.cost;
        (xu, yu)
    };

    let mut iter = 0;
    let mut status = Status::MaxIter;
    let mut certificate = None;
    while iter < opts.max_iter {
        iter += 1;
        let rz = DVector::from_fn(m, |i, _| fac.rho_vec[i] * z[i] - y[i]);
        let rhs = &x * opts.sigma - &s.q + &ct * rz;
        let x_tilde = fac.chol.solve(&rhs);
        let z_tilde = &s.c * &x_tilde;
        let x_new = &x_tilde * alpha + &x * (1.0 - alpha);
        let z_relaxed = &z_tilde * alpha + &z * (1.0 - alpha);
        let z_new = DVector::from_fn(m, |i, _| {
            (z_relaxed[i] + y[i] / fac.rho_vec[i]).clamp(s.l[i], s.u[i])
        });
        let y_new = DVector::from_fn(m, |i, _| y[i] + fac.rho_vec[i] * (z_relaxed[i] - z_new[i]));
        let delta_x = &x_new - &x;
        let delta_y = &y_new - &y;
        x = x_new;
        z = z_new;
        y = y_new;

        let checking = iter % CHECK_EVERY == 0 || iter == opts.max_iter;
        if !checking {
            continue;
        }
        let (xu, yu) = unscale(&x, &y);
        let zu = z.component_div(&s.e);
        let cx = &prob.c * &xu;
        let px = &prob.p * &xu;
        let cty = prob.c.transpose() * &yu;
        let prim = inf_norm(&(&cx - &zu));
        let dual = inf_norm(&(&px + &prob.q + &cty));
        let eps_prim = opts.eps_abs + opts.eps_rel * inf_norm(&cx).max(inf_norm(&zu));
        let eps_dual = opts.eps_abs
            + opts.eps_rel * inf_norm(&px).max(inf_norm(&cty)).max(inf_norm(&prob.q));
        if prim <= eps_prim && dual <= eps_dual {
            status = Status::Optimal;
            break;
        }

        if m > 0 {
            let dyu = delta_y.component_mul(&s.e);
            if let Some(cert) = certificate::primal_candidate(prob, &dyu, opts.eps_prim_inf)
                .and_then(|c| certificate::refine_farkas(prob, &c))
            {
                status = Status::PrimalInfeasible;
                certificate = Some(cert);
                break;
            }
        }
        let dxu = delta_x.component_mul(&s.d);
        if let Some(dir) = certificate::dual_candidate(prob, &dxu, opts.eps_dual_inf)
            .and_then(|d| certificate::refine_ray(prob, &d))
        {
            status = Status::DualInfeasibleOrUnbounded;
            certificate = Some(dir);
            break;
        }

        if opts.adaptive_rho && iter % ADAPT_EVERY == 0 && m > 0 {
            let sx = &s.c * &x;
            let scaled_prim = inf_norm(&(&sx - &z)) / inf_norm(&sx).max(inf_norm(&z)).max(1e-30);
            let spx = &s.p * &x;
            let scty = &ct * &y;
            let scaled_dual = inf_norm(&(&spx + &s.q + &scty))
                / inf_norm(&spx).max(inf_norm(&scty)).max(inf_norm(&s.q)).max(1e-30);
            let ratio = (scaled_prim / scaled_dual.max(1e-30)).sqrt();
            let candidate = (rho * ratio).clamp(RHO_MIN, RHO_MAX);
            if candidate > rho * ADAPT_TRIGGER || candidate < rho / ADAPT_TRIGGER {
                rho = candidate;
                fac = factor(&s, rho, opts.sigma);
            }
        }
    }

    let (xu, yu) = unscale(&x, &y);
    let (primal_res, dual_res) = prob.residuals(&xu, &yu);
    Solution {
        status,
        z: xu,
        y_duals: yu,
        objective: 0.0,
        primal_res,
        dual_res,
        iterations: iter,
        polished: false,
        certificate,
    }
}
