use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct LqrSolution {
    /// `u_0 … u_{N−1}`.
    pub controls: Vec<DVector<f64>>,
    /// `x_0 … x_N`.
    pub states: Vec<DVector<f64>>,
    /// `Σ xᵀQx + uᵀRu` over the horizon plus `x_Nᵀ Q_f x_N`.
    pub cost: f64,
}

/// Finite-horizon discrete LQR by backward Riccati recursion and forward
/// rollout from `x0`.
pub fn riccati_lqr(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    qx: &DMatrix<f64>,
    ru: &DMatrix<f64>,
    qf: &DMatrix<f64>,
    horizon: usize,
    x0: &DVector<f64>,
) -> Result<LqrSolution> {
    let n = a.nrows();
    let m = b.ncols();
    let dims = [
        ("A", a.ncols(), n),
        ("B rows", b.nrows(), n),
        ("Qx", qx.nrows(), n),
        ("Qf", qf.nrows(), n),
        ("Ru", ru.nrows(), m),
        ("x0", x0.len(), n),
    ];
    for (context, found, expected) in dims {
        if found != expected {
            return Err(Error::DimensionMismatch { context, expected, found });
        }
    }
    if ru.clone().cholesky().is_none() && m > 0 {
        return Err(Error::SingularRu);
    }

    let mut gains = vec![DMatrix::zeros(m, n); horizon];
    let mut cost_to_go = qf.clone();
    for k in (0..horizon).rev() {
        let btp = b.transpose() * &cost_to_go;
        let gram = ru + &btp * b;
        let gain = gram.lu().solve(&(&btp * a)).ok_or(Error::SingularRu)?;
        let next = qx + a.transpose() * &cost_to_go * a - a.transpose() * &cost_to_go * b * &gain;
        cost_to_go = (&next + next.transpose()) * 0.5;
        gains[k] = gain;
    }

    let mut states = vec![x0.clone()];
    let mut controls = Vec::with_capacity(horizon);
    let mut cost = 0.0;
    for gain in &gains {
        let x = states.last().expect("rollout starts from x0");
        let u = -(gain * x);
        cost += x.dot(&(qx * x)) + u.dot(&(ru * &u));
        let next = a * x + b * &u;
        controls.push(u);
        states.push(next);
    }
    let xn = states.last().expect("rollout starts from x0");
    cost += xn.dot(&(qf * xn));
    Ok(LqrSolution { controls, states, cost })
}
