//! Dense helpers shared by the algebra, the compiler and the solver.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

pub const SYMMETRY_TOL: f64 = 1e-12;
pub const PSD_TOL: f64 = 1e-9;

/// Checks symmetry and positive semidefiniteness, returning a cleaned copy.
///
/// The result is exactly symmetric, and eigenvalues in `[-PSD_TOL, 0)` are
/// clamped to zero.
pub fn psd_project(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch {
            context: "square matrix",
            expected: n,
            found: m.ncols(),
        });
    }
    if n == 0 {
        return Ok(m.clone());
    }
    let scale = m.amax().max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > SYMMETRY_TOL * scale {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym.clone());
    let min = eig.eigenvalues.min();
    if min < -PSD_TOL * scale {
        return Err(Error::NotPsd { min_eigenvalue: min });
    }
    if min >= 0.0 {
        return Ok(sym);
    }
    let clamped = eig.eigenvalues.map(|v| v.max(0.0));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clamped) * eig.eigenvectors.transpose();
    Ok((&rebuilt + rebuilt.transpose()) * 0.5)
}

/// Scatters the columns of `src` into a matrix with `total` columns,
/// column `j` of `src` landing at `map[j]`.
pub fn scatter_cols(src: &DMatrix<f64>, map: &[usize], total: usize) -> DMatrix<f64> {
    debug_assert_eq!(src.ncols(), map.len());
    let mut out = DMatrix::zeros(src.nrows(), total);
    for (j, &dst) in map.iter().enumerate() {
        for i in 0..src.nrows() {
            out[(i, dst)] += src[(i, j)];
        }
    }
    out
}

/// Scatters a symmetric matrix into `total × total` along `map`.
pub fn scatter_sym(src: &DMatrix<f64>, map: &[usize], total: usize) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(total, total);
    for (a, &ia) in map.iter().enumerate() {
        for (b, &ib) in map.iter().enumerate() {
            out[(ia, ib)] += src[(a, b)];
        }
    }
    out
}

pub fn scatter_vec(src: &DVector<f64>, map: &[usize], total: usize) -> DVector<f64> {
    let mut out = DVector::zeros(total);
    for (j, &dst) in map.iter().enumerate() {
        out[dst] += src[j];
    }
    out
}

pub fn vstack(top: &DMatrix<f64>, bottom: &DMatrix<f64>) -> DMatrix<f64> {
    debug_assert_eq!(top.ncols(), bottom.ncols());
    let cols = top.ncols();
    let mut out = DMatrix::zeros(top.nrows() + bottom.nrows(), cols);
    out.view_mut((0, 0), (top.nrows(), cols)).copy_from(top);
    out.view_mut((top.nrows(), 0), (bottom.nrows(), cols)).copy_from(bottom);
    out
}

pub fn vconcat(top: &DVector<f64>, bottom: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(top.len() + bottom.len(), top.iter().chain(bottom.iter()).copied())
}

pub fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |acc, x| acc.max(x.abs()))
}

pub fn all_finite_mat(m: &DMatrix<f64>) -> bool {
    m.iter().all(|v| v.is_finite())
}

pub fn all_finite_vec(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}

/// Builds a dense matrix from row-major nested vectors.
pub fn from_rows(rows: &[Vec<f64>], ncols_if_empty: usize) -> Result<DMatrix<f64>> {
    if rows.is_empty() {
        return Ok(DMatrix::zeros(0, ncols_if_empty));
    }
    let ncols = rows[0].len();
    for r in rows {
        if r.len() != ncols {
            return Err(Error::Schema(format!(
                "ragged matrix: row of length {} where {} expected",
                r.len(),
                ncols
            )));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
