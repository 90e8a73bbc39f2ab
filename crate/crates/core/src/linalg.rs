//! Small dense helpers shared by the model, solver and controller code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

pub type Vector = DVector<f64>;
pub type Matrix = DMatrix<f64>;

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(m: &Matrix, what: &'static str, q: &Vector) -> Result<Matrix> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::NotPositiveDefinite {
            what,
            q: q.iter().copied().collect(),
        })
}

/// General inverse; fails only on (numerically) singular input.
pub fn inverse(m: &Matrix, what: &'static str, q: &Vector) -> Result<Matrix> {
    m.clone().try_inverse().ok_or_else(|| Error::Singular {
        what,
        q: q.iter().copied().collect(),
    })
}

/// Largest eigenvalue of the symmetric part `(a + aᵀ)/2`.
pub fn max_sym_eigenvalue(a: &Matrix) -> f64 {
    if a.nrows() == 0 {
        return f64::NEG_INFINITY;
    }
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest eigenvalue of the symmetric part `(a + aᵀ)/2`.
pub fn min_sym_eigenvalue(a: &Matrix) -> f64 {
    if a.nrows() == 0 {
        return f64::INFINITY;
    }
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn inf_norm(v: &Vector) -> f64 {
    v.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

pub fn l1_norm(v: &Vector) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

/// Left pseudo-inverse `(GᵀG)⁻¹Gᵀ` of a full-column-rank input map.
pub fn left_pseudo_inverse(g: &Matrix) -> Result<Matrix> {
    let gtg = g.transpose() * g;
    let inv = gtg.try_inverse().ok_or_else(|| Error::Singular {
        what: "GᵀG",
        q: Vec::new(),
    })?;
    Ok(inv * g.transpose())
}

/// Central difference step used by the finite-difference fallbacks.
pub(crate) fn fd_step(qi: f64) -> f64 {
    1e-6 * qi.abs().max(1.0)
}
