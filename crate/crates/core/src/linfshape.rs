//! Closed-form minimizer of `‖Ax − b‖∞` over matrices with `A + Aᵀ ⪯ 0`.
//!
//! The optimum splits `A = A_s + A_w` into a scaled identity `A_s` carrying
//! `xᵀAx = a_s ≤ 0` and a rank-two skew part `A_w` that moves `Ax` freely
//! inside the hyperplane `xᵀy = 0`. The residual that cannot be removed has
//! equal-magnitude entries aligned with `sign(x)`, and the optimal value is
//! `max(0, xᵀb/‖x‖₁)`.

use crate::error::{Error, Result};
use crate::linalg::{l1_norm, max_sym_eigenvalue, Matrix, Vector};

/// Norms of `x` below this are treated as `x = 0`.
pub const ZERO_DIRECTION: f64 = 1e-12;

/// Optimizer returned by [`solve`].
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSolution {
    /// Symmetric part, `(a_s/‖x‖²)·I`.
    pub sym: Matrix,
    /// Skew-symmetric part, `(v xᵀ − x vᵀ)/‖x‖²`.
    pub skew: Matrix,
    /// `xᵀ A_s x`, always `≤ 0`.
    pub a_s: f64,
    /// Optimal residual `ξ = b − A x`; all nonzero entries share one magnitude.
    pub xi: Vector,
    /// `v = A_w x`, orthogonal to `x`.
    pub v: Vector,
    /// Optimal objective value.
    pub phi: f64,
}

impl ShapeSolution {
    pub fn matrix(&self) -> Matrix {
        &self.sym + &self.skew
    }

    /// `A x − b` evaluated with the assembled matrix.
    pub fn residual(&self, x: &Vector, b: &Vector) -> Vector {
        self.matrix() * x - b
    }
}

fn sign0(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn check_inputs(x: &Vector, b: &Vector) -> Result<()> {
    if x.len() != b.len() || x.is_empty() {
        return Err(Error::Dimension(format!(
            "x has length {} and b has length {}",
            x.len(),
            b.len()
        )));
    }
    if l1_norm(x) < ZERO_DIRECTION || x.norm() < ZERO_DIRECTION {
        return Err(Error::ZeroDirection {
            threshold: ZERO_DIRECTION,
        });
    }
    Ok(())
}

/// Solves `min ‖Ax − b‖∞` subject to `A + Aᵀ ⪯ 0`.
///
/// Coordinates with `xᵢ = 0` get `ξᵢ = 0`.
pub fn solve(x: &Vector, b: &Vector) -> Result<ShapeSolution> {
    check_inputs(x, b)?;
    let n = x.len();
    let x_l1 = l1_norm(x);
    let x_sq = x.norm_squared();
    let xb = x.dot(b);

    let a_s = xb.min(0.0);
    let excess = xb - a_s;
    let level = excess / x_l1;
    let xi = x.map(|xi| sign0(xi) * level);
    let scale = a_s / x_sq;
    let v = b - x * scale - &xi;

    let sym = Matrix::identity(n, n) * scale;
    let mut skew = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let w = (v[i] * x[j] - x[i] * v[j]) / x_sq;
            skew[(i, j)] = w;
            skew[(j, i)] = -w;
        }
    }

    let phi = if xb <= 0.0 { 0.0 } else { xb / x_l1 };
    Ok(ShapeSolution {
        sym,
        skew,
        a_s,
        xi,
        v,
        phi,
    })
}

/// Optimal value of the same problem by bisection on the residual radius.
///
/// `{Ax : A + Aᵀ ⪯ 0} = {y : xᵀy ≤ 0}`, and the ∞-ball of radius `t`
/// around `b` meets that half-space iff `xᵀb − t‖x‖₁ ≤ 0`. Bisection stops
/// once the bracket is narrower than `tol` and returns its upper end.
pub fn oracle_phi(x: &Vector, b: &Vector, tol: f64) -> Result<f64> {
    check_inputs(x, b)?;
    if !(tol > 0.0) {
        return Err(Error::InvalidParameters(format!(
            "bisection tolerance {tol} must be positive"
        )));
    }
    let x_l1 = l1_norm(x);
    let xb = x.dot(b);
    let meets = |t: f64| xb - t * x_l1 <= 0.0;
    if meets(0.0) {
        return Ok(0.0);
    }
    // y = 0 is always feasible, so the radius ‖b‖∞ is too.
    let mut lo = 0.0;
    let mut hi = b.amax();
    while !meets(hi) {
        hi *= 2.0;
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if meets(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// `true` iff the symmetric part of `a` has no eigenvalue above `tol`.
pub fn check_feasible(a: &Matrix, tol: f64) -> bool {
    if !a.is_square() {
        return false;
    }
    max_sym_eigenvalue(a) <= tol
}
