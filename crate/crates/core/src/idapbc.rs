//! Total energy shaping controllers.
//!
//! The closed loop targets `H_d = ½ pᵀM_d⁻¹p + V_d(q)` with interconnection
//! `Λ = Λ_k + GΛ_uanGᵀ − GK_vGᵀ`. Three laws are provided:
//!
//! * [`u_ida`]: the plain law with `Λ_uan = 0`;
//! * [`u_th1`]: `Λ_uan` chosen by [`linfshape::solve`] to minimize the
//!   ∞-norm of the overall kinetic shaping term;
//! * [`u_reduced`]: whichever of the two has the smaller `‖u‖∞`.
//!
//! `Λ_uan` only enters through `G`, so `G⊥` annihilates it and the matching
//! conditions solved for `Λ_k` are untouched.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{
    inf_norm, inverse, left_pseudo_inverse, min_sym_eigenvalue, spd_inverse, Matrix, Vector,
};
use crate::linfshape;
use crate::mechmodel::{
    central_gradient, central_partials, grad_q_quadratic, MechanicalModel, PendubotParams,
    QuadraticForm, State,
};

pub const DEFAULT_X_THRESHOLD: f64 = 1e-8;
pub const DEFAULT_P_THRESHOLD: f64 = 1e-6;

/// Desired closed-loop energy and interconnection.
pub trait ShapingDesign: Send + Sync {
    fn mass_d(&self, q: &Vector) -> Matrix;

    /// `∂M_d/∂qᵢ`. Defaults to central finite differences.
    fn mass_d_partials(&self, q: &Vector) -> Vec<Matrix> {
        central_partials(|q| self.mass_d(q), q)
    }

    fn potential_d(&self, q: &Vector) -> f64;

    /// `∇V_d(q)`. Defaults to central finite differences.
    fn potential_d_grad(&self, q: &Vector) -> Vector {
        central_gradient(|q| self.potential_d(q), q)
    }

    /// `Λ_k(q, p)` solving the kinetic matching condition.
    fn lambda_k(&self, model: &dyn MechanicalModel, s: &State) -> Result<Matrix>;

    /// Damping injection `K_v` (m×m).
    fn damping(&self) -> &Matrix;

    /// Desired equilibrium configuration.
    fn q_star(&self) -> &Vector;
}

/// `H_d = ½ pᵀM_d⁻¹p + V_d(q)`.
pub fn desired_hamiltonian(design: &dyn ShapingDesign, s: &State) -> Result<f64> {
    let md = design.mass_d(&s.q);
    let chol = md.cholesky().ok_or_else(|| Error::NotPositiveDefinite {
        what: "desired mass matrix",
        q: s.q.iter().copied().collect(),
    })?;
    Ok(0.5 * s.p.dot(&chol.solve(&s.p)) + design.potential_d(&s.q))
}

/// Which law produced a control sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Branch {
    Ida,
    Th1,
}

impl fmt::Display for Branch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(match self {
            Branch::Ida => "IDA",
            Branch::Th1 => "TH1",
        })
    }
}

/// Controller selector used by the simulator and CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Controller {
    Ida,
    Th1,
    Reduced,
}

impl Controller {
    pub const ALL: [Controller; 3] = [Controller::Ida, Controller::Th1, Controller::Reduced];

    pub fn as_str(&self) -> &'static str {
        match self {
            Controller::Ida => "ida",
            Controller::Th1 => "th1",
            Controller::Reduced => "reduced",
        }
    }

    pub fn evaluate(
        &self,
        model: &dyn MechanicalModel,
        design: &dyn ShapingDesign,
        s: &State,
        x_threshold: f64,
    ) -> Result<ControlBreakdown> {
        match self {
            Controller::Ida => u_ida(model, design, s),
            Controller::Th1 => u_th1(model, design, s, x_threshold),
            Controller::Reduced => u_reduced(model, design, s, x_threshold),
        }
    }
}

impl fmt::Display for Controller {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for Controller {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "ida" => Ok(Controller::Ida),
            "th1" => Ok(Controller::Th1),
            "reduced" => Ok(Controller::Reduced),
            other => Err(format!(
                "unknown controller `{other}` (expected ida, th1 or reduced)"
            )),
        }
    }
}

/// One control evaluation split into its shaping components.
///
/// `u = u_ki + u_pe + u_damp + Λ_uan·x` with `x = GᵀM_d⁻¹p`, and
/// `u_ovki = u_ki + Λ_uan·x`. `phi` is `‖u_ovki‖∞`, which equals the
/// optimal value of the ∞-norm problem on the TH1 branch.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlBreakdown {
    pub u: Vector,
    pub u_ki: Vector,
    pub u_pe: Vector,
    pub u_damp: Vector,
    pub u_ovki: Vector,
    pub phi: f64,
    pub lambda_uan: Matrix,
    pub selected: Branch,
}

impl ControlBreakdown {
    pub fn u_inf(&self) -> f64 {
        inf_norm(&self.u)
    }
}

/// Quantities shared by every term of the control law at one state.
struct Terms {
    g: Matrix,
    g_pinv: Matrix,
    /// `M_d M⁻¹`
    md_minv: Matrix,
    /// `∇ₚH_d = M_d⁻¹p`
    y: Vector,
    /// `∇_q(pᵀM⁻¹p)`
    grad_pmp: Vector,
    /// `∇_q(pᵀM_d⁻¹p)`
    grad_pmdp: Vector,
}

impl Terms {
    fn new(model: &dyn MechanicalModel, design: &dyn ShapingDesign, s: &State) -> Result<Self> {
        let n = model.dof();
        if s.q.len() != n || s.p.len() != n {
            return Err(Error::Dimension(format!(
                "state of size ({}, {}) for a model with {n} degrees of freedom",
                s.q.len(),
                s.p.len()
            )));
        }
        let g = model.input_map();
        let g_pinv = left_pseudo_inverse(&g)?;
        let mass = model.mass(&s.q);
        let minv = spd_inverse(&mass, "mass matrix", &s.q)?;
        let md = design.mass_d(&s.q);
        let mdinv = inverse(&md, "desired mass matrix", &s.q)?;
        let y = &mdinv * &s.p;
        let x = &minv * &s.p;
        let grad_pmp = Vector::from_iterator(
            n,
            model
                .mass_partials(&s.q)
                .iter()
                .map(|dm| -x.dot(&(dm * &x))),
        );
        let grad_pmdp = Vector::from_iterator(
            n,
            design
                .mass_d_partials(&s.q)
                .iter()
                .map(|dm| -y.dot(&(dm * &y))),
        );
        let md_minv = &md * &minv;
        Ok(Self {
            g,
            g_pinv,
            md_minv,
            y,
            grad_pmp,
            grad_pmdp,
        })
    }

    /// `∇_qK − M_dM⁻¹∇_qK_d + Λ_k ∇ₚH_d` before projection by `G†`.
    fn kinetic_full(&self, lambda_k: &Matrix) -> Vector {
        (&self.grad_pmp - &self.md_minv * &self.grad_pmdp) * 0.5 + lambda_k * &self.y
    }

    fn x(&self) -> Vector {
        self.g.transpose() * &self.y
    }
}

/// Kinetic-energy shaping component
/// `u_ki = G†(∇_qK − M_dM⁻¹∇_qK_d + Λ_k M_d⁻¹p)`.
pub fn u_kinetic(
    model: &dyn MechanicalModel,
    design: &dyn ShapingDesign,
    s: &State,
) -> Result<Vector> {
    let t = Terms::new(model, design, s)?;
    let lambda_k = design.lambda_k(model, s)?;
    Ok(&t.g_pinv * t.kinetic_full(&lambda_k))
}

/// Plain interconnection and damping assignment law.
pub fn u_ida(
    model: &dyn MechanicalModel,
    design: &dyn ShapingDesign,
    s: &State,
) -> Result<ControlBreakdown> {
    let t = Terms::new(model, design, s)?;
    spd_inverse(&design.mass_d(&s.q), "desired mass matrix", &s.q)?;
    check_damping_dims(model, design)?;
    let lambda_k = design.lambda_k(model, s)?;
    let u_ki = &t.g_pinv * t.kinetic_full(&lambda_k);
    let u_pe =
        &t.g_pinv * (model.potential_grad(&s.q) - &t.md_minv * design.potential_d_grad(&s.q));
    let u_damp = -(design.damping() * t.x());
    let u = &u_ki + &u_pe + &u_damp;
    let m = model.actuators();
    Ok(ControlBreakdown {
        phi: inf_norm(&u_ki),
        u_ovki: u_ki.clone(),
        u,
        u_ki,
        u_pe,
        u_damp,
        lambda_uan: Matrix::zeros(m, m),
        selected: Branch::Ida,
    })
}

/// Law with `Λ_uan` minimizing `‖u_ki + Λ_uan x‖∞` under
/// `Λ_uan + Λ_uanᵀ ⪯ 0`. Falls back to [`u_ida`] when `‖x‖₂ ≤ x_threshold`.
pub fn u_th1(
    model: &dyn MechanicalModel,
    design: &dyn ShapingDesign,
    s: &State,
    x_threshold: f64,
) -> Result<ControlBreakdown> {
    let base = u_ida(model, design, s)?;
    let t = Terms::new(model, design, s)?;
    let x = t.x();
    if x.norm() <= x_threshold.max(linfshape::ZERO_DIRECTION) {
        return Ok(base);
    }
    let b = -&base.u_ki;
    let sol = linfshape::solve(&x, &b)?;
    let lambda_uan = sol.matrix();
    let extra = &lambda_uan * &x;
    Ok(ControlBreakdown {
        u: &base.u + &extra,
        u_ovki: &base.u_ki + &extra,
        phi: sol.phi,
        lambda_uan,
        selected: Branch::Th1,
        ..base
    })
}

/// Whole-vector selection between [`u_ida`] and [`u_th1`] by smaller
/// `‖u‖∞`; ties keep the plain law.
pub fn u_reduced(
    model: &dyn MechanicalModel,
    design: &dyn ShapingDesign,
    s: &State,
    x_threshold: f64,
) -> Result<ControlBreakdown> {
    let ida = u_ida(model, design, s)?;
    let th1 = u_th1(model, design, s, x_threshold)?;
    Ok(if th1.u_inf() < ida.u_inf() { th1 } else { ida })
}

/// Left-hand sides of the kinetic and potential matching conditions,
/// projected by `G⊥`.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeResiduals {
    pub kinetic: Vector,
    pub potential: Vector,
}

impl PdeResiduals {
    pub fn max_abs(&self) -> f64 {
        inf_norm(&self.kinetic).max(inf_norm(&self.potential))
    }
}

/// Matching residuals with `Λ = Λ_k`. Empty for fully actuated models.
pub fn pde_residuals(
    model: &dyn MechanicalModel,
    design: &dyn ShapingDesign,
    s: &State,
) -> Result<PdeResiduals> {
    let n = model.dof();
    pde_residuals_with(model, design, s, &Matrix::zeros(n, n))
}

/// Matching residuals with `Λ = Λ_k + extra`.
pub fn pde_residuals_with(
    model: &dyn MechanicalModel,
    design: &dyn ShapingDesign,
    s: &State,
    extra: &Matrix,
) -> Result<PdeResiduals> {
    let perp = model.annihilator();
    if perp.nrows() == 0 {
        return Ok(PdeResiduals {
            kinetic: Vector::zeros(0),
            potential: Vector::zeros(0),
        });
    }
    let t = Terms::new(model, design, s)?;
    let lambda = design.lambda_k(model, s)? + extra;
    let kinetic = &perp * (&t.grad_pmp - &t.md_minv * &t.grad_pmdp + (lambda * &t.y) * 2.0);
    let potential =
        &perp * (model.potential_grad(&s.q) - &t.md_minv * design.potential_d_grad(&s.q));
    Ok(PdeResiduals { kinetic, potential })
}

/// `Λ = Λ_k + GΛ_uanGᵀ − GK_vGᵀ`.
pub fn assembled_lambda(
    model: &dyn MechanicalModel,
    design: &dyn ShapingDesign,
    s: &State,
    lambda_uan: &Matrix,
) -> Result<Matrix> {
    check_damping_dims(model, design)?;
    let g = model.input_map();
    let gt = g.transpose();
    Ok(design.lambda_k(model, s)? + &g * lambda_uan * &gt - &g * design.damping() * &gt)
}

/// Gyroscopic `Λ_k = [[0, j], [−j, 0]]` solving the kinetic matching
/// condition of a two-degree-of-freedom, single-input system.
///
/// `j = κ/(2d)` with `κ = G⊥{∇_q(pᵀM⁻¹p) − M_dM⁻¹∇_q(pᵀM_d⁻¹p)}` and
/// `d = G⊥₂y₁ − G⊥₁y₂`, `y = M_d⁻¹p` (so `d = y₁` for `G⊥ = (0, 1)`).
/// Returns `j = 0` when `|d| < p_threshold`.
pub fn pendubot_j2(
    model: &dyn MechanicalModel,
    design: &dyn ShapingDesign,
    s: &State,
    p_threshold: f64,
) -> Result<Matrix> {
    if model.dof() != 2 || model.actuators() != 1 {
        return Err(Error::Dimension(format!(
            "gyroscopic construction needs n = 2, m = 1 (got n = {}, m = {})",
            model.dof(),
            model.actuators()
        )));
    }
    let mass = model.mass(&s.q);
    let md = design.mass_d(&s.q);
    let grad_pmp = grad_q_quadratic(
        &mass,
        &model.mass_partials(&s.q),
        &s.p,
        QuadraticForm::Inverse,
    )?;
    let grad_pmdp = grad_q_quadratic(
        &md,
        &design.mass_d_partials(&s.q),
        &s.p,
        QuadraticForm::Inverse,
    )?;
    let minv = spd_inverse(&mass, "mass matrix", &s.q)?;
    let y = inverse(&md, "desired mass matrix", &s.q)? * &s.p;
    let perp = model.annihilator();
    let kappa = (&perp * (grad_pmp - &md * minv * grad_pmdp))[0];
    let d = perp[(0, 1)] * y[0] - perp[(0, 0)] * y[1];
    let j = if d.abs() < p_threshold {
        0.0
    } else {
        kappa / (2.0 * d)
    };
    Ok(Matrix::from_row_slice(2, 2, &[0.0, j, -j, 0.0]))
}

fn check_damping_dims(model: &dyn MechanicalModel, design: &dyn ShapingDesign) -> Result<()> {
    let m = model.actuators();
    if design.damping().shape() != (m, m) {
        return Err(Error::Dimension(format!(
            "damping is {:?}, expected ({m}, {m})",
            design.damping().shape()
        )));
    }
    Ok(())
}

/// Checks the static design invariants: dimensions, `K_v ≻ 0`,
/// `M_d(q*) ≻ 0`, `∇V_d(q*) = 0` and a positive semidefinite Hessian of
/// `V_d` at `q*`.
pub fn validate_design(model: &dyn MechanicalModel, design: &dyn ShapingDesign) -> Result<()> {
    let n = model.dof();
    let qs = design.q_star();
    if qs.len() != n {
        return Err(Error::Dimension(format!(
            "q* has length {}, expected {n}",
            qs.len()
        )));
    }
    check_damping_dims(model, design)?;
    let kv = design.damping();
    if (kv - kv.transpose()).amax() > 1e-12 || min_sym_eigenvalue(kv) <= 0.0 {
        return Err(Error::DesignInvariant(format!(
            "damping K_v must be symmetric positive definite (min eigenvalue {:e})",
            min_sym_eigenvalue(kv)
        )));
    }
    let md = design.mass_d(qs);
    if md.shape() != (n, n) || min_sym_eigenvalue(&md) <= 0.0 {
        return Err(Error::DesignInvariant(
            "M_d(q*) is not positive definite".into(),
        ));
    }
    let grad = design.potential_d_grad(qs);
    if grad.amax() > 1e-9 {
        return Err(Error::DesignInvariant(format!(
            "∇V_d(q*) = {:?} does not vanish",
            grad.as_slice()
        )));
    }
    let hess = potential_d_hessian(design, qs);
    let scale = hess.amax().max(1.0);
    if min_sym_eigenvalue(&hess) < -1e-6 * scale {
        return Err(Error::DesignInvariant(format!(
            "V_d has no local minimum at q* (Hessian min eigenvalue {:e})",
            min_sym_eigenvalue(&hess)
        )));
    }
    Ok(())
}

/// Finite-difference Hessian of `V_d`, symmetrized.
pub fn potential_d_hessian(design: &dyn ShapingDesign, q: &Vector) -> Matrix {
    let n = q.len();
    let mut h = Matrix::zeros(n, n);
    for j in 0..n {
        let col = central_gradient(|qq| design.potential_d_grad(qq)[j], q);
        h.set_row(j, &col.transpose());
    }
    (&h + h.transpose()) * 0.5
}

/// Gains of the Pendubot upright design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendubotGains {
    pub rho: f64,
    pub k3: f64,
    pub kp: f64,
    pub kv: f64,
}

impl Default for PendubotGains {
    fn default() -> Self {
        Self {
            rho: 10.0,
            k3: 0.5,
            kp: 10.0,
            kv: 30.0,
        }
    }
}

/// Pendubot design around the upright equilibrium `q* = (π, 0)`:
///
/// ```text
/// M_d = k3 [[ρ, c1 − c2], [c1 − c2, −c2 + c3 cos q2]]
/// V_d = (c5 g / k3)(cos(q1 + q2) + 1) + (kp/2)(q2 + 2q1 − 2π)²
/// ```
///
/// `Λ_k` is the gyroscopic solution from [`pendubot_j2`].
#[derive(Debug, Clone, PartialEq)]
pub struct PendubotDesign {
    pub params: PendubotParams,
    pub gains: PendubotGains,
    pub p_threshold: f64,
    damping: Matrix,
    q_star: Vector,
}

impl PendubotDesign {
    pub fn new(params: PendubotParams, gains: PendubotGains, p_threshold: f64) -> Result<Self> {
        if [gains.rho, gains.k3, gains.kp, gains.kv]
            .iter()
            .any(|x| !x.is_finite())
            || gains.k3 == 0.0
        {
            return Err(Error::InvalidParameters(format!(
                "unusable Pendubot gains {gains:?}"
            )));
        }
        Ok(Self {
            params,
            gains,
            p_threshold,
            damping: Matrix::from_element(1, 1, gains.kv),
            q_star: Vector::from_vec(vec![PI, 0.0]),
        })
    }
}

impl ShapingDesign for PendubotDesign {
    fn mass_d(&self, q: &Vector) -> Matrix {
        let c = &self.params;
        let k3 = self.gains.k3;
        let off = k3 * (c.c1 - c.c2);
        Matrix::from_row_slice(
            2,
            2,
            &[
                k3 * self.gains.rho,
                off,
                off,
                k3 * (-c.c2 + c.c3 * q[1].cos()),
            ],
        )
    }

    fn mass_d_partials(&self, q: &Vector) -> Vec<Matrix> {
        let mut d2 = Matrix::zeros(2, 2);
        d2[(1, 1)] = -self.gains.k3 * self.params.c3 * q[1].sin();
        vec![Matrix::zeros(2, 2), d2]
    }

    fn potential_d(&self, q: &Vector) -> f64 {
        let c = &self.params;
        let z = q[1] + 2.0 * q[0] - 2.0 * PI;
        c.c5 * c.g / self.gains.k3 * ((q[0] + q[1]).cos() + 1.0) + 0.5 * self.gains.kp * z * z
    }

    fn potential_d_grad(&self, q: &Vector) -> Vector {
        let c = &self.params;
        let z = q[1] + 2.0 * q[0] - 2.0 * PI;
        let s = -c.c5 * c.g / self.gains.k3 * (q[0] + q[1]).sin();
        Vector::from_vec(vec![s + 2.0 * self.gains.kp * z, s + self.gains.kp * z])
    }

    fn lambda_k(&self, model: &dyn MechanicalModel, s: &State) -> Result<Matrix> {
        pendubot_j2(model, self, s, self.p_threshold)
    }

    fn damping(&self) -> &Matrix {
        &self.damping
    }

    fn q_star(&self) -> &Vector {
        &self.q_star
    }
}

/// Fully actuated design with `M_d = κI`,
/// `V_d = Σ kpᵢ ln cosh(qᵢ − qᵢ*)` and no gyroscopic term.
#[derive(Debug, Clone, PartialEq)]
pub struct TouchDesign {
    pub kappa: f64,
    pub kp: Vector,
    damping: Matrix,
    q_star: Vector,
    lambda_k: Matrix,
}

impl TouchDesign {
    pub fn new(kappa: f64, kp: Vector, damping: Matrix, q_star: Vector) -> Result<Self> {
        let n = q_star.len();
        if kp.len() != n {
            return Err(Error::Dimension(format!(
                "kp has length {}, expected {n}",
                kp.len()
            )));
        }
        if !(kappa > 0.0) || kp.iter().any(|&k| !(k > 0.0)) {
            return Err(Error::InvalidParameters(format!(
                "kappa and kp must be positive (kappa = {kappa}, kp = {:?})",
                kp.as_slice()
            )));
        }
        Ok(Self {
            kappa,
            kp,
            damping,
            q_star,
            lambda_k: Matrix::zeros(n, n),
        })
    }

    /// `κ = 0.001`, `kp = 1`, `K_d = 0.3 I`, `q* = (0.5, π/4, −0.5)`.
    pub fn nominal() -> Self {
        Self::new(
            0.001,
            Vector::from_element(3, 1.0),
            Matrix::identity(3, 3) * 0.3,
            Vector::from_vec(vec![0.5, PI / 4.0, -0.5]),
        )
        .expect("nominal Touch design is valid")
    }
}

fn log_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

impl ShapingDesign for TouchDesign {
    fn mass_d(&self, q: &Vector) -> Matrix {
        Matrix::identity(q.len(), q.len()) * self.kappa
    }

    fn mass_d_partials(&self, q: &Vector) -> Vec<Matrix> {
        vec![Matrix::zeros(q.len(), q.len()); q.len()]
    }

    fn potential_d(&self, q: &Vector) -> f64 {
        q.iter()
            .zip(self.q_star.iter())
            .zip(self.kp.iter())
            .map(|((qi, qs), k)| k * log_cosh(qi - qs))
            .sum()
    }

    fn potential_d_grad(&self, q: &Vector) -> Vector {
        Vector::from_iterator(
            q.len(),
            q.iter()
                .zip(self.q_star.iter())
                .zip(self.kp.iter())
                .map(|((qi, qs), k)| k * (qi - qs).tanh()),
        )
    }

    fn lambda_k(&self, _model: &dyn MechanicalModel, _s: &State) -> Result<Matrix> {
        Ok(self.lambda_k.clone())
    }

    fn damping(&self) -> &Matrix {
        &self.damping
    }

    fn q_star(&self) -> &Vector {
        &self.q_star
    }
}
