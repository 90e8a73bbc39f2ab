//! Mechanical systems in port-Hamiltonian form.
//!
//! A model supplies the inertia matrix `M(q)` with its partial derivatives,
//! the potential `V(q)` with its gradient, and the constant input map `G`
//! together with a full-rank left annihilator `G⊥`. The plant is
//!
//! ```text
//! q̇ = ∇ₚH = M⁻¹p,    ṗ = −∇_qH + G u,    H = ½ pᵀM⁻¹p + V(q)
//! ```
//!
//! Two catalog models are provided: the Pendubot (two links, first joint
//! actuated) and the three-joint Geomagic Touch haptic arm (fully actuated).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{fd_step, spd_inverse, Matrix, Vector};

/// Gravitational acceleration used by the shipped parameter sets.
pub const GRAVITY: f64 = 9.8;

/// Configuration and momentum of a mechanical system.
#[derive(Debug, Clone, PartialEq)]
pub struct State {
    pub q: Vector,
    pub p: Vector,
}

impl State {
    pub fn new(q: Vector, p: Vector) -> Self {
        Self { q, p }
    }

    /// State at rest in configuration `q`.
    pub fn at_rest(q: Vector) -> Self {
        let p = Vector::zeros(q.len());
        Self { q, p }
    }

    /// State with momentum `p = M(q) q̇`.
    pub fn from_velocity<M: MechanicalModel + ?Sized>(model: &M, q: Vector, qdot: &Vector) -> Self {
        let p = model.mass(&q) * qdot;
        Self { q, p }
    }

    pub fn dof(&self) -> usize {
        self.q.len()
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().chain(self.p.iter()).all(|x| x.is_finite())
    }
}

/// Which quadratic form [`grad_q_quadratic`] differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QuadraticForm {
    /// `pᵀ W(q) p`
    Direct,
    /// `pᵀ W(q)⁻¹ p`
    Inverse,
}

/// A mechanical system `ẋ = (J − R)∇H + gu` with canonical structure.
///
/// Implementations must be pure: evaluation never mutates the model, so
/// one instance can be shared across threads.
pub trait MechanicalModel: Send + Sync {
    fn name(&self) -> &str;

    /// Degrees of freedom `n`.
    fn dof(&self) -> usize;

    /// Number of actuators `m ≤ n`.
    fn actuators(&self) -> usize;

    fn mass(&self, q: &Vector) -> Matrix;

    /// `∂M/∂qᵢ` for `i = 1..n`. Defaults to central finite differences.
    fn mass_partials(&self, q: &Vector) -> Vec<Matrix> {
        central_partials(|q| self.mass(q), q)
    }

    fn potential(&self, q: &Vector) -> f64;

    /// `∇V(q)`. Defaults to central finite differences.
    fn potential_grad(&self, q: &Vector) -> Vector {
        central_gradient(|q| self.potential(q), q)
    }

    /// Input map `G` (n×m).
    fn input_map(&self) -> Matrix;

    /// Left annihilator `G⊥` ((n−m)×n) with `G⊥ G = 0`.
    fn annihilator(&self) -> Matrix;
}

/// Central-difference partial derivatives of a matrix-valued function.
pub fn central_partials<F>(f: F, q: &Vector) -> Vec<Matrix>
where
    F: Fn(&Vector) -> Matrix,
{
    (0..q.len())
        .map(|i| {
            let h = fd_step(q[i]);
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += h;
            qm[i] -= h;
            (f(&qp) - f(&qm)) / (2.0 * h)
        })
        .collect()
}

/// Central-difference gradient of a scalar function.
pub fn central_gradient<F>(f: F, q: &Vector) -> Vector
where
    F: Fn(&Vector) -> f64,
{
    Vector::from_iterator(
        q.len(),
        (0..q.len()).map(|i| {
            let h = fd_step(q[i]);
            let mut qp = q.clone();
            let mut qm = q.clone();
            qp[i] += h;
            qm[i] -= h;
            (f(&qp) - f(&qm)) / (2.0 * h)
        }),
    )
}

/// `H(q, p) = ½ pᵀM⁻¹p + V(q)`.
pub fn hamiltonian<M: MechanicalModel + ?Sized>(model: &M, s: &State) -> Result<f64> {
    let mass = model.mass(&s.q);
    let chol = mass.cholesky().ok_or_else(|| Error::Singular {
        what: "mass matrix",
        q: s.q.iter().copied().collect(),
    })?;
    let v = chol.solve(&s.p);
    Ok(0.5 * s.p.dot(&v) + model.potential(&s.q))
}

/// Gradient with respect to `q` of a quadratic form in `p`.
///
/// Entry `i` is `pᵀ(∂W/∂qᵢ)p` for [`QuadraticForm::Direct`], and
/// `−(W⁻¹p)ᵀ(∂W/∂qᵢ)(W⁻¹p)` for [`QuadraticForm::Inverse`], using
/// `∂(W⁻¹)/∂qᵢ = −W⁻¹(∂W/∂qᵢ)W⁻¹`.
pub fn grad_q_quadratic(
    w: &Matrix,
    w_partials: &[Matrix],
    p: &Vector,
    form: QuadraticForm,
) -> Result<Vector> {
    if w_partials.len() != p.len() || w.nrows() != p.len() {
        return Err(Error::Dimension(format!(
            "quadratic form of size {} with {} partials and p of length {}",
            w.nrows(),
            w_partials.len(),
            p.len()
        )));
    }
    let (y, sign) = match form {
        QuadraticForm::Direct => (p.clone(), 1.0),
        QuadraticForm::Inverse => {
            let y = w.clone().lu().solve(p).ok_or_else(|| Error::Singular {
                what: "quadratic form matrix",
                q: Vec::new(),
            })?;
            (y, -1.0)
        }
    };
    Ok(Vector::from_iterator(
        p.len(),
        w_partials.iter().map(|dw| sign * y.dot(&(dw * &y))),
    ))
}

/// `∇_qH = ½∇_q(pᵀM⁻¹p) + ∇V`.
pub fn hamiltonian_grad_q<M: MechanicalModel + ?Sized>(model: &M, s: &State) -> Result<Vector> {
    let mass = model.mass(&s.q);
    let kin = grad_q_quadratic(
        &mass,
        &model.mass_partials(&s.q),
        &s.p,
        QuadraticForm::Inverse,
    )
    .map_err(|_| singular_mass(s))?;
    Ok(kin * 0.5 + model.potential_grad(&s.q))
}

/// Open-loop vector field: `(q̇, ṗ) = (M⁻¹p, −∇_qH + Gu)`.
pub fn plant_rhs<M: MechanicalModel + ?Sized>(
    model: &M,
    s: &State,
    u: &Vector,
) -> Result<(Vector, Vector)> {
    if u.len() != model.actuators() {
        return Err(Error::Dimension(format!(
            "input of length {} for a model with {} actuators",
            u.len(),
            model.actuators()
        )));
    }
    let mass = model.mass(&s.q);
    let minv = spd_inverse(&mass, "mass matrix", &s.q)?;
    let qdot = &minv * &s.p;
    // reuse M⁻¹p for the kinetic gradient
    let kin = Vector::from_iterator(
        s.dof(),
        model
            .mass_partials(&s.q)
            .iter()
            .map(|dm| -0.5 * qdot.dot(&(dm * &qdot))),
    );
    let pdot = -(kin + model.potential_grad(&s.q)) + model.input_map() * u;
    Ok((qdot, pdot))
}

fn singular_mass(s: &State) -> Error {
    Error::Singular {
        what: "mass matrix",
        q: s.q.iter().copied().collect(),
    }
}

/// Physical description of the Pendubot links.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PendubotPhysical {
    pub m1: f64,
    pub m2: f64,
    pub l1: f64,
    pub lc1: f64,
    pub lc2: f64,
    pub i1: f64,
    pub i2: f64,
    pub g: f64,
}

impl Default for PendubotPhysical {
    /// Uniform 1 kg, 1 m rods.
    fn default() -> Self {
        Self {
            m1: 1.0,
            m2: 1.0,
            l1: 1.0,
            lc1: 0.5,
            lc2: 0.5,
            i1: 1.0 / 12.0,
            i2: 1.0 / 12.0,
            g: GRAVITY,
        }
    }
}

/// Lumped Pendubot constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PendubotParams {
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub g: f64,
}

impl PendubotParams {
    pub fn from_physical(ph: &PendubotPhysical) -> Result<Self> {
        let params = Self {
            c1: ph.i1 + ph.lc1 * ph.lc1 * ph.m1 + ph.l1 * ph.l1 * ph.m2,
            c2: ph.i2 + ph.lc2 * ph.lc2 * ph.m2,
            c3: ph.l1 * ph.lc2 * ph.m2,
            c4: ph.lc1 * ph.m1 + ph.l1 * ph.m2,
            c5: ph.lc2 * ph.m2,
            g: ph.g,
        };
        params.validate()?;
        Ok(params)
    }

    /// `c1, c2 > 0`, `c1·c2 > c3²` (so `M(q) ≻ 0` for every `q2`), `c4, c5 > 0`.
    pub fn validate(&self) -> Result<()> {
        let all = [self.c1, self.c2, self.c3, self.c4, self.c5, self.g];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameters(
                "non-finite Pendubot constant".into(),
            ));
        }
        if self.c1 <= 0.0 || self.c2 <= 0.0 {
            return Err(Error::InvalidParameters(format!(
                "Pendubot requires c1 > 0 and c2 > 0 (c1 = {}, c2 = {})",
                self.c1, self.c2
            )));
        }
        if self.c1 * self.c2 <= self.c3 * self.c3 {
            return Err(Error::InvalidParameters(format!(
                "Pendubot requires c1·c2 > c3² ({} <= {})",
                self.c1 * self.c2,
                self.c3 * self.c3
            )));
        }
        if self.c4 <= 0.0 || self.c5 <= 0.0 {
            return Err(Error::InvalidParameters(format!(
                "Pendubot requires c4 > 0 and c5 > 0 (c4 = {}, c5 = {})",
                self.c4, self.c5
            )));
        }
        Ok(())
    }
}

impl Default for PendubotParams {
    fn default() -> Self {
        Self::from_physical(&PendubotPhysical::default()).expect("default Pendubot is valid")
    }
}

/// Two-link planar arm actuated at the shoulder only. `q = (0, 0)` hangs
/// down, `q = (π, 0)` is the upright configuration.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Pendubot {
    pub params: PendubotParams,
}

impl Pendubot {
    pub fn new(params: PendubotParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }

    /// Upright equilibrium.
    pub fn upright() -> Vector {
        Vector::from_vec(vec![PI, 0.0])
    }
}

impl MechanicalModel for Pendubot {
    fn name(&self) -> &str {
        "pendubot"
    }

    fn dof(&self) -> usize {
        2
    }

    fn actuators(&self) -> usize {
        1
    }

    fn mass(&self, q: &Vector) -> Matrix {
        let c = &self.params;
        let c2q = q[1].cos();
        let off = c.c2 + c.c3 * c2q;
        Matrix::from_row_slice(2, 2, &[c.c1 + c.c2 + 2.0 * c.c3 * c2q, off, off, c.c2])
    }

    fn mass_partials(&self, q: &Vector) -> Vec<Matrix> {
        let s = -self.params.c3 * q[1].sin();
        vec![
            Matrix::zeros(2, 2),
            Matrix::from_row_slice(2, 2, &[2.0 * s, s, s, 0.0]),
        ]
    }

    fn potential(&self, q: &Vector) -> f64 {
        let c = &self.params;
        -c.c4 * c.g * q[0].cos() - c.c5 * c.g * (q[0] + q[1]).cos()
    }

    fn potential_grad(&self, q: &Vector) -> Vector {
        let c = &self.params;
        let s12 = c.c5 * c.g * (q[0] + q[1]).sin();
        Vector::from_vec(vec![c.c4 * c.g * q[0].sin() + s12, s12])
    }

    fn input_map(&self) -> Matrix {
        Matrix::from_row_slice(2, 1, &[1.0, 0.0])
    }

    fn annihilator(&self) -> Matrix {
        Matrix::from_row_slice(1, 2, &[0.0, 1.0])
    }
}

/// Dynamic parameters of the three-joint haptic arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TouchParams {
    pub phi: [f64; 5],
    pub g: f64,
}

impl Default for TouchParams {
    /// Nominal identified values.
    fn default() -> Self {
        Self {
            phi: [0.00251729, 0.00108246, 0.00137408, 0.00449158, 0.00534505],
            g: GRAVITY,
        }
    }
}

impl TouchParams {
    pub fn validate(&self) -> Result<()> {
        if self
            .phi
            .iter()
            .chain([self.g].iter())
            .any(|x| !x.is_finite())
        {
            return Err(Error::InvalidParameters(
                "non-finite Touch parameter".into(),
            ));
        }
        if self.phi[..3].iter().any(|&x| x <= 0.0) {
            return Err(Error::InvalidParameters(format!(
                "Touch inertia parameters phi1..phi3 must be positive, got {:?}",
                &self.phi[..3]
            )));
        }
        Ok(())
    }
}

/// Geomagic Touch: base yaw plus two pitch joints, all actuated.
///
/// The identified inertia is positive definite on the reachable workspace
/// but not globally (`M₁₁` vanishes near `q₂ + q₃ = π`).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Touch {
    pub params: TouchParams,
}

impl Touch {
    pub fn new(params: TouchParams) -> Result<Self> {
        params.validate()?;
        Ok(Self { params })
    }
}

impl MechanicalModel for Touch {
    fn name(&self) -> &str {
        "touch"
    }

    fn dof(&self) -> usize {
        3
    }

    fn actuators(&self) -> usize {
        3
    }

    fn mass(&self, q: &Vector) -> Matrix {
        let [f1, f2, f3, _, _] = self.params.phi;
        let (q2, q3) = (q[1], q[2]);
        let q23 = q2 + q3;
        let m11 = f1 * q2.cos().powi(2) + f2 * q2.cos() * q23.cos() + f3 * q23.sin().powi(2);
        let m22 = f1 + 2.0 * f2 * q3.cos() + f3;
        let m23 = f2 * q3.cos() + f3;
        Matrix::from_row_slice(3, 3, &[m11, 0.0, 0.0, 0.0, m22, m23, 0.0, m23, f3])
    }

    fn mass_partials(&self, q: &Vector) -> Vec<Matrix> {
        let [f1, f2, f3, _, _] = self.params.phi;
        let (q2, q3) = (q[1], q[2]);
        let q23 = q2 + q3;
        let twist = f3 * (2.0 * q23).sin();
        let d11_q2 = -f1 * (2.0 * q2).sin() - f2 * (2.0 * q2 + q3).sin() + twist;
        let d11_q3 = -f2 * q2.cos() * q23.sin() + twist;
        let d22_q3 = -2.0 * f2 * q3.sin();
        let d23_q3 = -f2 * q3.sin();
        let mut d2 = Matrix::zeros(3, 3);
        d2[(0, 0)] = d11_q2;
        let mut d3 = Matrix::zeros(3, 3);
        d3[(0, 0)] = d11_q3;
        d3[(1, 1)] = d22_q3;
        d3[(1, 2)] = d23_q3;
        d3[(2, 1)] = d23_q3;
        vec![Matrix::zeros(3, 3), d2, d3]
    }

    fn potential(&self, q: &Vector) -> f64 {
        let p = &self.params;
        p.g * (p.phi[3] * q[1].sin() + p.phi[4] * (q[1] + q[2]).sin())
    }

    fn potential_grad(&self, q: &Vector) -> Vector {
        let p = &self.params;
        let c23 = p.g * p.phi[4] * (q[1] + q[2]).cos();
        Vector::from_vec(vec![0.0, p.g * p.phi[3] * q[1].cos() + c23, c23])
    }

    fn input_map(&self) -> Matrix {
        Matrix::identity(3, 3)
    }

    fn annihilator(&self) -> Matrix {
        Matrix::zeros(0, 3)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn v(xs: &[f64]) -> Vector {
        Vector::from_column_slice(xs)
    }

    #[test]
    fn pendubot_energy_at_rest() {
        let m = Pendubot::default();
        let c = m.params;
        let down = hamiltonian(&m, &State::at_rest(v(&[0.0, 0.0]))).unwrap();
        assert_relative_eq!(down, -c.c4 * c.g - c.c5 * c.g, epsilon = 1e-12);
        let up = hamiltonian(&m, &State::at_rest(v(&[PI, 0.0]))).unwrap();
        assert_relative_eq!(up, c.c4 * c.g + c.c5 * c.g, epsilon = 1e-12);
    }

    #[test]
    fn touch_potential_at_initial_pose() {
        let m = Touch::default();
        let q0 = v(&[0.0, PI / 15.0, -PI / 2.0]);
        let p = m.params;
        let expected =
            p.g * (p.phi[3] * (PI / 15.0).sin() + p.phi[4] * (PI / 15.0 - PI / 2.0).sin());
        assert_relative_eq!(
            hamiltonian(&m, &State::at_rest(q0)).unwrap(),
            expected,
            epsilon = 1e-15
        );
    }

    #[test]
    fn quadratic_gradient_trivial_cases() {
        let w = Matrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let zero = vec![Matrix::zeros(2, 2); 2];
        let g = grad_q_quadratic(&w, &zero, &v(&[1.0, -2.0]), QuadraticForm::Inverse).unwrap();
        assert_eq!(g, Vector::zeros(2));
        let partials = vec![Matrix::identity(2, 2), Matrix::identity(2, 2)];
        let g = grad_q_quadratic(&w, &partials, &Vector::zeros(2), QuadraticForm::Inverse).unwrap();
        assert_eq!(g, Vector::zeros(2));
    }

    #[test]
    fn quadratic_gradient_diagonal_inverse() {
        // W = diag(q1, 1), p = (1, 1): pᵀW⁻¹p = 1/q1 + 1, so ∂/∂q1 = −1/q1².
        let q1 = 1.7;
        let w = |q: &Vector| Matrix::from_row_slice(2, 2, &[q[0], 0.0, 0.0, 1.0]);
        let q = v(&[q1, 0.4]);
        let partials = vec![
            Matrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]),
            Matrix::zeros(2, 2),
        ];
        let p = v(&[1.0, 1.0]);
        let g = grad_q_quadratic(&w(&q), &partials, &p, QuadraticForm::Inverse).unwrap();
        assert_relative_eq!(g[0], -1.0 / (q1 * q1), epsilon = 1e-15);
        assert_eq!(g[1], 0.0);

        let form = |q: &Vector| {
            let inv = w(q).try_inverse().unwrap();
            p.dot(&(inv * &p))
        };
        let fd = central_gradient(form, &q);
        assert_relative_eq!(g[0], fd[0], max_relative = 1e-8);
        assert!(fd[1].abs() < 1e-9);
    }

    #[test]
    fn upright_and_hanging_are_equilibria() {
        let m = Pendubot::default();
        for q in [v(&[PI, 0.0]), v(&[0.0, 0.0])] {
            let (qd, pd) = plant_rhs(&m, &State::at_rest(q), &Vector::zeros(1)).unwrap();
            assert_eq!(qd, Vector::zeros(2));
            assert!(pd.amax() < 1e-14, "{pd}");
        }
    }

    #[test]
    fn touch_gravity_compensation_holds_still() {
        let m = Touch::default();
        let q = v(&[0.3, 0.7, -1.1]);
        let u = m.potential_grad(&q);
        let (qd, pd) = plant_rhs(&m, &State::at_rest(q), &u).unwrap();
        assert_eq!(qd, Vector::zeros(3));
        assert_eq!(pd, Vector::zeros(3));
    }

    #[test]
    fn annihilators() {
        let p = Pendubot::default();
        assert_eq!(p.annihilator() * p.input_map(), Matrix::zeros(1, 1));
        let t = Touch::default();
        assert_eq!(t.annihilator().shape(), (0, 3));
        assert_eq!((t.annihilator() * t.input_map()).shape(), (0, 3));
    }

    #[test]
    fn pendubot_parameter_validation() {
        let bad = PendubotParams {
            c3: 10.0,
            ..PendubotParams::default()
        };
        assert!(Pendubot::new(bad).is_err());
        let neg = PendubotPhysical {
            m2: -1.0,
            ..PendubotPhysical::default()
        };
        assert!(PendubotParams::from_physical(&neg).is_err());
    }

    #[test]
    fn input_length_checked() {
        let m = Touch::default();
        let s = State::at_rest(Vector::zeros(3));
        assert!(matches!(
            plant_rhs(&m, &s, &Vector::zeros(1)),
            Err(Error::Dimension(_))
        ));
    }
}
