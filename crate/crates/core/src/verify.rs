//! Randomized invariant checks for a model/design pair.
//!
//! States are drawn uniformly from `q ∈ q* ± q_radius`, `pᵢ ∈ [−p_max, p_max]`
//! with a seeded ChaCha generator, so a report is reproducible from its
//! seed. Each check keeps its worst deviation and the state where it
//! occurred.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::VerifySection;
use crate::error::Result;
use crate::idapbc::{
    assembled_lambda, pde_residuals, pde_residuals_with, potential_d_hessian, u_th1, Controller,
    ShapingDesign,
};
use crate::linalg::{inf_norm, max_sym_eigenvalue, min_sym_eigenvalue, Matrix, Vector};
use crate::linfshape::{oracle_phi, ZERO_DIRECTION};
use crate::mechmodel::{
    central_gradient, central_partials, hamiltonian, hamiltonian_grad_q, plant_rhs,
    MechanicalModel, State,
};

/// Relative agreement required between analytic and finite-difference
/// derivatives.
pub const FD_REL_TOL: f64 = 1e-5;
pub const PDE_TOL: f64 = 1e-9;
/// Allowed positive eigenvalue of `sym(Λ)`, relative to `max(1, ‖Λ‖)`.
pub const LAMBDA_TOL: f64 = 1e-9;
pub const ORACLE_TOL: f64 = 1e-9;
/// Allowed change of the kinetic residual when `GΛ_uanGᵀ` is added.
pub const ANNIHILATION_TOL: f64 = 1e-13;
/// Allowed `‖ṗ‖∞` at `(q*, 0)` under each control law.
pub const EQUILIBRIUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub name: String,
    /// Worst deviation over the samples. For definiteness checks this is
    /// the negated smallest eigenvalue, so negative values pass.
    pub max_deviation: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub evaluated: usize,
    pub worst_q: Option<Vec<f64>>,
    pub worst_p: Option<Vec<f64>>,
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub model: String,
    pub samples: usize,
    pub seed: u64,
    pub q_radius: f64,
    pub p_max: f64,
    pub passed: bool,
    pub checks: Vec<CheckResult>,
}

impl VerifyReport {
    pub fn failures(&self) -> impl Iterator<Item = &CheckResult> {
        self.checks.iter().filter(|c| !c.passed)
    }

    /// Failed check with the largest deviation relative to its tolerance.
    pub fn worst_failure(&self) -> Option<&CheckResult> {
        let excess =
            |c: &CheckResult| (c.max_deviation - c.tolerance) / c.tolerance.abs().max(1e-300);
        self.failures()
            .max_by(|a, b| excess(a).total_cmp(&excess(b)))
    }
}

struct Check {
    name: &'static str,
    tolerance: f64,
    strict: bool,
    worst: f64,
    worst_state: Option<State>,
    evaluated: usize,
    skipped: Option<String>,
}

impl Check {
    fn new(name: &'static str, tolerance: f64) -> Self {
        Self {
            name,
            tolerance,
            strict: false,
            worst: f64::NEG_INFINITY,
            worst_state: None,
            evaluated: 0,
            skipped: None,
        }
    }

    /// Passes only when every deviation is strictly below the tolerance.
    fn definite(name: &'static str) -> Self {
        Self {
            strict: true,
            ..Self::new(name, 0.0)
        }
    }

    fn record(&mut self, deviation: f64, s: &State) {
        self.evaluated += 1;
        // NaN counts as the worst possible outcome
        let dev = if deviation.is_nan() {
            f64::INFINITY
        } else {
            deviation
        };
        if dev > self.worst || self.worst_state.is_none() {
            self.worst = dev;
            self.worst_state = Some(s.clone());
        }
    }

    fn finish(self) -> CheckResult {
        let passed = if self.skipped.is_some() {
            true
        } else if self.evaluated == 0 {
            false
        } else if self.strict {
            self.worst < self.tolerance
        } else {
            self.worst <= self.tolerance
        };
        CheckResult {
            name: self.name.to_string(),
            max_deviation: if self.evaluated == 0 { 0.0 } else { self.worst },
            tolerance: self.tolerance,
            passed,
            evaluated: self.evaluated,
            worst_q: self
                .worst_state
                .as_ref()
                .map(|s| s.q.iter().copied().collect()),
            worst_p: self
                .worst_state
                .as_ref()
                .map(|s| s.p.iter().copied().collect()),
            skipped: self.skipped,
        }
    }
}

fn rel_dev(a: &Vector, b: &Vector, floor: f64) -> f64 {
    inf_norm(&(a - b)) / inf_norm(b).max(floor)
}

fn rel_dev_partials(a: &[Matrix], b: &[Matrix], scale: f64) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).amax())
        .fold(0.0, f64::max)
        / scale.max(f64::MIN_POSITIVE)
}

/// Runs every check on `settings.samples` random states around `q*`.
pub fn run(
    model: &dyn MechanicalModel,
    design: &dyn ShapingDesign,
    settings: &VerifySection,
    x_threshold: f64,
) -> Result<VerifyReport> {
    let n = model.dof();
    let q_star = design.q_star().clone();
    let underactuated = model.annihilator().nrows() > 0;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);

    let mut potential_grad = Check::new("potential_gradient_fd", FD_REL_TOL);
    let mut mass_partials = Check::new("mass_partials_fd", FD_REL_TOL);
    let mut h_grad = Check::new("hamiltonian_gradient_fd", FD_REL_TOL);
    let mut vd_grad = Check::new("desired_potential_gradient_fd", FD_REL_TOL);
    let mut md_partials = Check::new("desired_mass_partials_fd", FD_REL_TOL);
    let mut mass_pd = Check::definite("mass_positive_definite");
    let mut md_pd = Check::definite("desired_mass_positive_definite");
    let mut kinetic_pde = Check::new("kinetic_matching_residual", PDE_TOL);
    let mut potential_pde = Check::new("potential_matching_residual", PDE_TOL);
    let mut lambda_nsd = Check::new("lambda_negative_semidefinite", LAMBDA_TOL);
    let mut oracle = Check::new("linf_optimum_vs_oracle", ORACLE_TOL);
    let mut annihilation = Check::new("uan_annihilated_by_left_annihilator", ANNIHILATION_TOL);
    if !underactuated {
        let why = "fully actuated: no matching conditions".to_string();
        kinetic_pde.skipped = Some(why.clone());
        potential_pde.skipped = Some(why.clone());
        annihilation.skipped = Some(why);
    }

    for _ in 0..settings.samples {
        let q = Vector::from_iterator(
            n,
            q_star
                .iter()
                .map(|qs| qs + settings.q_radius * (2.0 * rng.gen::<f64>() - 1.0)),
        );
        let p = Vector::from_iterator(
            n,
            (0..n).map(|_| settings.p_max * (2.0 * rng.gen::<f64>() - 1.0)),
        );
        let s = State::new(q, p);

        let mass = model.mass(&s.q);
        let m_scale = mass.amax();
        mass_pd.record(
            -min_sym_eigenvalue(&mass) / m_scale.max(f64::MIN_POSITIVE),
            &s,
        );
        let md = design.mass_d(&s.q);
        md_pd.record(
            -min_sym_eigenvalue(&md) / md.amax().max(f64::MIN_POSITIVE),
            &s,
        );

        let fd_grad = central_gradient(|qq| model.potential(qq), &s.q);
        potential_grad.record(rel_dev(&model.potential_grad(&s.q), &fd_grad, 1.0), &s);
        let fd_partials = central_partials(|qq| model.mass(qq), &s.q);
        mass_partials.record(
            rel_dev_partials(&model.mass_partials(&s.q), &fd_partials, m_scale),
            &s,
        );
        let fd_vd = central_gradient(|qq| design.potential_d(qq), &s.q);
        vd_grad.record(rel_dev(&design.potential_d_grad(&s.q), &fd_vd, 1.0), &s);
        let fd_md = central_partials(|qq| design.mass_d(qq), &s.q);
        md_partials.record(
            rel_dev_partials(&design.mass_d_partials(&s.q), &fd_md, md.amax()),
            &s,
        );

        if min_sym_eigenvalue(&mass) <= 0.0 || min_sym_eigenvalue(&md) <= 0.0 {
            continue;
        }
        let p_fixed = s.p.clone();
        let fd_h = central_gradient(
            |qq| hamiltonian(model, &State::new(qq.clone(), p_fixed.clone())).unwrap_or(f64::NAN),
            &s.q,
        );
        h_grad.record(rel_dev(&hamiltonian_grad_q(model, &s)?, &fd_h, 1.0), &s);

        let th1 = u_th1(model, design, &s, x_threshold)?;
        for lambda_uan in [
            Matrix::zeros(model.actuators(), model.actuators()),
            th1.lambda_uan.clone(),
        ] {
            let lambda = assembled_lambda(model, design, &s, &lambda_uan)?;
            lambda_nsd.record(max_sym_eigenvalue(&lambda) / lambda.amax().max(1.0), &s);
        }

        let x = model.input_map().transpose()
            * design
                .mass_d(&s.q)
                .lu()
                .solve(&s.p)
                .unwrap_or_else(|| Vector::zeros(n));
        if x.norm() > x_threshold.max(ZERO_DIRECTION) {
            let b = -&th1.u_ki;
            let phi_star = oracle_phi(&x, &b, 1e-13)?;
            oracle.record((th1.phi - phi_star).abs(), &s);
        }

        if underactuated {
            let base = pde_residuals(model, design, &s)?;
            kinetic_pde.record(inf_norm(&base.kinetic), &s);
            potential_pde.record(inf_norm(&base.potential), &s);
            let g = model.input_map();
            let extra = &g * &th1.lambda_uan * g.transpose();
            let with = pde_residuals_with(model, design, &s, &extra)?;
            annihilation.record(inf_norm(&(&with.kinetic - &base.kinetic)), &s);
        }
    }
    if oracle.evaluated == 0 {
        oracle.skipped = Some("no sample had a nonzero direction x".into());
    }

    let mut equilibrium = Check::new("closed_loop_equilibrium", EQUILIBRIUM_TOL);
    let rest = State::at_rest(q_star.clone());
    for c in Controller::ALL {
        let u = c.evaluate(model, design, &rest, x_threshold)?;
        let (_, pdot) = plant_rhs(model, &rest, &u.u)?;
        let scale = inf_norm(&model.potential_grad(&q_star)).max(1.0);
        equilibrium.record(inf_norm(&pdot) / scale, &rest);
    }

    let mut vd_stationary = Check::new("desired_potential_stationary", 1e-9);
    vd_stationary.record(inf_norm(&design.potential_d_grad(&q_star)), &rest);
    let mut vd_minimum = Check::new("desired_potential_hessian_psd", 1e-6);
    let hess = potential_d_hessian(design, &q_star);
    vd_minimum.record(-min_sym_eigenvalue(&hess) / hess.amax().max(1.0), &rest);

    let checks: Vec<CheckResult> = [
        potential_grad,
        mass_partials,
        h_grad,
        vd_grad,
        md_partials,
        mass_pd,
        md_pd,
        kinetic_pde,
        potential_pde,
        lambda_nsd,
        oracle,
        annihilation,
        equilibrium,
        vd_stationary,
        vd_minimum,
    ]
    .into_iter()
    .map(Check::finish)
    .collect();

    Ok(VerifyReport {
        model: model.name().to_string(),
        samples: settings.samples,
        seed: settings.seed,
        q_radius: settings.q_radius,
        p_max: settings.p_max,
        passed: checks.iter().all(|c| c.passed),
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::idapbc::{
        PendubotDesign, PendubotGains, TouchDesign, DEFAULT_P_THRESHOLD, DEFAULT_X_THRESHOLD,
    };
    use crate::mechmodel::{Pendubot, PendubotParams, PendubotPhysical, Touch};

    fn pendubot(gains: PendubotGains) -> (Pendubot, PendubotDesign) {
        let params = PendubotParams::from_physical(&PendubotPhysical::default()).unwrap();
        (
            Pendubot::new(params).unwrap(),
            PendubotDesign::new(params, gains, DEFAULT_P_THRESHOLD).unwrap(),
        )
    }

    fn settings(samples: usize) -> VerifySection {
        VerifySection {
            samples,
            ..VerifySection::default()
        }
    }

    #[test]
    fn nominal_pendubot_passes() {
        let (m, d) = pendubot(PendubotGains::default());
        let r = run(&m, &d, &settings(200), DEFAULT_X_THRESHOLD).unwrap();
        for c in &r.checks {
            assert!(c.passed, "{c:?}");
        }
        assert!(r.passed);
    }

    #[test]
    fn nominal_touch_passes_and_skips_matching() {
        let d = TouchDesign::nominal();
        let s = VerifySection {
            p_max: 0.01,
            ..settings(200)
        };
        let r = run(&Touch::default(), &d, &s, DEFAULT_X_THRESHOLD).unwrap();
        assert!(r.passed, "{:?}", r.failures().collect::<Vec<_>>());
        let kin = r
            .checks
            .iter()
            .find(|c| c.name == "kinetic_matching_residual")
            .unwrap();
        assert!(kin.skipped.is_some());
    }

    #[test]
    fn negative_damping_is_named() {
        let (m, d) = pendubot(PendubotGains {
            kv: -1.0,
            ..PendubotGains::default()
        });
        let r = run(&m, &d, &settings(20), DEFAULT_X_THRESHOLD).unwrap();
        assert!(!r.passed);
        assert_eq!(
            r.worst_failure().unwrap().name,
            "lambda_negative_semidefinite"
        );
    }

    #[test]
    fn same_seed_same_report() {
        let (m, d) = pendubot(PendubotGains::default());
        let a = run(&m, &d, &settings(30), DEFAULT_X_THRESHOLD).unwrap();
        let b = run(&m, &d, &settings(30), DEFAULT_X_THRESHOLD).unwrap();
        assert_eq!(a, b);
    }
}
