// Plugging in a new plant and design through the traits.
//
// A fully actuated two-link arm supplies only `M(q)` and `V(q)`; the
// derivatives come from the finite-difference defaults. The design is a
// constant desired inertia with a quadratic potential well.
//
//     cargo run --example custom_model

use sidapbc::{
    integrate, metrics, Controller, Matrix, MechanicalModel, ShapingDesign, SimConfig, State,
    Vector,
};

struct TwoLinkArm {
    a: f64,
    b: f64,
    c: f64,
    g1: f64,
    g2: f64,
}

impl MechanicalModel for TwoLinkArm {
    fn name(&self) -> &str {
        "two-link arm"
    }

    fn dof(&self) -> usize {
        2
    }

    fn actuators(&self) -> usize {
        2
    }

    fn mass(&self, q: &Vector) -> Matrix {
        let off = self.c + self.b * q[1].cos();
        Matrix::from_row_slice(
            2,
            2,
            &[self.a + 2.0 * self.b * q[1].cos(), off, off, self.c],
        )
    }

    fn potential(&self, q: &Vector) -> f64 {
        self.g1 * (1.0 - q[0].cos()) + self.g2 * (1.0 - (q[0] + q[1]).cos())
    }

    fn input_map(&self) -> Matrix {
        Matrix::identity(2, 2)
    }

    fn annihilator(&self) -> Matrix {
        Matrix::zeros(0, 2)
    }
}

struct Well {
    kappa: f64,
    kp: f64,
    damping: Matrix,
    q_star: Vector,
}

impl ShapingDesign for Well {
    fn mass_d(&self, _q: &Vector) -> Matrix {
        Matrix::identity(2, 2) * self.kappa
    }

    fn potential_d(&self, q: &Vector) -> f64 {
        0.5 * self.kp * (q - &self.q_star).norm_squared()
    }

    fn lambda_k(&self, _model: &dyn MechanicalModel, _s: &State) -> sidapbc::Result<Matrix> {
        Ok(Matrix::zeros(2, 2))
    }

    fn damping(&self) -> &Matrix {
        &self.damping
    }

    fn q_star(&self) -> &Vector {
        &self.q_star
    }
}

pub fn run() -> sidapbc::Result<()> {
    let arm = TwoLinkArm {
        a: 1.67,
        b: 0.5,
        c: 0.33,
        g1: 2.0,
        g2: 0.7,
    };
    let design = Well {
        kappa: 0.2,
        kp: 5.0,
        damping: Matrix::identity(2, 2) * 0.5,
        q_star: Vector::from_vec(vec![0.8, -0.4]),
    };
    sidapbc::idapbc::validate_design(&arm, &design)?;

    let initial = State::from_velocity(
        &arm,
        Vector::from_vec(vec![0.8, -0.4]),
        &Vector::from_vec(vec![-1.0, 3.0]),
    );
    let mut trajs = Vec::new();
    for c in Controller::ALL {
        let cfg = SimConfig::new(initial.clone(), c, 20.0, 1e-3).with_stride(10);
        trajs.push(integrate(&arm, &design, &cfg)?);
    }
    for t in &trajs {
        let m = metrics(t, design.q_star(), 0.05, Some(&trajs[0]))?;
        println!(
            "{:>8}: peak |u| = {:.4}  reduction = {:6.2}%  settled = {}",
            m.controller,
            m.peak_u_inf,
            m.reduction_vs.unwrap_or(0.0),
            m.settled
        );
    }
    Ok(())
}

fn main() {
    if let Err(e) = run() {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
