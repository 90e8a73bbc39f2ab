// Matching conditions of the Pendubot design along a line of states, and
// the fact that the ∞-norm correction never disturbs them.
//
//     cargo run --example matching_residuals

use sidapbc::idapbc::{pde_residuals, pde_residuals_with, u_th1, DEFAULT_P_THRESHOLD};
use sidapbc::mechmodel::{PendubotParams, PendubotPhysical};
use sidapbc::{MechanicalModel, Pendubot, PendubotDesign, PendubotGains, State, Vector};

pub fn run() -> sidapbc::Result<()> {
    let params = PendubotParams::from_physical(&PendubotPhysical::default())?;
    let model = Pendubot::new(params)?;
    let design = PendubotDesign::new(params, PendubotGains::default(), DEFAULT_P_THRESHOLD)?;
    let g = model.input_map();
    println!(
        "{:>6} {:>6} {:>12} {:>12} {:>12}",
        "q2", "p1", "kinetic", "potential", "with Λ_uan"
    );
    for k in 0..8 {
        let q2 = -0.4 + 0.1 * k as f64;
        let s = State::new(
            Vector::from_vec(vec![std::f64::consts::PI - 0.1, q2]),
            Vector::from_vec(vec![0.8 - 0.2 * k as f64, -0.3]),
        );
        let base = pde_residuals(&model, &design, &s)?;
        let th1 = u_th1(&model, &design, &s, 1e-8)?;
        let extra = &g * &th1.lambda_uan * g.transpose();
        let with = pde_residuals_with(&model, &design, &s, &extra)?;
        println!(
            "{:6.2} {:6.2} {:12.3e} {:12.3e} {:12.3e}",
            q2,
            s.p[0],
            base.kinetic.amax(),
            base.potential.amax(),
            with.kinetic.amax()
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
