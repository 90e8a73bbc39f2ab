// Pendubot near the upright position: the plain law against the
// ∞-norm-augmented and reduced laws.
//
// The first run starts with a large velocity; the kinetic terms dominate
// the input and the augmented law lowers the peak. The second shows a
// state where augmenting *raises* `|u|`, and the reduced law keeps the
// plain input there.
//
//     cargo run --release --example pendubot_compare

use sidapbc::idapbc::DEFAULT_P_THRESHOLD;
use sidapbc::mechmodel::{PendubotParams, PendubotPhysical};
use sidapbc::sim::PENDUBOT_DT;
use sidapbc::{
    integrate, metrics, Controller, Pendubot, PendubotDesign, PendubotGains, ShapingDesign,
    SimConfig, State, Vector,
};

pub fn run(t_final: f64) -> sidapbc::Result<()> {
    let params = PendubotParams::from_physical(&PendubotPhysical::default())?;
    let model = Pendubot::new(params)?;
    let design = PendubotDesign::new(params, PendubotGains::default(), DEFAULT_P_THRESHOLD)?;
    println!(
        "c1..c5 = {:.6} {:.6} {:.6} {:.6} {:.6}",
        params.c1, params.c2, params.c3, params.c4, params.c5
    );

    let q0 = Vector::from_vec(vec![2.9, 0.1]);
    let initial = State::from_velocity(&model, q0, &Vector::from_vec(vec![1.5, -2.5]));
    let mut trajs = Vec::new();
    for c in Controller::ALL {
        let cfg = SimConfig::new(initial.clone(), c, t_final, PENDUBOT_DT).with_stride(10);
        trajs.push(integrate(&model, &design, &cfg)?);
    }
    for t in &trajs {
        let m = metrics(t, design.q_star(), 0.05, Some(&trajs[0]))?;
        println!(
            "{:>8}: peak |u| = {:.4}  reduction = {:6.2}%  final error = {:.1e}  switches = {}",
            m.controller,
            m.peak_u_inf,
            m.reduction_vs.unwrap_or(0.0),
            m.final_q_error.iter().fold(0.0_f64, |a, e| a.max(e.abs())),
            m.switch_count
        );
    }

    // at this state the plain law's kinetic and potential parts cancel,
    // and re-shaping the kinetic part removes the cancellation
    let s = State::from_velocity(
        &model,
        Vector::from_vec(vec![2.7, 0.3]),
        &Vector::from_vec(vec![1.0, -1.5]),
    );
    println!("single state q = (2.7, 0.3), qdot = (1, -1.5):");
    for c in Controller::ALL {
        let u = c.evaluate(&model, &design, &s, 1e-8)?;
        println!("{:>8}: u = {:+.4}  branch = {}", c, u.u[0], u.selected);
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(5.0) {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
