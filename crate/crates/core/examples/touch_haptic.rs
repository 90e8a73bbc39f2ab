// Geomagic Touch regulation from rest with the reduced law.
//
// Starting at rest the kinetic terms vanish, so every law issues the same
// first (largest) input; afterwards the augmented law keeps the kinetic
// contribution several orders of magnitude smaller.
//
//     cargo run --release --example touch_haptic

use std::f64::consts::PI;

use sidapbc::sim::TOUCH_DT;
use sidapbc::{
    integrate, metrics, Controller, ShapingDesign, SimConfig, State, Touch, TouchDesign, Vector,
};

pub fn run(t_final: f64) -> sidapbc::Result<()> {
    let model = Touch::default();
    let design = TouchDesign::nominal();
    let q0 = Vector::from_vec(vec![0.0, PI / 15.0, -PI / 2.0]);
    for c in [Controller::Ida, Controller::Reduced] {
        let cfg = SimConfig::new(State::at_rest(q0.clone()), c, t_final, TOUCH_DT).with_stride(100);
        let traj = integrate(&model, &design, &cfg)?;
        let m = metrics(&traj, design.q_star(), 0.05, None)?;
        println!(
            "{:>8}: peak |u| = {:.4} N·m  peak |u_ovki| = {:.3e}  final error = {:?}",
            c, m.peak_u_inf, m.peak_uovki_inf, m.final_q_error
        );
        let last = traj.controls.last().unwrap();
        println!("          final u = {:?}", last.u.as_slice());
    }
    Ok(())
}

fn main() {
    if let Err(e) = run(45.0) {
        eprintln!("{e}");
        std::process::exit(1);
    }
}
