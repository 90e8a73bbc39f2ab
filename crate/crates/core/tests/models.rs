use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sidapbc::linalg::min_sym_eigenvalue;
use sidapbc::mechmodel::{
    central_gradient, central_partials, hamiltonian_grad_q, PendubotParams, PendubotPhysical,
};
use sidapbc::sim::integrate_open_loop;
use sidapbc::{hamiltonian, MechanicalModel, Pendubot, State, Touch, Vector};

fn pendubot() -> Pendubot {
    Pendubot::new(PendubotParams::from_physical(&PendubotPhysical::default()).unwrap()).unwrap()
}

fn random_state(rng: &mut ChaCha8Rng, q_box: &[(f64, f64)], p_scale: f64) -> State {
    let q = Vector::from_iterator(
        q_box.len(),
        q_box.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)),
    );
    let p = Vector::from_fn(q_box.len(), |_, _| rng.gen_range(-p_scale..p_scale));
    State::new(q, p)
}

fn rel(a: &Vector, b: &Vector) -> f64 {
    (a - b).amax() / b.amax().max(1.0)
}

fn check_derivatives(model: &dyn MechanicalModel, q_box: &[(f64, f64)], p_scale: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..1000 {
        let s = random_state(&mut rng, q_box, p_scale);
        let mass = model.mass(&s.q);
        assert!(
            min_sym_eigenvalue(&mass) > 0.0,
            "M not positive definite at {:?}",
            s.q
        );
        assert_eq!(mass, mass.transpose());

        let fd = central_gradient(|q| model.potential(q), &s.q);
        assert!(rel(&model.potential_grad(&s.q), &fd) <= 1e-5);

        let fd = central_partials(|q| model.mass(q), &s.q);
        for (a, f) in model.mass_partials(&s.q).iter().zip(&fd) {
            assert!((a - f).amax() / mass.amax() <= 1e-5);
        }

        let p = s.p.clone();
        let fd = central_gradient(
            |q| hamiltonian(model, &State::new(q.clone(), p.clone())).unwrap(),
            &s.q,
        );
        let analytic = hamiltonian_grad_q(model, &s).unwrap();
        assert!(rel(&analytic, &fd) <= 1e-5, "{analytic} vs {fd}");
    }
}

#[test]
fn pendubot_derivatives_match_finite_differences() {
    check_derivatives(&pendubot(), &[(-PI, PI); 2], 2.0, 11);
}

#[test]
fn touch_derivatives_match_finite_differences() {
    // the arm's inertia is only positive definite on its reachable workspace
    check_derivatives(
        &Touch::default(),
        &[(-PI, PI), (-0.5, 1.5), (-2.5, 0.5)],
        0.02,
        12,
    );
}

#[test]
fn annihilator_kills_input_map() {
    for model in [&pendubot() as &dyn MechanicalModel, &Touch::default()] {
        let g = model.input_map();
        assert_eq!(g.shape(), (model.dof(), model.actuators()));
        let perp = model.annihilator();
        assert_eq!(perp.shape(), (model.dof() - model.actuators(), model.dof()));
        assert!((perp * g).iter().all(|v| *v == 0.0));
    }
}

#[test]
fn free_flow_conserves_energy() {
    let model = pendubot();
    let s0 = State::at_rest(Vector::from_vec(vec![0.1, 0.0]));
    let h0 = hamiltonian(&model, &s0).unwrap();
    let states = integrate_open_loop(&model, &s0, &Vector::zeros(1), 1e-4, 10_000).unwrap();
    let drift = states
        .iter()
        .map(|s| (hamiltonian(&model, s).unwrap() - h0).abs())
        .fold(0.0, f64::max);
    assert!(drift <= 1e-6 * h0.abs(), "drift {drift:e} of H0 = {h0}");

    let touch = Touch::default();
    let s0 = State::new(
        Vector::from_vec(vec![0.3, 0.6, -1.0]),
        Vector::from_vec(vec![0.002, -0.001, 0.001]),
    );
    let h0 = hamiltonian(&touch, &s0).unwrap();
    let states = integrate_open_loop(&touch, &s0, &Vector::zeros(3), 1e-4, 10_000).unwrap();
    let h1 = hamiltonian(&touch, states.last().unwrap()).unwrap();
    assert!((h1 - h0).abs() <= 1e-6 * h0.abs());
}

#[test]
fn hanging_pendubot_is_an_equilibrium() {
    let model = pendubot();
    assert_eq!(model.potential_grad(&Vector::zeros(2)), Vector::zeros(2));
    let s = State::at_rest(Vector::zeros(2));
    let states = integrate_open_loop(&model, &s, &Vector::zeros(1), 1e-3, 100).unwrap();
    assert_eq!(states.last().unwrap(), &s);
}
