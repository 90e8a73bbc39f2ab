// Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any
// failure. Runs the shipped configs, so keep it in an optimized profile.

use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sidapbc::config::Experiment;
use sidapbc::idapbc::{
    pde_residuals, pde_residuals_with, DEFAULT_P_THRESHOLD, DEFAULT_X_THRESHOLD,
};
use sidapbc::linalg::{l1_norm, max_sym_eigenvalue};
use sidapbc::mechmodel::{central_gradient, hamiltonian_grad_q, PendubotParams, PendubotPhysical};
use sidapbc::sim::{dissipation_tolerance, integrate_open_loop, ControlUpdate, Trajectory};
use sidapbc::{
    hamiltonian, integrate, metrics, oracle_phi, solve, u_th1, Controller, Matrix, MechanicalModel,
    Pendubot, PendubotDesign, PendubotGains, ShapingDesign, SimConfig, State, Touch, TouchDesign,
    Vector,
};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn configs() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/configs"))
}

fn pendubot() -> (Pendubot, PendubotDesign) {
    let params = PendubotParams::from_physical(&PendubotPhysical::default()).unwrap();
    (
        Pendubot::new(params).unwrap(),
        PendubotDesign::new(params, PendubotGains::default(), DEFAULT_P_THRESHOLD).unwrap(),
    )
}

fn instances() -> Vec<(Vector, Vector)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut out = Vec::with_capacity(6000);
    for n in 1..=6 {
        let mut k = 0;
        while k < 1000 {
            let x = Vector::from_fn(n, |_, _| rng.gen_range(-10.0..10.0));
            let b = Vector::from_fn(n, |_, _| rng.gen_range(-10.0..10.0));
            if l1_norm(&x) < 1e-3 {
                continue;
            }
            out.push((x, b));
            k += 1;
        }
    }
    out
}

/// `−PPᵀ + (S − Sᵀ)` scaled by `scale`.
fn random_feasible(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Matrix {
    let p = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    let s = Matrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
    (-(&p * p.transpose()) + (&s - s.transpose())) * scale
}

fn c1_optimal_value(cases: &[(Vector, Vector)]) -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    let mut formula_mismatch = 0;
    for (x, b) in cases {
        let phi = solve(x, b).unwrap().phi;
        let oracle = oracle_phi(x, b, 1e-12).unwrap();
        worst = worst.max((phi - oracle).abs());
        if phi != (x.dot(b) / l1_norm(x)).max(0.0) {
            formula_mismatch += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-9 && formula_mismatch == 0 && secs < 5.0,
        format!(
            "{} instances, max |phi - oracle| = {worst:.2e} (tol 1e-9), formula mismatches = {formula_mismatch}, {secs:.2} s (< 5 s)",
            cases.len()
        ),
    )
}

fn c2_optimality_witness(cases: &[(Vector, Vector)]) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst_gap = f64::INFINITY;
    let mut worst_feasibility = f64::NEG_INFINITY;
    for (x, b) in cases {
        let sol = solve(x, b).unwrap();
        let n = x.len();
        for k in 0..200 {
            // half far away, half in a shrinking neighbourhood of the optimum
            let a = if k % 2 == 0 {
                random_feasible(&mut rng, n, 3.0)
            } else {
                sol.matrix() + random_feasible(&mut rng, n, 10f64.powi(-(k % 12)))
            };
            worst_feasibility = worst_feasibility.max(max_sym_eigenvalue(&a));
            let gap = (&a * x - b).amax() - sol.phi;
            worst_gap = worst_gap.min(gap);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_gap >= -1e-9 && worst_feasibility <= 1e-9 && secs < 60.0,
        format!(
            "{} feasible A, min(|Ax - b|inf - phi) = {worst_gap:.2e} (>= -1e-9), max eig sym(A) = {worst_feasibility:.1e}, {secs:.2} s (< 60 s)",
            cases.len() * 200
        ),
    )
}

fn c3_structure(cases: &[(Vector, Vector)]) -> Outcome {
    let mut failures = Vec::new();
    let mut worst_orth = 0.0_f64;
    let mut worst_res = 0.0_f64;
    for (x, b) in cases {
        let s = solve(x, b).unwrap();
        let n = x.len();
        if s.skew != -s.skew.transpose() {
            failures.push("A_w not skew");
        }
        if s.a_s > 0.0 || s.sym != Matrix::identity(n, n) * (s.a_s / x.norm_squared()) {
            failures.push("A_s not a non-positive multiple of I");
        }
        let orth = x.dot(&s.v).abs() / (x.norm() * s.v.norm()).max(1.0);
        worst_orth = worst_orth.max(orth);
        let res = (s.matrix() * x - b).amax();
        worst_res = worst_res.max((res - s.phi).abs());
        if x.dot(b) <= 0.0 && res > 1e-12 {
            failures.push("nonzero residual with xᵀb <= 0");
        }
    }
    failures.dedup();
    outcome(
        failures.is_empty() && worst_orth <= 1e-12 && worst_res <= 1e-12,
        format!("max |vᵀx| scaled = {worst_orth:.1e}, max ||A*x - b|inf - phi| = {worst_res:.1e} (tol 1e-12){}", if failures.is_empty() { String::new() } else { format!(", violations: {failures:?}") }),
    )
}

fn c4_annihilation() -> Outcome {
    let (m, d) = pendubot();
    let g = m.input_map();
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let mut worst = 0.0_f64;
    let mut worst_base = 0.0_f64;
    for _ in 0..1000 {
        let s = State::new(
            Vector::from_fn(2, |i, _| d.q_star()[i] + rng.gen_range(-0.3..0.3)),
            Vector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0)),
        );
        let th1 = u_th1(&m, &d, &s, DEFAULT_X_THRESHOLD).unwrap();
        let base = pde_residuals(&m, &d, &s).unwrap();
        let with = pde_residuals_with(&m, &d, &s, &(&g * &th1.lambda_uan * g.transpose())).unwrap();
        worst = worst.max(
            (&with.kinetic - &base.kinetic)
                .amax()
                .max((&with.potential - &base.potential).amax()),
        );
        worst_base = worst_base.max(base.max_abs());
    }
    outcome(
        worst <= 1e-13,
        format!("1000 states, max residual change = {worst:.1e} (tol 1e-13); residuals themselves <= {worst_base:.1e}"),
    )
}

struct Runs {
    pendubot: Experiment,
    touch: Experiment,
    pendubot_trajs: Vec<Trajectory>,
    touch_trajs: Vec<Trajectory>,
}

fn run_all(exp: &Experiment) -> Vec<Trajectory> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = Controller::ALL
            .iter()
            .map(|&c| {
                let cfg = exp.sim.clone().with_controller(c);
                scope.spawn(move || integrate(exp.model.as_ref(), exp.design.as_ref(), &cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap().unwrap())
            .collect()
    })
}

fn c5_dissipation(runs: &Runs) -> Outcome {
    let mut worst = 1.0_f64;
    let mut parts = Vec::new();
    for (exp, trajs) in [
        (&runs.pendubot, &runs.pendubot_trajs),
        (&runs.touch, &runs.touch_trajs),
    ] {
        let eps = dissipation_tolerance(exp.sim.dt);
        for t in trajs {
            let f = t.dissipation_fraction(eps);
            worst = worst.min(f);
            parts.push(format!("{}/{} {:.4}", exp.model.name(), t.controller, f));
        }
    }
    outcome(
        worst >= 0.99,
        format!(
            "fraction of non-increasing H_d steps (>= 0.99): {}",
            parts.join(", ")
        ),
    )
}

fn reduction(trajs: &[Trajectory]) -> (f64, f64, f64) {
    let ida = trajs[0].peak_u_inf();
    let red = trajs[2].peak_u_inf();
    (ida, red, 100.0 * (1.0 - red / ida))
}

fn c6_reduction(runs: &Runs, secs: f64) -> Outcome {
    let (p_ida, p_red, p_pct) = reduction(&runs.pendubot_trajs);
    let (t_ida, t_red, t_pct) = reduction(&runs.touch_trajs);
    let never_worse = p_red <= p_ida && t_red <= t_ida;
    let band = t_pct >= 10.0;
    outcome(
        never_worse && band && secs < 30.0,
        format!(
            "reduced <= ida: pendubot {p_red:.4} <= {p_ida:.4}, touch {t_red:.6} <= {t_ida:.6} ({}); touch peak reduction {t_pct:.3}% (band >= 10%, target ~30%); pendubot {p_pct:.2}%; {secs:.1} s (< 30 s)",
            if never_worse { "holds" } else { "violated" }
        ),
    )
}

fn c7_kinetic_suppression(runs: &Runs) -> Outcome {
    let exp = &runs.touch;
    let cfg = exp
        .sim
        .clone()
        .with_controller(Controller::Th1)
        .with_stride(1);
    let traj = integrate(exp.model.as_ref(), exp.design.as_ref(), &cfg).unwrap();
    let g = exp.model.input_map();
    let (mut checked, mut worst) = (0, 0.0_f64);
    for (s, c) in traj.states.iter().zip(&traj.controls) {
        let y = exp.design.mass_d(&s.q).lu().solve(&s.p).unwrap();
        let x = g.transpose() * y;
        if (-&c.u_ki).dot(&x) <= 0.0 {
            checked += 1;
            worst = worst.max(c.u_ovki.amax());
        }
    }
    outcome(
        checked > 0 && worst <= 1e-10,
        format!("{checked} of {} recorded steps with (-u_ki)ᵀx <= 0, max |u_ovki|inf there = {worst:.1e} (tol 1e-10)", traj.len()),
    )
}

fn c8_pendubot(runs: &Runs) -> Outcome {
    let exp = &runs.pendubot;
    let t = &runs.pendubot_trajs;
    let m = metrics(&t[2], exp.design.q_star(), 0.05, Some(&t[0])).unwrap();
    let err = m.final_q_error.iter().fold(0.0_f64, |a, e| a.max(e.abs()));
    let red = m.reduction_vs.unwrap_or(f64::NAN);
    outcome(
        err <= 0.05 && red >= 0.0,
        format!("reduced: final |q - (π, 0)|inf = {err:.2e} (<= 0.05), peak reduction {red:.2}% (>= 0; informational target ~13%)"),
    )
}

fn fd_gradient_error(
    model: &dyn MechanicalModel,
    q_box: &[(f64, f64)],
    p_scale: f64,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let q = Vector::from_iterator(
            q_box.len(),
            q_box.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)),
        );
        let p = Vector::from_fn(q_box.len(), |_, _| rng.gen_range(-p_scale..p_scale));
        let s = State::new(q, p);
        let pp = s.p.clone();
        let fd = central_gradient(
            |q| hamiltonian(model, &State::new(q.clone(), pp.clone())).unwrap(),
            &s.q,
        );
        let analytic = hamiltonian_grad_q(model, &s).unwrap();
        worst = worst.max((analytic - &fd).amax() / fd.amax().max(1.0));
    }
    worst
}

fn c9_kernels() -> Outcome {
    let (pm, _) = pendubot();
    let g_pend = fd_gradient_error(&pm, &[(-PI, PI); 2], 2.0, 91);
    let touch = Touch::default();
    let g_touch = fd_gradient_error(&touch, &[(-PI, PI), (-0.5, 1.5), (-2.5, 0.5)], 0.02, 92);

    let s0 = State::at_rest(Vector::from_vec(vec![0.1, 0.0]));
    let h0 = hamiltonian(&pm, &s0).unwrap();
    let states = integrate_open_loop(&pm, &s0, &Vector::zeros(1), 1e-4, 10_000).unwrap();
    let drift = states
        .iter()
        .map(|s| (hamiltonian(&pm, s).unwrap() - h0).abs())
        .fold(0.0, f64::max)
        / h0.abs();

    let design = TouchDesign::nominal();
    let start = State::at_rest(Vector::from_vec(vec![0.0, PI / 15.0, -PI / 2.0]));
    let final_q = |dt: f64| {
        let cfg = SimConfig::new(start.clone(), Controller::Ida, 0.4, dt)
            .with_update(ControlUpdate::PerStage);
        integrate(&touch, &design, &cfg)
            .unwrap()
            .final_state()
            .unwrap()
            .q
            .clone()
    };
    let (a, b, c) = (final_q(4e-3), final_q(2e-3), final_q(1e-3));
    let order = ((&a - &b).amax() / (&b - &c).amax()).log2();

    outcome(
        g_pend <= 1e-5 && g_touch <= 1e-5 && drift <= 1e-6 && order >= 3.5,
        format!(
            "grad H vs FD rel err: pendubot {g_pend:.1e}, touch {g_touch:.1e} (<= 1e-5); free-flow drift {drift:.1e} (<= 1e-6); RK4 order {order:.2} (>= 3.5)"
        ),
    )
}

fn c10_verify_exit_codes() -> Outcome {
    let out = tempfile::TempDir::new().unwrap();
    let code = |name: &str| {
        Command::new(env!("CARGO_BIN_EXE_sidapbc"))
            .arg("verify")
            .arg(configs().join(name))
            .arg("--out")
            .arg(out.path())
            .output()
            .unwrap()
            .status
            .code()
    };
    let (p, t, bad) = (
        code("pendubot.toml"),
        code("touch.toml"),
        code("pendubot_corrupt.toml"),
    );
    outcome(
        p == Some(0) && t == Some(0) && bad == Some(5),
        format!("pendubot {p:?}, touch {t:?} (expect 0); corrupt {bad:?} (expect 5)"),
    )
}

fn main() {
    let cases = instances();
    let mut results: Vec<(&str, Outcome)> = vec![
        ("1 optimal value vs oracle", c1_optimal_value(&cases)),
        ("2 optimality witness", c2_optimality_witness(&cases)),
        ("3 structural invariants", c3_structure(&cases)),
        ("4 annihilation", c4_annihilation()),
    ];

    let start = Instant::now();
    let pendubot = Experiment::load(configs().join("pendubot.toml")).unwrap();
    let touch = Experiment::load(configs().join("touch.toml")).unwrap();
    let (pendubot_trajs, touch_trajs) = std::thread::scope(|s| {
        let p = s.spawn(|| run_all(&pendubot));
        let t = s.spawn(|| run_all(&touch));
        (p.join().unwrap(), t.join().unwrap())
    });
    let secs = start.elapsed().as_secs_f64();
    let runs = Runs {
        pendubot,
        touch,
        pendubot_trajs,
        touch_trajs,
    };

    results.push(("5 closed-loop dissipation", c5_dissipation(&runs)));
    results.push(("6 reduction never worse", c6_reduction(&runs, secs)));
    results.push(("7 kinetic-term suppression", c7_kinetic_suppression(&runs)));
    results.push(("8 pendubot closed loop", c8_pendubot(&runs)));
    results.push(("9 numerical kernels", c9_kernels()));
    results.push(("10 verify exit codes", c10_verify_exit_codes()));

    let mut failed = 0;
    for (name, o) in &results {
        println!(
            "{} [{name}] {}",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail
        );
        failed += usize::from(!o.passed);
    }
    println!("{} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
