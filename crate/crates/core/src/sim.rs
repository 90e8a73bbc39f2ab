//! Fixed-step closed-loop simulation and trajectory metrics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::idapbc::{
    desired_hamiltonian, Branch, ControlBreakdown, Controller, ShapingDesign, DEFAULT_X_THRESHOLD,
};
use crate::linalg::{inf_norm, Vector};
use crate::mechmodel::{plant_rhs, MechanicalModel, State};

/// Default step for the Pendubot.
pub const PENDUBOT_DT: f64 = 1e-4;
/// Default step for the Touch: the 1 kHz control rate.
pub const TOUCH_DT: f64 = 1e-3;
/// Default settle tolerance on `|q(t_final) − q*|∞` (rad).
pub const SETTLE_TOL: f64 = 0.05;
/// Momentum bound beyond which a run is declared divergent.
pub const DIVERGENCE_BOUND: f64 = 1e6;

/// Allowed per-sample increase of `H_d`: `10·dt`, absolute.
pub fn dissipation_tolerance(dt: f64) -> f64 {
    10.0 * dt
}

/// When the controller is evaluated inside an RK4 step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlUpdate {
    /// Sampled once per step and held (zero-order hold).
    #[default]
    PerStep,
    /// Re-evaluated at every RK4 stage (continuous-time feedback).
    PerStage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub t_final: f64,
    pub dt: f64,
    pub initial_state: State,
    pub controller: Controller,
    pub x_threshold: f64,
    pub record_stride: usize,
    pub update: ControlUpdate,
}

impl SimConfig {
    pub fn new(initial_state: State, controller: Controller, t_final: f64, dt: f64) -> Self {
        Self {
            t_final,
            dt,
            initial_state,
            controller,
            x_threshold: DEFAULT_X_THRESHOLD,
            record_stride: 1,
            update: ControlUpdate::PerStep,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn with_update(mut self, update: ControlUpdate) -> Self {
        self.update = update;
        self
    }

    pub fn with_controller(mut self, controller: Controller) -> Self {
        self.controller = controller;
        self
    }

    pub fn steps(&self) -> usize {
        (self.t_final / self.dt).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::InvalidParameters(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_final >= self.dt) || !self.t_final.is_finite() {
            return Err(Error::InvalidParameters(format!(
                "t_final must be at least dt, got t_final = {} and dt = {}",
                self.t_final, self.dt
            )));
        }
        if self.record_stride == 0 {
            return Err(Error::InvalidParameters(
                "record_stride must be at least 1".into(),
            ));
        }
        if !self.initial_state.is_finite() {
            return Err(Error::InvalidParameters(
                "initial state is not finite".into(),
            ));
        }
        Ok(())
    }
}

/// Recorded closed-loop run. Every `record_stride`-th step is kept, and the
/// final step always is.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub controller: Controller,
    pub times: Vec<f64>,
    pub states: Vec<State>,
    pub controls: Vec<ControlBreakdown>,
    pub hd: Vec<f64>,
    /// Branch changes of the reduced law over all integration steps.
    pub switch_count: usize,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn final_state(&self) -> Option<&State> {
        self.states.last()
    }

    /// Fraction of consecutive samples where `H_d` grows by at most `eps`.
    pub fn dissipation_fraction(&self, eps: f64) -> f64 {
        if self.hd.len() < 2 {
            return 1.0;
        }
        let ok = self.hd.windows(2).filter(|w| w[1] - w[0] <= eps).count();
        ok as f64 / (self.hd.len() - 1) as f64
    }

    pub fn peak_u_inf(&self) -> f64 {
        self.controls.iter().map(|c| c.u_inf()).fold(0.0, f64::max)
    }
}

fn rk4_step<F>(s: &State, dt: f64, mut rhs: F) -> Result<State>
where
    F: FnMut(&State) -> Result<(Vector, Vector)>,
{
    let (k1q, k1p) = rhs(s)?;
    let s2 = State::new(&s.q + &k1q * (0.5 * dt), &s.p + &k1p * (0.5 * dt));
    let (k2q, k2p) = rhs(&s2)?;
    let s3 = State::new(&s.q + &k2q * (0.5 * dt), &s.p + &k2p * (0.5 * dt));
    let (k3q, k3p) = rhs(&s3)?;
    let s4 = State::new(&s.q + &k3q * dt, &s.p + &k3p * dt);
    let (k4q, k4p) = rhs(&s4)?;
    let w = dt / 6.0;
    Ok(State::new(
        &s.q + (k1q + k2q * 2.0 + k3q * 2.0 + k4q) * w,
        &s.p + (k1p + k2p * 2.0 + k3p * 2.0 + k4p) * w,
    ))
}

/// Integrates the open-loop plant with a fixed input (no controller).
pub fn integrate_open_loop(
    model: &dyn MechanicalModel,
    initial: &State,
    u: &Vector,
    dt: f64,
    steps: usize,
) -> Result<Vec<State>> {
    let mut out = Vec::with_capacity(steps + 1);
    let mut s = initial.clone();
    out.push(s.clone());
    for _ in 0..steps {
        s = rk4_step(&s, dt, |st| plant_rhs(model, st, u))?;
        out.push(s.clone());
    }
    Ok(out)
}

/// Closed-loop RK4 integration of plant and controller.
pub fn integrate(
    model: &dyn MechanicalModel,
    design: &dyn ShapingDesign,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let n = model.dof();
    if cfg.initial_state.q.len() != n || cfg.initial_state.p.len() != n {
        return Err(Error::Dimension(format!(
            "initial state has sizes ({}, {}), model has {n} degrees of freedom",
            cfg.initial_state.q.len(),
            cfg.initial_state.p.len()
        )));
    }
    if design.q_star().len() != n {
        return Err(Error::Dimension(format!(
            "design equilibrium has length {}, model has {n} degrees of freedom",
            design.q_star().len()
        )));
    }

    let steps = cfg.steps();
    let capacity = steps / cfg.record_stride + 2;
    let mut traj = Trajectory {
        controller: cfg.controller,
        times: Vec::with_capacity(capacity),
        states: Vec::with_capacity(capacity),
        controls: Vec::with_capacity(capacity),
        hd: Vec::with_capacity(capacity),
        switch_count: 0,
    };

    let control = |s: &State| cfg.controller.evaluate(model, design, s, cfg.x_threshold);
    let mut s = cfg.initial_state.clone();
    let mut last_branch: Option<Branch> = None;
    for k in 0..=steps {
        let t = k as f64 * cfg.dt;
        let c = control(&s)?;
        if let Some(prev) = last_branch {
            if cfg.controller == Controller::Reduced && prev != c.selected {
                traj.switch_count += 1;
            }
        }
        last_branch = Some(c.selected);

        if k % cfg.record_stride == 0 || k == steps {
            traj.hd.push(desired_hamiltonian(design, &s)?);
            traj.times.push(t);
            traj.states.push(s.clone());
            traj.controls.push(c.clone());
        }
        if k == steps {
            break;
        }

        s = match cfg.update {
            ControlUpdate::PerStep => rk4_step(&s, cfg.dt, |st| plant_rhs(model, st, &c.u))?,
            ControlUpdate::PerStage => rk4_step(&s, cfg.dt, |st| {
                let u = control(st)?.u;
                plant_rhs(model, st, &u)
            })?,
        };
        let t_next = t + cfg.dt;
        if !s.is_finite() {
            return Err(Error::Diverged {
                t: t_next,
                reason: "non-finite state".into(),
            });
        }
        if inf_norm(&s.p) > DIVERGENCE_BOUND {
            return Err(Error::Diverged {
                t: t_next,
                reason: format!("|p|∞ exceeded {DIVERGENCE_BOUND:e}"),
            });
        }
    }
    Ok(traj)
}

/// Scalar summary of a trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub controller: Controller,
    pub peak_u_inf: f64,
    pub peak_u_per_channel: Vec<f64>,
    pub peak_uovki_inf: f64,
    pub final_q_error: Vec<f64>,
    pub settled: bool,
    /// `100·(1 − peak/peak_baseline)` when a baseline is supplied.
    pub reduction_vs: Option<f64>,
    pub switch_count: usize,
}

pub fn metrics(
    traj: &Trajectory,
    q_star: &Vector,
    settle_tol: f64,
    baseline: Option<&Trajectory>,
) -> Result<Metrics> {
    let last = traj
        .final_state()
        .ok_or_else(|| Error::InvalidParameters("empty trajectory".into()))?;
    let m = traj.controls[0].u.len();
    let mut per_channel = vec![0.0_f64; m];
    for c in &traj.controls {
        for (peak, u) in per_channel.iter_mut().zip(c.u.iter()) {
            *peak = peak.max(u.abs());
        }
    }
    let peak_u_inf = per_channel.iter().copied().fold(0.0, f64::max);
    let peak_uovki_inf = traj
        .controls
        .iter()
        .map(|c| inf_norm(&c.u_ovki))
        .fold(0.0, f64::max);
    let err = &last.q - q_star;
    let reduction_vs = match baseline {
        None => None,
        Some(b) if b.is_empty() => {
            return Err(Error::InvalidParameters("empty baseline trajectory".into()))
        }
        Some(b) => {
            let base = b.peak_u_inf();
            if base > 0.0 {
                Some(100.0 * (1.0 - peak_u_inf / base))
            } else if peak_u_inf == 0.0 {
                Some(0.0)
            } else {
                None
            }
        }
    };
    Ok(Metrics {
        controller: traj.controller,
        peak_u_inf,
        peak_u_per_channel: per_channel,
        peak_uovki_inf,
        settled: inf_norm(&err) <= settle_tol,
        final_q_error: err.iter().copied().collect(),
        reduction_vs,
        switch_count: traj.switch_count,
    })
}
