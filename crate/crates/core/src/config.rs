//! TOML experiment files.
//!
//! ```toml
//! [model]
//! name = "pendubot"          # "pendubot" | "touch"
//! [model.params]             # optional overrides, model specific
//! m1 = 1.0
//!
//! [design]                   # gains and thresholds, model specific
//! rho = 10.0
//!
//! [sim]
//! t_final = 5.0
//! dt = 1e-4
//! q0 = [2.9, 0.1]
//! qdot0 = [1.5, -2.5]        # or p0 = [...]
//!
//! [output]
//! directory = "out/pendubot"
//!
//! [verify]
//! samples = 1000
//! ```
//!
//! Unknown keys are rejected everywhere. Angles are radians, torques N·m.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::idapbc::{
    Controller, PendubotDesign, PendubotGains, ShapingDesign, TouchDesign, DEFAULT_P_THRESHOLD,
    DEFAULT_X_THRESHOLD,
};
use crate::linalg::{Matrix, Vector};
use crate::mechmodel::{
    MechanicalModel, Pendubot, PendubotParams, PendubotPhysical, State, Touch, TouchParams,
};
use crate::sim::{ControlUpdate, SimConfig, SETTLE_TOL};

#[derive(Debug)]
pub enum ConfigError {
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    Parse(toml::de::Error),
    Field {
        field: String,
        message: String,
    },
    /// A physical or design invariant failed while building the experiment.
    Invariant(Error),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, source } => {
                write!(f, "cannot read {}: {source}", path.display())
            }
            ConfigError::Parse(e) => write!(f, "config parse error: {e}"),
            ConfigError::Field { field, message } => write!(f, "invalid `{field}`: {message}"),
            ConfigError::Invariant(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for ConfigError {}

fn field_err(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelName {
    Pendubot,
    Touch,
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub design: toml::Table,
    pub sim: SimSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub name: ModelName,
    #[serde(default)]
    pub params: toml::Table,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub t_final: f64,
    pub dt: f64,
    pub q0: Vec<f64>,
    pub p0: Option<Vec<f64>>,
    pub qdot0: Option<Vec<f64>>,
    #[serde(default = "one")]
    pub record_stride: usize,
    #[serde(default = "default_settle")]
    pub settle_tol: f64,
    pub controller: Option<Controller>,
    #[serde(default)]
    pub control_update: ControlUpdate,
}

fn one() -> usize {
    1
}

fn default_settle() -> f64 {
    SETTLE_TOL
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub directory: PathBuf,
    pub formats: Vec<OutputFormat>,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: PathBuf::from("out"),
            formats: vec![OutputFormat::Csv, OutputFormat::Json],
        }
    }
}

/// Sampling box for the verification suite: `q ∈ q* ± q_radius`,
/// `|pᵢ| ≤ p_max`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifySection {
    pub samples: usize,
    pub seed: u64,
    pub q_radius: f64,
    pub p_max: f64,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            samples: 1000,
            seed: 0,
            q_radius: 0.3,
            p_max: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct PendubotDesignSection {
    pub rho: f64,
    pub k3: f64,
    pub kp: f64,
    pub kv: f64,
    pub x_threshold: f64,
    pub p_threshold: f64,
}

impl Default for PendubotDesignSection {
    fn default() -> Self {
        let g = PendubotGains::default();
        Self {
            rho: g.rho,
            k3: g.k3,
            kp: g.kp,
            kv: g.kv,
            x_threshold: DEFAULT_X_THRESHOLD,
            p_threshold: DEFAULT_P_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct TouchDesignSection {
    pub kappa: f64,
    pub kp: Vec<f64>,
    /// Diagonal of the damping gain `K_d`.
    pub kd: Vec<f64>,
    pub q_star: Vec<f64>,
    pub x_threshold: f64,
}

impl Default for TouchDesignSection {
    fn default() -> Self {
        Self {
            kappa: 0.001,
            kp: vec![1.0; 3],
            kd: vec![0.3; 3],
            q_star: vec![0.5, PI / 4.0, -0.5],
            x_threshold: DEFAULT_X_THRESHOLD,
        }
    }
}

/// A fully built experiment: model, design and simulation settings.
pub struct Experiment {
    pub name: ModelName,
    pub model: Box<dyn MechanicalModel>,
    pub design: Box<dyn ShapingDesign>,
    pub sim: SimConfig,
    pub settle_tol: f64,
    pub output: OutputSection,
    pub verify: VerifySection,
    /// Parameters actually used, echoed into every output file.
    pub metadata: serde_json::Value,
}

impl fmt::Debug for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Experiment")
            .field("name", &self.name)
            .field("sim", &self.sim)
            .field("metadata", &self.metadata)
            .finish()
    }
}

impl Experiment {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(ConfigError::Parse)?;
        Self::build(cfg)
    }

    pub fn build(cfg: ExperimentConfig) -> Result<Self, ConfigError> {
        let (model, design, x_threshold, metadata): (Box<dyn MechanicalModel>, Box<dyn ShapingDesign>, f64, _) =
            match cfg.model.name {
                ModelName::Pendubot => {
                    let physical: PendubotPhysical = table_into(&cfg.model.params, "model.params")?;
                    let params = PendubotParams::from_physical(&physical).map_err(ConfigError::Invariant)?;
                    let section: PendubotDesignSection = table_into(&cfg.design, "design")?;
                    check_threshold("design.x_threshold", section.x_threshold)?;
                    check_threshold("design.p_threshold", section.p_threshold)?;
                    let gains = PendubotGains {
                        rho: section.rho,
                        k3: section.k3,
                        kp: section.kp,
                        kv: section.kv,
                    };
                    let design = PendubotDesign::new(params, gains, section.p_threshold)
                        .map_err(ConfigError::Invariant)?;
                    let meta = serde_json::json!({
                        "model": { "name": "pendubot", "physical": physical, "constants": params },
                        "design": section,
                    });
                    let model = Pendubot::new(params).map_err(ConfigError::Invariant)?;
                    (Box::new(model), Box::new(design), section.x_threshold, meta)
                }
                ModelName::Touch => {
                    let params: TouchParams = table_into(&cfg.model.params, "model.params")?;
                    let model = Touch::new(params).map_err(ConfigError::Invariant)?;
                    let section: TouchDesignSection = table_into(&cfg.design, "design")?;
                    check_threshold("design.x_threshold", section.x_threshold)?;
                    for (field, v) in [("design.kp", &section.kp), ("design.kd", &section.kd), ("design.q_star", &section.q_star)] {
                        if v.len() != 3 {
                            return Err(field_err(field, format!("expected 3 entries, got {}", v.len())));
                        }
                    }
                    let design = TouchDesign::new(
                        section.kappa,
                        Vector::from_column_slice(&section.kp),
                        Matrix::from_diagonal(&Vector::from_column_slice(&section.kd)),
                        Vector::from_column_slice(&section.q_star),
                    )
                    .map_err(ConfigError::Invariant)?;
                    let meta = serde_json::json!({
                        "model": { "name": "touch", "params": params },
                        "design": section,
                    });
                    (Box::new(model), Box::new(design), section.x_threshold, meta)
                }
                ModelName::Custom => {
                    return Err(field_err(
                        "model.name",
                        "custom models are built through the library API (implement MechanicalModel and ShapingDesign)",
                    ))
                }
            };

        let n = model.dof();
        let s = &cfg.sim;
        if !(s.dt > 0.0) || !s.dt.is_finite() {
            return Err(field_err(
                "sim.dt",
                format!("must be positive, got {}", s.dt),
            ));
        }
        if !(s.t_final >= s.dt) || !s.t_final.is_finite() {
            return Err(field_err(
                "sim.t_final",
                format!("must be at least dt, got {}", s.t_final),
            ));
        }
        if s.record_stride == 0 {
            return Err(field_err("sim.record_stride", "must be at least 1"));
        }
        if !(s.settle_tol > 0.0) {
            return Err(field_err("sim.settle_tol", "must be positive"));
        }
        if s.q0.len() != n {
            return Err(field_err(
                "sim.q0",
                format!("expected {n} entries, got {}", s.q0.len()),
            ));
        }
        let q0 = Vector::from_column_slice(&s.q0);
        let initial = match (&s.p0, &s.qdot0) {
            (Some(_), Some(_)) => {
                return Err(field_err("sim.p0", "give either p0 or qdot0, not both"))
            }
            (Some(p), None) => {
                if p.len() != n {
                    return Err(field_err(
                        "sim.p0",
                        format!("expected {n} entries, got {}", p.len()),
                    ));
                }
                State::new(q0, Vector::from_column_slice(p))
            }
            (None, Some(v)) => {
                if v.len() != n {
                    return Err(field_err(
                        "sim.qdot0",
                        format!("expected {n} entries, got {}", v.len()),
                    ));
                }
                State::from_velocity(model.as_ref(), q0, &Vector::from_column_slice(v))
            }
            (None, None) => State::at_rest(q0),
        };
        if !initial.is_finite() {
            return Err(field_err("sim.q0", "initial state must be finite"));
        }

        let v = &cfg.verify;
        if v.samples == 0 {
            return Err(field_err("verify.samples", "must be at least 1"));
        }
        if !(v.q_radius >= 0.0) || !(v.p_max >= 0.0) {
            return Err(field_err(
                "verify",
                "q_radius and p_max must be non-negative",
            ));
        }

        let mut sim = SimConfig::new(
            initial.clone(),
            s.controller.unwrap_or(Controller::Reduced),
            s.t_final,
            s.dt,
        )
        .with_stride(s.record_stride)
        .with_update(s.control_update);
        sim.x_threshold = x_threshold;

        let mut metadata = metadata;
        metadata["sim"] = serde_json::json!({
            "t_final": s.t_final,
            "dt": s.dt,
            "q0": initial.q.as_slice(),
            "p0": initial.p.as_slice(),
            "record_stride": s.record_stride,
            "settle_tol": s.settle_tol,
            "control_update": s.control_update,
        });

        Ok(Self {
            name: cfg.model.name,
            model,
            design,
            sim,
            settle_tol: s.settle_tol,
            output: cfg.output,
            verify: cfg.verify,
            metadata,
        })
    }
}

fn table_into<T: serde::de::DeserializeOwned>(
    table: &toml::Table,
    field: &str,
) -> Result<T, ConfigError> {
    toml::Value::Table(table.clone())
        .try_into()
        .map_err(|e: toml::de::Error| field_err(field, e.message().to_string()))
}

fn check_threshold(field: &str, v: f64) -> Result<(), ConfigError> {
    if !(v >= 0.0) || !v.is_finite() {
        return Err(field_err(
            field,
            format!("must be a non-negative number, got {v}"),
        ));
    }
    Ok(())
}
