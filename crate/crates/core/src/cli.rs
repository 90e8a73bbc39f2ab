//! Command-line front end: `simulate`, `compare`, `solve`, `verify`.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 bad config or arguments,
//! 3 simulation divergence, 4 model/design invariant violation,
//! 5 verification failure.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::config::{ConfigError, Experiment, OutputFormat};
use crate::error::Error;
use crate::idapbc::{validate_design, Controller};
use crate::linalg::{inf_norm, Matrix, Vector};
use crate::linfshape;
use crate::sim::{dissipation_tolerance, integrate, metrics, Metrics, Trajectory};
use crate::verify;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_INVARIANT: i32 = 4;
pub const EXIT_VERIFY: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "sidapbc",
    version,
    about = "Energy shaping controllers with l-infinity input reduction"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate one controller and write trajectory.csv and metrics.json.
    Simulate(SimulateArgs),
    /// Simulate ida, th1 and reduced on the same initial condition.
    Compare(CompareArgs),
    /// Solve min ‖Ax − b‖∞ subject to A + Aᵀ ⪯ 0 and print JSON.
    Solve(SolveArgs),
    /// Randomized invariant checks on the configured model and design.
    Verify(VerifyArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    pub config: PathBuf,
    /// ida, th1 or reduced; overrides `sim.controller`.
    #[arg(long)]
    pub controller: Option<Controller>,
    /// Output directory; overrides `output.directory`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    /// Comma-separated direction x, e.g. `1,1`.
    #[arg(long, allow_hyphen_values = true)]
    pub x: String,
    /// Comma-separated target b, e.g. `1,0`.
    #[arg(long, allow_hyphen_values = true)]
    pub b: String,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    pub config: PathBuf,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// A failure carrying its process exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        let code = match e {
            ConfigError::Invariant(_) => EXIT_INVARIANT,
            _ => EXIT_CONFIG,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Diverged { .. } => EXIT_DIVERGED,
            Error::Dimension(_) => EXIT_CONFIG,
            _ => EXIT_INVARIANT,
        };
        CliError::new(code, e.to_string())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::new(EXIT_IO, format!("{}: {e}", path.display()))
}

/// Parses `args` (including the program name), runs the command and
/// returns the exit code. Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = match cli.command {
        Command::Simulate(a) => simulate(&a, &mut out).map(|_| ()),
        Command::Compare(a) => compare(&a, &mut out).map(|_| ()),
        Command::Solve(a) => solve(&a, &mut out),
        Command::Verify(a) => verify_cmd(&a, &mut out).map(|_| ()),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {}", e.message);
            e.code
        }
    }
}

fn prepare(config: &Path) -> Result<Experiment, CliError> {
    let exp = Experiment::load(config)?;
    validate_design(exp.model.as_ref(), exp.design.as_ref())?;
    Ok(exp)
}

fn out_dir(exp: &Experiment, flag: &Option<PathBuf>) -> Result<PathBuf, CliError> {
    let dir = flag.clone().unwrap_or_else(|| exp.output.directory.clone());
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    Ok(dir)
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes one row per recorded sample: time, state, control components,
/// `H_d`, the ∞-norm of the kinetic part and the selected branch.
pub fn write_trajectory_csv(path: &Path, traj: &Trajectory) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    let n = traj.states.first().map_or(0, |s| s.dof());
    let m = traj.controls.first().map_or(0, |c| c.u.len());
    let mut header = vec!["t".to_string()];
    for prefix in ["q", "p"] {
        header.extend((1..=n).map(|i| format!("{prefix}{i}")));
    }
    for prefix in ["u", "uki", "uovki"] {
        header.extend((1..=m).map(|i| format!("{prefix}{i}")));
    }
    header.extend(["hd", "phi", "selected"].map(String::from));
    w.write_record(&header).map_err(|e| io_err(path, e))?;

    for k in 0..traj.len() {
        let (s, c) = (&traj.states[k], &traj.controls[k]);
        let mut row = vec![num(traj.times[k])];
        for v in [&s.q, &s.p, &c.u, &c.u_ki, &c.u_ovki] {
            row.extend(v.iter().map(|x| num(*x)));
        }
        row.push(num(traj.hd[k]));
        row.push(num(c.phi));
        row.push(c.selected.to_string());
        w.write_record(&row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

fn summary_json(exp: &Experiment, traj: &Trajectory, m: &Metrics) -> serde_json::Value {
    json!({
        "metadata": exp.metadata,
        "metrics": m,
        "hd_initial": traj.hd.first(),
        "hd_final": traj.hd.last(),
        "hd_dissipation_fraction": traj.dissipation_fraction(dissipation_tolerance(exp.sim.dt)),
    })
}

/// Output of [`simulate`].
#[derive(Debug)]
pub struct SimulateOutput {
    pub directory: PathBuf,
    pub trajectory: Trajectory,
    pub metrics: Metrics,
}

pub fn simulate(args: &SimulateArgs, out: &mut dyn Write) -> Result<SimulateOutput, CliError> {
    let mut exp = prepare(&args.config)?;
    if let Some(c) = args.controller {
        exp.sim.controller = c;
    }
    let dir = out_dir(&exp, &args.out)?;
    let traj = integrate(exp.model.as_ref(), exp.design.as_ref(), &exp.sim)?;
    let m = metrics(&traj, exp.design.q_star(), exp.settle_tol, None)?;
    if exp.output.formats.contains(&OutputFormat::Csv) {
        write_trajectory_csv(&dir.join("trajectory.csv"), &traj)?;
    }
    if exp.output.formats.contains(&OutputFormat::Json) {
        write_json(&dir.join("metrics.json"), &summary_json(&exp, &traj, &m))?;
    }
    writeln!(
        out,
        "{}: peak |u|inf = {:.6}, final |q - q*|inf = {:.3e}, settled = {}, switches = {}",
        m.controller,
        m.peak_u_inf,
        inf_norm(&Vector::from_vec(m.final_q_error.clone())),
        m.settled,
        m.switch_count
    )
    .map_err(|e| io_err(&dir, e))?;
    Ok(SimulateOutput {
        directory: dir,
        trajectory: traj,
        metrics: m,
    })
}

/// Output of [`compare`]: metrics for ida, th1 and reduced, in that order,
/// with reductions measured against ida.
#[derive(Debug)]
pub struct CompareOutput {
    pub directory: PathBuf,
    pub metrics: Vec<Metrics>,
}

pub fn compare(args: &CompareArgs, out: &mut dyn Write) -> Result<CompareOutput, CliError> {
    let exp = prepare(&args.config)?;
    let dir = out_dir(&exp, &args.out)?;
    let runs: Vec<_> = std::thread::scope(|scope| {
        let handles: Vec<_> = Controller::ALL
            .iter()
            .map(|&c| {
                let cfg = exp.sim.clone().with_controller(c);
                let (model, design) = (exp.model.as_ref(), exp.design.as_ref());
                scope.spawn(move || integrate(model, design, &cfg))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });
    let trajs = runs.into_iter().collect::<Result<Vec<_>, _>>()?;

    let baseline = &trajs[0];
    let mut all = Vec::with_capacity(trajs.len());
    for traj in &trajs {
        let m = metrics(traj, exp.design.q_star(), exp.settle_tol, Some(baseline))?;
        let name = traj.controller.as_str();
        if exp.output.formats.contains(&OutputFormat::Csv) {
            write_trajectory_csv(&dir.join(format!("trajectory_{name}.csv")), traj)?;
        }
        if exp.output.formats.contains(&OutputFormat::Json) {
            write_json(
                &dir.join(format!("metrics_{name}.json")),
                &summary_json(&exp, traj, &m),
            )?;
        }
        writeln!(
            out,
            "{name:>8}: peak |u|inf = {:.6}  reduction vs ida = {:>8}  peak |u_ovki|inf = {:.3e}  settled = {}",
            m.peak_u_inf,
            m.reduction_vs.map_or("n/a".to_string(), |r| format!("{r:.3}%")),
            m.peak_uovki_inf,
            m.settled
        )
        .map_err(|e| io_err(&dir, e))?;
        all.push(m);
    }
    if exp.output.formats.contains(&OutputFormat::Json) {
        let value = json!({
            "metadata": exp.metadata,
            "baseline": Controller::Ida,
            "controllers": all,
        });
        write_json(&dir.join("comparison.json"), &value)?;
    }
    Ok(CompareOutput {
        directory: dir,
        metrics: all,
    })
}

fn parse_vector(field: &str, text: &str) -> Result<Vector, CliError> {
    let values = text
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| CliError::new(EXIT_CONFIG, format!("invalid `--{field}`: {e}")))?;
    if values.iter().any(|v| !v.is_finite()) {
        return Err(CliError::new(
            EXIT_CONFIG,
            format!("invalid `--{field}`: entries must be finite"),
        ));
    }
    Ok(Vector::from_vec(values))
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn solve(args: &SolveArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let x = parse_vector("x", &args.x)?;
    let b = parse_vector("b", &args.b)?;
    let sol = linfshape::solve(&x, &b).map_err(|e| CliError::new(EXIT_CONFIG, e.to_string()))?;
    let value = json!({
        "A_s": rows(&sol.sym),
        "A_w": rows(&sol.skew),
        "a_s": sol.a_s,
        "xi": sol.xi.as_slice(),
        "v": sol.v.as_slice(),
        "phi": sol.phi,
        "residual_inf": inf_norm(&sol.residual(&x, &b)),
    });
    let text =
        serde_json::to_string_pretty(&value).map_err(|e| CliError::new(EXIT_IO, e.to_string()))?;
    writeln!(out, "{text}").map_err(|e| CliError::new(EXIT_IO, e.to_string()))
}

pub fn verify_cmd(
    args: &VerifyArgs,
    out: &mut dyn Write,
) -> Result<verify::VerifyReport, CliError> {
    // design invariants are part of the report here, so load without the
    // up-front design validation used by the simulators
    let exp = Experiment::load(&args.config)?;
    let mut settings = exp.verify;
    if let Some(n) = args.samples {
        if n == 0 {
            return Err(CliError::new(
                EXIT_CONFIG,
                "invalid `--samples`: must be at least 1",
            ));
        }
        settings.samples = n;
    }
    if let Some(seed) = args.seed {
        settings.seed = seed;
    }
    let dir = out_dir(&exp, &args.out)?;
    let report = verify::run(
        exp.model.as_ref(),
        exp.design.as_ref(),
        &settings,
        exp.sim.x_threshold,
    )?;
    let value = json!({ "metadata": exp.metadata, "report": report });
    write_json(&dir.join("verify_report.json"), &value)?;
    for c in &report.checks {
        let status = match (&c.skipped, c.passed) {
            (Some(_), _) => "SKIP",
            (None, true) => "ok",
            (None, false) => "FAIL",
        };
        writeln!(
            out,
            "{status:>4}  {:<40} max {:>11.3e}  tol {:.1e}",
            c.name, c.max_deviation, c.tolerance
        )
        .map_err(|e| io_err(&dir, e))?;
    }
    if let Some(worst) = report.worst_failure() {
        return Err(CliError::new(
            EXIT_VERIFY,
            format!(
                "verification failed: {} (max deviation {:.3e}, tolerance {:.1e}, at q = {:?}, p = {:?})",
                worst.name,
                worst.max_deviation,
                worst.tolerance,
                worst.worst_q.clone().unwrap_or_default(),
                worst.worst_p.clone().unwrap_or_default()
            ),
        ));
    }
    Ok(report)
}
