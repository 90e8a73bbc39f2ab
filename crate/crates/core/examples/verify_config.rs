// Runs the randomized invariant suite on an experiment file.
//
//     cargo run --example verify_config -- configs/pendubot.toml
//     cargo run --example verify_config -- configs/pendubot_corrupt.toml

use sidapbc::config::Experiment;
use sidapbc::verify;

pub fn run(path: &str) -> Result<bool, Box<dyn std::error::Error>> {
    let exp = Experiment::load(path)?;
    let report = verify::run(
        exp.model.as_ref(),
        exp.design.as_ref(),
        &exp.verify,
        exp.sim.x_threshold,
    )?;
    println!(
        "{} ({} samples, seed {})",
        report.model, report.samples, report.seed
    );
    for c in &report.checks {
        let status = if c.skipped.is_some() {
            "skip"
        } else if c.passed {
            "ok"
        } else {
            "FAIL"
        };
        println!("  {status:>4} {:<40} {:.3e}", c.name, c.max_deviation);
    }
    if let Some(worst) = report.worst_failure() {
        println!("worst failure: {}", worst.name);
    }
    Ok(report.passed)
}

fn main() {
    let path = std::env::args().nth(1).unwrap_or_else(|| {
        concat!(env!("CARGO_MANIFEST_DIR"), "/configs/pendubot.toml").to_string()
    });
    match run(&path) {
        Ok(true) => {}
        Ok(false) => std::process::exit(5),
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(2);
        }
    }
}
