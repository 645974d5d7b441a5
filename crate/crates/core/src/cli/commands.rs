use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use super::config::{RunConfig, Target};
use super::verify::{run_suite, SUITES};
use crate::error::{RdroError, Result};
use crate::solver::{solve_constrained, solve_penalized, SolveReport};

/// How a command finished, mapped to the process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Converged,
    IterationCap,
    Failed,
}

impl Outcome {
    pub fn exit_code(self) -> u8 {
        match self {
            Outcome::Converged => 0,
            Outcome::Failed => 1,
            Outcome::IterationCap => 2,
        }
    }
}

/// Round-trip precision: 17 significant digits.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path, e: std::io::Error) -> RdroError {
    RdroError::Configuration(format!("cannot write {}: {e}", path.display()))
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| io_err(&path, e))
}

fn rows_csv<'a>(rows: impl Iterator<Item = &'a [f64]>) -> String {
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row.iter().map(|v| format_value(*v)).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

fn write_report(dir: &Path, report: &SolveReport, atom_dim: usize) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| RdroError::Configuration(format!("cannot serialize report: {e}")))?;
    write(dir, "report.json", &json)?;

    let mut trace = String::from("iteration,objective,residual\n");
    for t in &report.trace {
        let _ = writeln!(
            trace,
            "{},{},{}",
            t.iteration,
            format_value(t.objective),
            format_value(t.step_residual)
        );
    }
    write(dir, "trace.csv", &trace)?;

    let plan = report.plan.matrix();
    write(dir, "plan.csv", &rows_csv((0..plan.rows()).map(|i| plan.row(i))))?;
    write(dir, "x_star.csv", &rows_csv(report.x_star.chunks(atom_dim.max(1))))
}

fn status(converged: bool) -> Outcome {
    if converged {
        Outcome::Converged
    } else {
        Outcome::IterationCap
    }
}

/// Solves at the configured θ, or at the θ matching `eta_target`, and
/// writes `report.json`, `trace.csv`, `plan.csv`, `x_star.csv` into `out`.
pub fn cmd_solve(config: &RunConfig, out: &Path) -> Result<Outcome> {
    let problem = config.build_problem()?;
    let outer = config.outer_config();
    let report = match config.target() {
        Target::Theta(_) => {
            let x0 = problem.initial_point(outer.seed)?;
            solve_penalized(&problem, &x0, &outer, &config.scaling)?
        }
        Target::Eta(eta) => {
            let [lo, hi] = config.theta_bracket;
            solve_constrained(&problem, eta, (lo, hi), &outer, &config.scaling, &config.dual)?
        }
        Target::Grid(_) => {
            return Err(RdroError::Configuration(
                "field `theta_grid`: `solve` needs `theta` or `eta_target`; use `sweep` for grids".into(),
            ))
        }
    };
    write_report(out, &report, problem.atom_dim)?;
    log::info!(
        "theta {} eta {} J^p {} J^c {} after {} iterations",
        report.theta,
        report.eta,
        report.penalized_value,
        report.constrained_value,
        report.iterations
    );
    Ok(status(report.converged))
}

/// One penalized solve per grid point, in parallel; writes `duality.csv`.
pub fn cmd_sweep(config: &RunConfig, out: &Path) -> Result<Outcome> {
    let Target::Grid(grid) = config.target() else {
        return Err(RdroError::Configuration(
            "field `theta_grid`: `sweep` needs a theta grid".into(),
        ));
    };
    let template = config.build_problem()?;
    let outer = config.outer_config();
    let x0 = template.initial_point(outer.seed)?;
    let rows: Vec<(SolveReport, u128)> = grid
        .par_iter()
        .map(|&theta| {
            let start = Instant::now();
            let report = solve_penalized(&template.with_theta(theta), &x0, &outer, &config.scaling)?;
            Ok((report, start.elapsed().as_millis()))
        })
        .collect::<Result<_>>()?;

    fs::create_dir_all(out).map_err(|e| io_err(out, e))?;
    let mut csv = String::from("theta,eta,value_penalized,value_constrained,iterations,runtime_ms\n");
    for (r, ms) in &rows {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            format_value(r.theta),
            format_value(r.eta),
            format_value(r.penalized_value),
            format_value(r.constrained_value),
            r.iterations,
            ms
        );
    }
    write(out, "duality.csv", &csv)?;
    Ok(status(rows.iter().all(|(r, _)| r.converged)))
}

/// Runs a named oracle suite, printing one line per property.
pub fn cmd_verify(suite: &str) -> Result<Outcome> {
    let Some(checks) = run_suite(suite)? else {
        return Err(RdroError::Configuration(format!(
            "unknown suite `{suite}`; available: {}",
            SUITES.join(", ")
        )));
    };
    let mut all = true;
    for c in &checks {
        all &= c.passed();
        println!(
            "{} {suite}/{}: measured {:.3e}, tolerance {:.1e}",
            if c.passed() { "PASS" } else { "FAIL" },
            c.name,
            c.measured + 0.0,
            c.tolerance
        );
    }
    Ok(if all { Outcome::Converged } else { Outcome::Failed })
}
