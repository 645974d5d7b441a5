//! Penalty/constraint duality: sweeping θ traces `(θ, η(θ), J^p(θ), J^c(η))`,
//! and bisection on θ recovers the constrained problem at a target η.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{solve_penalized, OuterConfig, PenalizedProblem, SolveReport};
use crate::error::{RdroError, Result};
use crate::transport::ScalingConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DualConfig {
    /// Stop when `|η(θ) − η_target|` falls below this.
    pub tolerance: f64,
    pub max_bisections: usize,
}

impl Default for DualConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-6,
            max_bisections: 80,
        }
    }
}

/// Solves the penalized problem at each θ; the solves run in parallel.
pub fn theta_sweep(
    problem_template: &PenalizedProblem,
    thetas: &[f64],
    outer: &OuterConfig,
    scaling: &ScalingConfig,
) -> Result<Vec<SolveReport>> {
    if thetas.is_empty() {
        return Err(RdroError::Configuration("theta grid is empty".into()));
    }
    if thetas.iter().any(|t| !(*t > 0.0) || !t.is_finite()) {
        return Err(RdroError::Configuration(
            "theta grid values must be positive and finite".into(),
        ));
    }
    if thetas.windows(2).any(|w| w[1] <= w[0]) {
        return Err(RdroError::Configuration(
            "theta grid must be strictly increasing".into(),
        ));
    }
    let x0 = problem_template.initial_point(outer.seed)?;
    thetas
        .par_iter()
        .map(|&theta| solve_penalized(&problem_template.with_theta(theta), &x0, outer, scaling))
        .collect()
}

/// Finds θ with `η(θ) ≈ eta_target` by bisection (geometric when the
/// bracket is positive) and returns the report there.
pub fn solve_constrained(
    problem_template: &PenalizedProblem,
    eta_target: f64,
    theta_bracket: (f64, f64),
    outer: &OuterConfig,
    scaling: &ScalingConfig,
    dual: &DualConfig,
) -> Result<SolveReport> {
    let (mut lo, mut hi) = theta_bracket;
    if !(eta_target >= 0.0) {
        return Err(RdroError::Configuration(format!(
            "eta_target must be nonnegative, got {eta_target}"
        )));
    }
    if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
        return Err(RdroError::Configuration(format!("invalid theta bracket ({lo}, {hi})")));
    }
    let x0 = problem_template.initial_point(outer.seed)?;
    let solve = |theta: f64, start: &[f64]| solve_penalized(&problem_template.with_theta(theta), start, outer, scaling);
    let mut at_lo = solve(lo, &x0)?;
    let mut at_hi = solve(hi, &x0)?;
    if !(at_lo.eta >= eta_target && eta_target >= at_hi.eta) {
        if (at_lo.eta - eta_target).abs() <= dual.tolerance {
            return Ok(at_lo);
        }
        if (at_hi.eta - eta_target).abs() <= dual.tolerance {
            return Ok(at_hi);
        }
        return Err(RdroError::Bracket {
            low: lo,
            high: hi,
            eta_low: at_lo.eta,
            eta_high: at_hi.eta,
            target: eta_target,
        });
    }
    for _ in 0..dual.max_bisections {
        let closest = if (at_lo.eta - eta_target).abs() <= (at_hi.eta - eta_target).abs() {
            &at_lo
        } else {
            &at_hi
        };
        if (closest.eta - eta_target).abs() <= dual.tolerance || hi - lo <= 1e-14 * hi {
            return Ok(closest.clone());
        }
        let mid = if lo > 0.0 { (lo * hi).sqrt() } else { 0.5 * (lo + hi) };
        let start = closest.x_star.clone();
        let at_mid = solve(mid, &start)?;
        if at_mid.eta >= eta_target {
            lo = mid;
            at_lo = at_mid;
        } else {
            hi = mid;
            at_hi = at_mid;
        }
    }
    log::warn!("theta bisection hit its cap before reaching the eta tolerance");
    Ok(if (at_lo.eta - eta_target).abs() <= (at_hi.eta - eta_target).abs() {
        at_lo
    } else {
        at_hi
    })
}
