//! The outer maximization: inexact projected (sub)gradient ascent over the
//! decision atoms, with each gradient taken at the entropic inner plan.

mod duality;
pub mod utility;

pub use duality::{solve_constrained, theta_sweep, DualConfig};
pub use utility::{CaraUtility, LinearUtility, QuadraticTracking, ShortageUtility, Utility};

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coupling::{marginals, CouplingMatrix};
use crate::divergence::{eval_divergence, DivergenceKind, DivergenceSpec};
use crate::error::{ensure_len, RdroError, Result};
use crate::matrix::Matrix;
use crate::measure::DiscreteMeasure;
use crate::projection::DecisionSet;
use crate::transport::{regularized_objective, scaling_solve_from, CostMatrix, ScalingConfig};

/// A discrete penalized instance `sup_x inf_γ ⟨U(x,y), γ⟩ + θ D(π₂γ, ν₀)`
/// with `π₁γ = p`.
#[derive(Debug, Clone)]
pub struct PenalizedProblem {
    pub utility: Arc<dyn Utility>,
    pub p: DiscreteMeasure,
    pub nu0: DiscreteMeasure,
    /// One vector per environment atom.
    pub y_values: Vec<Vec<f64>>,
    /// Length of each decision atom; decisions are flat `n × atom_dim`.
    pub atom_dim: usize,
    pub theta: f64,
    pub divergence: DivergenceKind,
    pub decision_set: DecisionSet,
    pub epsilon: f64,
}

impl PenalizedProblem {
    pub fn validate(&self) -> Result<()> {
        if !self.p.is_probability() || !self.nu0.is_probability() {
            return Err(RdroError::Configuration(
                "p and nu0 must be probability measures".into(),
            ));
        }
        ensure_len("environment atoms", self.nu0.len(), self.y_values.len())?;
        ensure_len(
            "decision set dimension",
            self.p.len() * self.atom_dim,
            self.decision_set.dim(),
        )?;
        if !(self.theta >= 0.0) {
            return Err(RdroError::Configuration(format!(
                "theta must be nonnegative, got {}",
                self.theta
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(RdroError::Configuration(format!(
                "epsilon must be positive, got {}",
                self.epsilon
            )));
        }
        if self.atom_dim == 0 {
            return Err(RdroError::Configuration("atom_dim must be positive".into()));
        }
        self.decision_set.validate()
    }

    pub fn n(&self) -> usize {
        self.p.len()
    }

    pub fn r(&self) -> usize {
        self.nu0.len()
    }

    pub fn with_theta(&self, theta: f64) -> Self {
        Self { theta, ..self.clone() }
    }

    pub fn penalty(&self) -> Result<DivergenceSpec> {
        DivergenceSpec::new(self.divergence, self.theta)
    }

    fn atom<'a>(&self, x: &'a [f64], i: usize) -> &'a [f64] {
        &x[i * self.atom_dim..(i + 1) * self.atom_dim]
    }

    /// `C_ij = U(x_i, y_j)`; a non-finite utility is reported with its atom.
    pub fn cost_matrix(&self, x: &[f64]) -> Result<CostMatrix> {
        ensure_len("decision vector", self.n() * self.atom_dim, x.len())?;
        let mut m = Matrix::zeros(self.n(), self.r());
        for i in 0..self.n() {
            let xi = self.atom(x, i);
            for (j, y) in self.y_values.iter().enumerate() {
                let u = self.utility.value(xi, y);
                if !u.is_finite() {
                    return Err(RdroError::NumericalRange(format!(
                        "utility at decision atom {i} (x = {xi:?}) and environment atom {j} (y = {y:?}) is {u}"
                    )));
                }
                m.set(i, j, u);
            }
        }
        CostMatrix::new(m)
    }

    /// Unregularized objective `f(x, γ)`.
    pub fn objective(&self, x: &[f64], plan: &CouplingMatrix) -> Result<f64> {
        let cost = self.cost_matrix(x)?;
        regularized_objective(&cost, plan, &self.p, &self.nu0, &self.penalty()?, 0.0)
    }

    /// `x0` from the configured initialization: the projection of zero, or a
    /// seeded random feasible point.
    pub fn initial_point(&self, seed: Option<u64>) -> Result<Vec<f64>> {
        match seed {
            None => self.decision_set.project(&vec![0.0; self.decision_set.dim()]),
            Some(s) => {
                let mut rng = ChaCha8Rng::seed_from_u64(s);
                self.decision_set.sample_feasible(&mut rng)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepDirection {
    /// `x ← P(x + α∇)`
    #[default]
    Ascent,
    /// `x ← P(x − α∇)`
    #[serde(rename = "paper_descent", alias = "descent")]
    Descent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OuterConfig {
    pub step_size: f64,
    pub max_outer_iterations: usize,
    pub outer_tolerance: f64,
    pub direction: StepDirection,
    /// `None`: start from the projection of zero.
    pub seed: Option<u64>,
    /// Halve the step while the plan-fixed objective gets worse.
    pub backtracking: bool,
    /// Keep every iterate in the report.
    pub record_iterates: bool,
}

impl Default for OuterConfig {
    fn default() -> Self {
        Self {
            step_size: 0.1,
            max_outer_iterations: 100_000,
            outer_tolerance: 1e-8,
            direction: StepDirection::Ascent,
            seed: None,
            backtracking: false,
            record_iterates: false,
        }
    }
}

impl OuterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) {
            return Err(RdroError::Configuration(format!(
                "step_size must be positive, got {}",
                self.step_size
            )));
        }
        if !(self.outer_tolerance > 0.0) {
            return Err(RdroError::Configuration(format!(
                "outer_tolerance must be positive, got {}",
                self.outer_tolerance
            )));
        }
        if self.max_outer_iterations == 0 {
            return Err(RdroError::Configuration("max_outer_iterations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub objective: f64,
    /// `‖x_{k+1} − x_k‖_∞`
    pub step_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub theta: f64,
    pub x_star: Vec<f64>,
    pub plan: CouplingMatrix,
    /// `J^p(θ)`
    pub penalized_value: f64,
    /// `D(π₂γ*, ν₀)`, the divergence of the worst-case environment law.
    pub eta: f64,
    /// `J^c(η) = J^p(θ) − θη`
    pub constrained_value: f64,
    pub trace: Vec<TraceEntry>,
    pub iterations: usize,
    pub converged: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterates: Option<Vec<Vec<f64>>>,
}

/// `(∇f_γ(x))_i = Σ_j γ_ij ∂_x U(x_i, y_j)`.
pub fn outer_gradient(problem: &PenalizedProblem, x: &[f64], plan: &CouplingMatrix) -> Result<Vec<f64>> {
    let d = problem.atom_dim;
    ensure_len("decision vector", problem.n() * d, x.len())?;
    if plan.shape() != (problem.n(), problem.r()) {
        return Err(RdroError::Dimension(format!(
            "plan is {:?}, problem is {}x{}",
            plan.shape(),
            problem.n(),
            problem.r()
        )));
    }
    let mut grad = vec![0.0; x.len()];
    let mut scratch = vec![0.0; d];
    for i in 0..problem.n() {
        let xi = problem.atom(x, i);
        let gi = &mut grad[i * d..(i + 1) * d];
        for (j, y) in problem.y_values.iter().enumerate() {
            let w = plan.get(i, j);
            if w == 0.0 {
                continue;
            }
            problem.utility.gradient(xi, y, &mut scratch);
            for (g, s) in gi.iter_mut().zip(&scratch) {
                *g += w * s;
            }
        }
    }
    Ok(grad)
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Plan-fixed utility `Σ γ_ij U(x_i, y_j)`.
fn plan_fixed_value(problem: &PenalizedProblem, x: &[f64], plan: &CouplingMatrix) -> Result<f64> {
    Ok(problem.cost_matrix(x)?.matrix().dot(plan.matrix()))
}

/// Inexact projected gradient method with a scaling-algorithm inner solve.
pub fn solve_penalized(
    problem: &PenalizedProblem,
    x0: &[f64],
    config: &OuterConfig,
    scaling_config: &ScalingConfig,
) -> Result<SolveReport> {
    problem.validate()?;
    config.validate()?;
    let scaling = ScalingConfig {
        epsilon: problem.epsilon,
        ..*scaling_config
    };
    scaling.validate()?;
    let penalty = problem.penalty()?;
    let sign = match config.direction {
        StepDirection::Ascent => 1.0,
        StepDirection::Descent => -1.0,
    };

    let mut x = problem.decision_set.project(x0)?;
    let mut warm: Option<Vec<f64>> = None;
    let mut trace = Vec::new();
    let mut iterates = config.record_iterates.then(|| vec![x.clone()]);
    let mut converged = false;
    let mut step = config.step_size;

    for k in 0..config.max_outer_iterations {
        let cost = problem.cost_matrix(&x)?;
        let inner = scaling_solve_from(&cost, &problem.p, &problem.nu0, &penalty, &scaling, warm.as_deref())?;
        let objective = regularized_objective(&cost, &inner.plan, &problem.p, &problem.nu0, &penalty, 0.0)?;
        if !objective.is_finite() {
            return Err(RdroError::NumericalRange(format!(
                "objective is {objective} at outer iteration {k}"
            )));
        }
        let grad = outer_gradient(problem, &x, &inner.plan)?;
        let propose = |s: f64| -> Result<Vec<f64>> {
            let moved: Vec<f64> = x.iter().zip(&grad).map(|(v, g)| v + sign * s * g).collect();
            problem.decision_set.project(&moved)
        };
        let mut next = propose(step)?;
        if config.backtracking {
            let here = sign * plan_fixed_value(problem, &x, &inner.plan)?;
            while sign * plan_fixed_value(problem, &next, &inner.plan)? < here && step > config.step_size * 1e-6 {
                step *= 0.5;
                next = propose(step)?;
            }
        }
        let step_residual = max_abs_diff(&next, &x);
        trace.push(TraceEntry {
            iteration: k,
            objective,
            step_residual,
        });
        x = next;
        if let Some(it) = iterates.as_mut() {
            it.push(x.clone());
        }
        warm = Some(inner.log_b);
        if step_residual < config.outer_tolerance {
            converged = true;
            break;
        }
    }

    let cost = problem.cost_matrix(&x)?;
    let inner = scaling_solve_from(&cost, &problem.p, &problem.nu0, &penalty, &scaling, warm.as_deref())?;
    let penalized_value = regularized_objective(&cost, &inner.plan, &problem.p, &problem.nu0, &penalty, 0.0)?;
    let (_, second) = marginals(&inner.plan);
    let eta = eval_divergence(
        &DivergenceSpec::new(problem.divergence, 1.0)?,
        second.weights(),
        problem.nu0.weights(),
    )?;
    let (penalized_value, constrained_value) = dual_pair(penalized_value, problem.theta * eta);
    Ok(SolveReport {
        theta: problem.theta,
        iterations: trace.len(),
        x_star: x,
        plan: inner.plan,
        penalized_value,
        eta,
        constrained_value,
        trace,
        converged,
        iterates,
    })
}

/// `‖x_k − x_ref‖_∞` along recorded iterates.
/// Returns `(J^p, J^c)` with `J^c = J^p − θη` and `J^c + θη = J^p` both
/// holding exactly in floating point; `J^p` moves by at most a few ulps of
/// `max(|J^p|, θη)`.
fn dual_pair(penalized: f64, theta_eta: f64) -> (f64, f64) {
    let mut v = penalized;
    for _ in 0..64 {
        let c = v - theta_eta;
        let back = c + theta_eta;
        if back == v {
            return (v, c);
        }
        v = back;
    }
    (penalized, penalized - theta_eta)
}

pub fn residual_series(iterates: &[Vec<f64>], reference: &[f64]) -> Vec<f64> {
    iterates.iter().map(|x| max_abs_diff(x, reference)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::inner_value;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn linear_problem() -> PenalizedProblem {
        PenalizedProblem {
            utility: Arc::new(LinearUtility),
            p: DiscreteMeasure::uniform(2),
            nu0: DiscreteMeasure::uniform(2),
            y_values: vec![vec![0.0], vec![1.0]],
            atom_dim: 1,
            theta: 1.0,
            divergence: DivergenceKind::Kl,
            decision_set: DecisionSet::box_budget(vec![1.0, 1.0], 2.0).unwrap(),
            epsilon: 0.05,
        }
    }

    #[test]
    fn dual_pair_is_exact_both_ways() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let j: f64 = rng.random_range(-10.0..10.0);
            let t: f64 = rng.random_range(0.0..10.0) * 10f64.powi(rng.random_range(-8..3));
            let (jp, jc) = dual_pair(j, t);
            assert_eq!(jc + t, jp);
            assert_eq!(jp - t, jc);
            assert!((jp - j).abs() <= 4.0 * f64::EPSILON * j.abs().max(t));
        }
    }

    #[test]
    fn linear_gradient_reads_plan_weights() {
        let problem = linear_problem();
        let plan = CouplingMatrix::from_rows(&[vec![0.3, 0.7], vec![0.0, 0.0]]).unwrap();
        let g = outer_gradient(&problem, &[0.5, 0.5], &plan).unwrap();
        assert_abs_diff_eq!(g[0], 0.7, epsilon = 1e-15);
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn cara_gradient_matches_plan_fixed_finite_difference() {
        let problem = PenalizedProblem {
            utility: Arc::new(CaraUtility { risk_aversion: 0.5 }),
            ..linear_problem()
        };
        let plan = CouplingMatrix::from_rows(&[vec![0.2, 0.3], vec![0.35, 0.15]]).unwrap();
        let x = [0.4, 1.3];
        let g = outer_gradient(&problem, &x, &plan).unwrap();
        let h = 1e-5;
        for k in 0..2 {
            let mut up = x;
            let mut dn = x;
            up[k] += h;
            dn[k] -= h;
            let fd = (plan_fixed_value(&problem, &up, &plan).unwrap()
                - plan_fixed_value(&problem, &dn, &plan).unwrap())
                / (2.0 * h);
            assert!((g[k] - fd).abs() <= 1e-6);
        }
    }

    #[test]
    fn singleton_set_pins_the_decision() {
        let problem = PenalizedProblem {
            utility: Arc::new(CaraUtility { risk_aversion: 0.5 }),
            decision_set: DecisionSet::budget_orthant(vec![0.5, 0.5], 0.0).unwrap(),
            ..linear_problem()
        };
        let scaling = ScalingConfig::default();
        let report = solve_penalized(&problem, &[0.3, 0.9], &OuterConfig::default(), &scaling).unwrap();
        assert_eq!(report.x_star, vec![0.0, 0.0]);
        assert!(report.converged);
        assert!(report.iterations <= 2);
        let cost = problem.cost_matrix(&[0.0, 0.0]).unwrap();
        let config = ScalingConfig {
            epsilon: problem.epsilon,
            ..scaling
        };
        let (value, _) = inner_value(&cost, &problem.p, &problem.nu0, problem.theta, &config).unwrap();
        assert_abs_diff_eq!(report.penalized_value, value, epsilon = 1e-9);
    }

    #[test]
    fn report_identity_holds_by_construction() {
        let problem = PenalizedProblem {
            utility: Arc::new(CaraUtility { risk_aversion: 0.5 }),
            decision_set: DecisionSet::budget_orthant(vec![0.5, 0.5], 1.0).unwrap(),
            ..linear_problem()
        };
        let report = solve_penalized(
            &problem,
            &[0.0, 0.0],
            &OuterConfig::default(),
            &ScalingConfig::default(),
        )
        .unwrap();
        assert_eq!(
            report.constrained_value,
            report.penalized_value - problem.theta * report.eta
        );
        assert!(report.eta > 0.0);
        assert!(problem.decision_set.feasibility_residual(&report.x_star).unwrap() <= 1e-8);
    }

    #[test]
    fn overflowing_utility_names_the_atom() {
        let problem = PenalizedProblem {
            utility: Arc::new(CaraUtility { risk_aversion: 50.0 }),
            y_values: vec![vec![-100.0], vec![1.0]],
            decision_set: DecisionSet::box_budget(vec![1.0, 1.0], 2.0).unwrap(),
            ..linear_problem()
        };
        let err = solve_penalized(
            &problem,
            &[0.0, 0.0],
            &OuterConfig::default(),
            &ScalingConfig::default(),
        )
        .unwrap_err();
        match err {
            RdroError::NumericalRange(msg) => assert!(msg.contains("decision atom 0"), "{msg}"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let problem = linear_problem();
        let bad = OuterConfig {
            step_size: 0.0,
            ..Default::default()
        };
        assert!(solve_penalized(&problem, &[0.0, 0.0], &bad, &ScalingConfig::default()).is_err());
        let bad_problem = PenalizedProblem {
            epsilon: 0.0,
            ..linear_problem()
        };
        assert!(solve_penalized(
            &bad_problem,
            &[0.0, 0.0],
            &OuterConfig::default(),
            &ScalingConfig::default()
        )
        .is_err());
    }
}
