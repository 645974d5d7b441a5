//! Feasible decision sets and their Euclidean projections.
//!
//! Every set here is a box intersected with one linear budget (and, for the
//! coverage set, one linear lower bound), so each projection reduces to a
//! scalar monotone equation in the budget multiplier, solved by bisection.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ensure_len, RdroError, Result};

const BISECTION_TOL: f64 = 1e-12;
const BISECTION_MAX_ITER: usize = 200;

/// Decision vectors are flat: `atoms × dim` entries, atom-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DecisionSet {
    /// `{x ≥ 0, Σ w_k x_k ≤ budget}`
    BudgetOrthant { weights: Vec<f64>, budget: f64 },
    /// `{0 ≤ x_k ≤ u_k, Σ w_k x_k ≤ capacity}`; weights default to one.
    BoxBudget {
        upper: Vec<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        weights: Option<Vec<f64>>,
        capacity: f64,
    },
    /// Per atom `i`: `{0 ≤ x_ik ≤ u_k, Σ_k x_ik ≤ capacity}`; jointly:
    /// `Σ_i p_i Σ_k x_ik ≥ coverage · capacity`.
    CoverageSimplex {
        probabilities: Vec<f64>,
        upper: Vec<f64>,
        capacity: f64,
        coverage: f64,
    },
}

impl DecisionSet {
    pub fn budget_orthant(weights: Vec<f64>, budget: f64) -> Result<Self> {
        let s = Self::BudgetOrthant { weights, budget };
        s.validate()?;
        Ok(s)
    }

    pub fn box_budget(upper: Vec<f64>, capacity: f64) -> Result<Self> {
        let s = Self::BoxBudget {
            upper,
            weights: None,
            capacity,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn coverage_simplex(probabilities: Vec<f64>, upper: Vec<f64>, capacity: f64, coverage: f64) -> Result<Self> {
        let s = Self::CoverageSimplex {
            probabilities,
            upper,
            capacity,
            coverage,
        };
        s.validate()?;
        Ok(s)
    }

    /// Length of the flat decision vector.
    pub fn dim(&self) -> usize {
        match self {
            Self::BudgetOrthant { weights, .. } => weights.len(),
            Self::BoxBudget { upper, .. } => upper.len(),
            Self::CoverageSimplex {
                probabilities, upper, ..
            } => probabilities.len() * upper.len(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(RdroError::Configuration(msg));
        match self {
            Self::BudgetOrthant { weights, budget } => {
                if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
                    return bad("budget weights must be positive and finite".into());
                }
                if !(*budget >= 0.0) {
                    return bad(format!("budget must be nonnegative, got {budget}"));
                }
            }
            Self::BoxBudget {
                upper,
                weights,
                capacity,
            } => {
                if upper.iter().any(|u| !(*u >= 0.0)) {
                    return bad("upper bounds must be nonnegative".into());
                }
                if let Some(w) = weights {
                    ensure_len("box-budget weights", upper.len(), w.len())?;
                    if w.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
                        return bad("box-budget weights must be positive".into());
                    }
                }
                if !(*capacity >= 0.0) {
                    return bad(format!("capacity must be nonnegative, got {capacity}"));
                }
            }
            Self::CoverageSimplex {
                probabilities,
                upper,
                capacity,
                coverage,
            } => {
                if probabilities.iter().any(|p| !(*p >= 0.0)) {
                    return bad("atom probabilities must be nonnegative".into());
                }
                if upper.iter().any(|u| !(*u >= 0.0)) {
                    return bad("upper bounds must be nonnegative".into());
                }
                if !(*capacity >= 0.0) {
                    return bad(format!("capacity must be nonnegative, got {capacity}"));
                }
                if !(0.0..=1.0).contains(coverage) {
                    return bad(format!("coverage must lie in [0, 1], got {coverage}"));
                }
                let mass: f64 = probabilities.iter().sum();
                let reachable = mass * capacity.min(upper.iter().sum());
                if coverage * capacity > reachable * (1.0 + 1e-12) {
                    return bad(format!(
                        "coverage {} needs mean allocation {} but at most {reachable} is reachable",
                        coverage,
                        coverage * capacity
                    ));
                }
            }
        }
        Ok(())
    }

    /// Euclidean projection onto the set.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.validate()?;
        ensure_len("decision vector", self.dim(), x.len())?;
        if let Some(k) = x.iter().position(|v| !v.is_finite()) {
            return Err(RdroError::Domain(format!("decision entry {k} is {}", x[k])));
        }
        Ok(match self {
            Self::BudgetOrthant { weights, budget } => {
                let upper = vec![f64::INFINITY; x.len()];
                project_box_budget(x, &upper, weights, *budget)
            }
            Self::BoxBudget {
                upper,
                weights,
                capacity,
            } => {
                let ones;
                let w = match weights {
                    Some(w) => w.as_slice(),
                    None => {
                        ones = vec![1.0; upper.len()];
                        &ones
                    }
                };
                project_box_budget(x, upper, w, *capacity)
            }
            Self::CoverageSimplex {
                probabilities,
                upper,
                capacity,
                coverage,
            } => project_coverage(x, probabilities, upper, *capacity, *coverage),
        })
    }

    /// Largest constraint violation; zero iff feasible.
    pub fn feasibility_residual(&self, x: &[f64]) -> Result<f64> {
        ensure_len("decision vector", self.dim(), x.len())?;
        let lower = x.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
        Ok(match self {
            Self::BudgetOrthant { weights, budget } => lower.max(dot(weights, x) - budget),
            Self::BoxBudget {
                upper,
                weights,
                capacity,
            } => {
                let spent = match weights {
                    Some(w) => dot(w, x),
                    None => x.iter().sum(),
                };
                lower.max(upper_violation(x, upper)).max(spent - capacity)
            }
            Self::CoverageSimplex {
                probabilities,
                upper,
                capacity,
                coverage,
            } => {
                let d = upper.len();
                let mut worst = lower;
                let mut mean = 0.0;
                for (i, p) in probabilities.iter().enumerate() {
                    let atom = &x[i * d..(i + 1) * d];
                    let total: f64 = atom.iter().sum();
                    worst = worst.max(upper_violation(atom, upper)).max(total - capacity);
                    mean += p * total;
                }
                worst.max(coverage * capacity - mean)
            }
        }
        .max(0.0))
    }

    /// A random feasible point, for randomized initialization.
    pub fn sample_feasible<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let raw: Vec<f64> = match self {
            Self::BudgetOrthant { weights, budget } => {
                let z: Vec<f64> = weights.iter().map(|_| rng.random::<f64>()).collect();
                let spend = dot(weights, &z);
                let target = budget * rng.random_range(0.5..1.0);
                if spend > 0.0 {
                    z.iter().map(|v| v * target / spend).collect()
                } else {
                    z
                }
            }
            Self::BoxBudget { upper, .. } => upper
                .iter()
                .map(|u| {
                    if u.is_finite() {
                        u * rng.random::<f64>()
                    } else {
                        rng.random::<f64>()
                    }
                })
                .collect(),
            Self::CoverageSimplex {
                probabilities, upper, ..
            } => (0..probabilities.len())
                .flat_map(|_| upper.iter().map(|u| u * rng.random::<f64>()).collect::<Vec<_>>())
                .collect(),
        };
        self.project(&raw)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn upper_violation(x: &[f64], upper: &[f64]) -> f64 {
    x.iter().zip(upper).map(|(v, u)| (v - u).max(0.0)).fold(0.0, f64::max)
}

fn clamp_shifted(x: &[f64], upper: &[f64], weights: &[f64], t: f64, out: &mut [f64]) {
    for (((o, v), u), w) in out.iter_mut().zip(x).zip(upper).zip(weights) {
        *o = (v - t * w).clamp(0.0, *u);
    }
}

/// Projection onto `{0 ≤ x ≤ u, wᵀx ≤ budget}` by bisection on the budget
/// multiplier `t` in `x(t) = clamp(x − t w, 0, u)`.
fn project_box_budget(x: &[f64], upper: &[f64], weights: &[f64], budget: f64) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    if budget == 0.0 {
        return out;
    }
    clamp_shifted(x, upper, weights, 0.0, &mut out);
    let tol = BISECTION_TOL * (1.0 + budget);
    if dot(weights, &out) <= budget + tol {
        return out;
    }
    // normalize so the multiplier is on the scale of x
    let wmax = weights.iter().cloned().fold(0.0, f64::max);
    let w: Vec<f64> = weights.iter().map(|v| v / wmax).collect();
    let b = budget / wmax;
    let spend = |y: &[f64]| dot(&w, y);
    let mut lo = 0.0;
    let mut hi = x.iter().zip(&w).map(|(v, wi)| v.max(0.0) / wi).fold(0.0, f64::max);
    let tol = BISECTION_TOL * (1.0 + b);
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        clamp_shifted(x, upper, &w, mid, &mut out);
        let s = spend(&out);
        if s > b {
            lo = mid;
        } else {
            hi = mid;
            if b - s <= tol {
                break;
            }
        }
    }
    clamp_shifted(x, upper, &w, hi, &mut out);
    out
}

fn project_coverage(x: &[f64], probabilities: &[f64], upper: &[f64], capacity: f64, coverage: f64) -> Vec<f64> {
    let d = upper.len();
    let ones = vec![1.0; d];
    let target = coverage * capacity;
    let at = |t: f64| -> (Vec<f64>, f64) {
        let mut out = Vec::with_capacity(x.len());
        let mut mean = 0.0;
        for (i, p) in probabilities.iter().enumerate() {
            let shifted: Vec<f64> = x[i * d..(i + 1) * d].iter().map(|v| v + t * p).collect();
            let y = project_box_budget(&shifted, upper, &ones, capacity);
            mean += p * y.iter().sum::<f64>();
            out.extend(y);
        }
        (out, mean)
    };
    let (y0, mean0) = at(0.0);
    let tol = BISECTION_TOL * (1.0 + target);
    if mean0 >= target - tol {
        return y0;
    }
    // coverage binds: raise every coordinate by t·p_i until the mean reaches target
    let pmin = probabilities
        .iter()
        .cloned()
        .filter(|p| *p > 0.0)
        .fold(f64::INFINITY, f64::min);
    let span = x.iter().map(|v| v.abs()).fold(0.0, f64::max)
        + upper.iter().cloned().filter(|u| u.is_finite()).fold(capacity, f64::max);
    let mut lo = 0.0;
    let mut hi = 2.0 * span / pmin;
    let mut best = at(hi).0;
    for _ in 0..BISECTION_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        let (y, mean) = at(mid);
        if mean < target {
            lo = mid;
        } else {
            hi = mid;
            best = y;
            if mean - target <= tol {
                break;
            }
        }
    }
    best
}
