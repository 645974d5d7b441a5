//! Exhaustive grid search over couplings with first marginal exactly `p`,
//! used to check the scaling solver on tiny instances.

use crate::coupling::CouplingMatrix;
use crate::divergence::{eval_divergence, DivergenceSpec};
use crate::error::{ensure_len, RdroError, Result};
use crate::matrix::Matrix;
use crate::measure::DiscreteMeasure;

use super::CostMatrix;

const MAX_ATOMS: usize = 3;
const MAX_GRID_POINTS: f64 = 2e8;
const REFINEMENT_PASSES: usize = 4;
const REFINEMENT_RESOLUTION: usize = 40;

/// Row `i` of the coupling is `p_i · q_i` with `q_i` on the probability
/// simplex; `q_i` is parameterized by its first `r − 1` coordinates.
///
/// A full grid at `grid_resolution` steps per axis is followed by a few
/// local grids around the incumbent at successively finer steps.
pub fn oracle_inner(
    cost: &CostMatrix,
    p: &DiscreteMeasure,
    nu0: &DiscreteMeasure,
    theta: f64,
    grid_resolution: usize,
) -> Result<(f64, CouplingMatrix)> {
    let (n, r) = cost.shape();
    ensure_len("first marginal p", n, p.len())?;
    ensure_len("nominal measure nu0", r, nu0.len())?;
    if n > MAX_ATOMS || r > MAX_ATOMS {
        return Err(RdroError::Capacity(format!(
            "{n}x{r} exceeds the {MAX_ATOMS}x{MAX_ATOMS} oracle limit"
        )));
    }
    if grid_resolution == 0 {
        return Err(RdroError::Configuration("grid_resolution must be positive".into()));
    }
    let free = n * (r - 1);
    let points = (grid_resolution as f64 + 1.0).powi(free as i32);
    if points > MAX_GRID_POINTS {
        return Err(RdroError::Capacity(format!(
            "{points:.3e} grid points at resolution {grid_resolution}"
        )));
    }
    let penalty = DivergenceSpec::kl(theta)?;
    let search = Search {
        cost,
        p: p.weights(),
        nu0: nu0.weights(),
        penalty,
    };

    let mut center = vec![vec![0.5; r - 1]; n];
    let mut half_width = 0.5;
    let mut steps = grid_resolution;
    let mut best = search.pass(&center, half_width, steps)?;
    for _ in 0..REFINEMENT_PASSES {
        let step = 2.0 * half_width / steps as f64;
        center = best.1.clone();
        half_width = 2.0 * step;
        steps = REFINEMENT_RESOLUTION;
        let candidate = search.pass(&center, half_width, steps)?;
        if candidate.0 <= best.0 {
            best = candidate;
        }
    }
    let (value, conditionals) = best;
    let plan = Matrix::from_fn(n, r, |i, j| p.weights()[i] * full(&conditionals[i])[j]);
    Ok((value, CouplingMatrix::new(plan)?))
}

fn full(head: &[f64]) -> Vec<f64> {
    let mut q = head.to_vec();
    q.push((1.0 - head.iter().sum::<f64>()).max(0.0));
    q
}

struct Search<'a> {
    cost: &'a CostMatrix,
    p: &'a [f64],
    nu0: &'a [f64],
    penalty: DivergenceSpec,
}

/// Candidate conditional for one row, with its transport cost and column mass.
struct RowCandidate {
    head: Vec<f64>,
    cost: f64,
    mass: Vec<f64>,
}

impl Search<'_> {
    fn row_candidates(&self, i: usize, center: &[f64], half_width: f64, steps: usize) -> Vec<RowCandidate> {
        let r = self.nu0.len();
        let dims = r - 1;
        let mut out = Vec::new();
        let mut idx = vec![0usize; dims];
        loop {
            let head: Vec<f64> = idx
                .iter()
                .zip(center)
                .map(|(&k, &c)| (c - half_width + 2.0 * half_width * k as f64 / steps as f64).clamp(0.0, 1.0))
                .collect();
            if head.iter().sum::<f64>() <= 1.0 + 1e-12 {
                let q = full(&head);
                let mass: Vec<f64> = q.iter().map(|v| self.p[i] * v).collect();
                let cost = mass.iter().zip(self.cost.matrix().row(i)).map(|(m, c)| m * c).sum();
                out.push(RowCandidate { head, cost, mass });
            }
            // odometer
            let mut d = 0;
            loop {
                if d == dims {
                    return out;
                }
                idx[d] += 1;
                if idx[d] <= steps {
                    break;
                }
                idx[d] = 0;
                d += 1;
            }
        }
    }

    fn pass(&self, center: &[Vec<f64>], half_width: f64, steps: usize) -> Result<(f64, Vec<Vec<f64>>)> {
        let n = self.p.len();
        let r = self.nu0.len();
        let rows: Vec<Vec<RowCandidate>> = (0..n)
            .map(|i| self.row_candidates(i, &center[i], half_width, steps))
            .collect();
        let mut choice = vec![0usize; n];
        let mut best_value = f64::INFINITY;
        let mut best_choice = choice.clone();
        let mut column = vec![0.0; r];
        loop {
            column.iter_mut().for_each(|c| *c = 0.0);
            let mut value = 0.0;
            for (i, &k) in choice.iter().enumerate() {
                let cand = &rows[i][k];
                value += cand.cost;
                for (c, m) in column.iter_mut().zip(&cand.mass) {
                    *c += m;
                }
            }
            value += eval_divergence(&self.penalty, &column, self.nu0)?;
            if value < best_value {
                best_value = value;
                best_choice.clone_from(&choice);
            }
            let mut d = 0;
            loop {
                if d == n {
                    let heads = best_choice
                        .iter()
                        .enumerate()
                        .map(|(i, &k)| rows[i][k].head.clone())
                        .collect();
                    return Ok((best_value, heads));
                }
                choice[d] += 1;
                if choice[d] < rows[d].len() {
                    break;
                }
                choice[d] = 0;
                d += 1;
            }
        }
    }
}
