//! Inner infimum of the penalized problem: entropic unbalanced transport
//! between the decision law `p` (hard first-marginal constraint) and the
//! nominal environment law `ν₀` (soft, divergence-penalized second marginal).
//!
//! The scaling iterations run in the log domain against the Gibbs kernel
//! `K_ij = exp(−C_ij/ε) p_i ν⁰_j`, i.e. the entropy term is
//! `H(γ) = KL(γ | p ⊗ ν₀)`. Plans are always `γ_ij = a_i K_ij b_j`.

mod oracle;

pub use oracle::oracle_inner;

use serde::{Deserialize, Serialize};

use crate::coupling::{marginals, CouplingMatrix};
use crate::divergence::{eval_divergence, proxdiv_log, DivergenceSpec, ProxdivVariant};
use crate::error::{ensure_len, RdroError, Result};
use crate::matrix::Matrix;
use crate::measure::DiscreteMeasure;

/// Utility values `U(x_i, y_j)` arranged decision-atom by environment-atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CostMatrix(Matrix);

impl CostMatrix {
    pub fn new(m: Matrix) -> Result<Self> {
        if let Some(k) = m.as_slice().iter().position(|v| !v.is_finite()) {
            let (i, j) = (k / m.cols(), k % m.cols());
            return Err(RdroError::NumericalRange(format!(
                "cost entry ({i}, {j}) is {}",
                m.get(i, j)
            )));
        }
        Ok(Self(m))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn matrix(&self) -> &Matrix {
        &self.0
    }

    pub fn shape(&self) -> (usize, usize) {
        self.0.shape()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScalingConfig {
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Threshold on the largest relative change of `b` between sweeps.
    pub tolerance: f64,
    pub proxdiv_variant: ProxdivVariant,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        Self {
            epsilon: 1e-2,
            max_iterations: 10_000,
            tolerance: 1e-9,
            proxdiv_variant: ProxdivVariant::Standard,
        }
    }
}

impl ScalingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(RdroError::Configuration(format!(
                "epsilon must be positive and finite, got {}",
                self.epsilon
            )));
        }
        if !(self.tolerance > 0.0) {
            return Err(RdroError::Configuration(format!(
                "scaling tolerance must be positive, got {}",
                self.tolerance
            )));
        }
        if self.max_iterations == 0 {
            return Err(RdroError::Configuration("max_iterations must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub plan: CouplingMatrix,
    /// `ln a`, `-inf` on rows dropped for zero mass.
    pub log_a: Vec<f64>,
    /// `ln b`, `-inf` on columns dropped for zero mass.
    pub log_b: Vec<f64>,
    /// `ln K`, `-inf` on dropped rows and columns.
    pub log_kernel: Matrix,
    pub iterations_used: usize,
    /// Regularized objective at `plan`.
    pub primal_value: f64,
    pub residual: f64,
    pub converged: bool,
}

impl ScalingReport {
    /// The scaling vectors `(a, b)`; may under- or overflow for tiny ε.
    pub fn scalings(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.log_a.iter().map(|v| v.exp()).collect(),
            self.log_b.iter().map(|v| v.exp()).collect(),
        )
    }
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max == f64::INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Iterate-level access to the scaling loop.
///
/// Zero-mass atoms of `p` and `ν₀` are removed on construction and come back
/// as zero rows/columns in [`ScalingState::plan`].
#[derive(Debug, Clone)]
pub struct ScalingState {
    n: usize,
    r: usize,
    rows: Vec<usize>,
    cols: Vec<usize>,
    log_p: Vec<f64>,
    log_nu: Vec<f64>,
    /// Reduced `ln K`, row-major `rows.len() × cols.len()`.
    log_k: Vec<f64>,
    log_a: Vec<f64>,
    log_b: Vec<f64>,
    log_s: Vec<f64>,
    next_b: Vec<f64>,
    spec: DivergenceSpec,
    config: ScalingConfig,
    iterations: usize,
}

impl ScalingState {
    pub fn new(
        cost: &CostMatrix,
        p: &DiscreteMeasure,
        nu0: &DiscreteMeasure,
        second_marginal: &DivergenceSpec,
        config: &ScalingConfig,
    ) -> Result<Self> {
        config.validate()?;
        let (n, r) = cost.shape();
        ensure_len("first marginal p", n, p.len())?;
        ensure_len("nominal measure nu0", r, nu0.len())?;
        let rows = p.support();
        let cols = nu0.support();
        if rows.is_empty() || cols.is_empty() {
            return Err(RdroError::Domain("p and nu0 must each carry positive mass".into()));
        }
        let eps = config.epsilon;
        let c = cost.matrix();
        let mut log_k = Vec::with_capacity(rows.len() * cols.len());
        for &i in &rows {
            let lp = p.weights()[i].ln();
            for &j in &cols {
                let v = -c.get(i, j) / eps + lp + nu0.weights()[j].ln();
                if !v.is_finite() {
                    return Err(RdroError::NumericalRange(format!(
                        "kernel entry ({i}, {j}) = exp({v}) is not representable; cost {} with epsilon {eps}",
                        c.get(i, j)
                    )));
                }
                log_k.push(v);
            }
        }
        let nr = rows.len();
        let nc = cols.len();
        Ok(Self {
            n,
            r,
            log_p: rows.iter().map(|&i| p.weights()[i].ln()).collect(),
            log_nu: cols.iter().map(|&j| nu0.weights()[j].ln()).collect(),
            rows,
            cols,
            log_k,
            log_a: vec![0.0; nr],
            log_b: vec![0.0; nc],
            log_s: vec![0.0; nc],
            next_b: vec![0.0; nc],
            spec: *second_marginal,
            config: *config,
            iterations: 0,
        })
    }

    /// Starts from a previous full-length `ln b` instead of `b = 1`.
    pub fn warm_start(&mut self, log_b: &[f64]) -> Result<()> {
        ensure_len("warm start ln b", self.r, log_b.len())?;
        for (k, &j) in self.cols.iter().enumerate() {
            if log_b[j].is_finite() {
                self.log_b[k] = log_b[j];
            }
        }
        Ok(())
    }

    fn update_a(&mut self) {
        let nc = self.cols.len();
        for (i, la) in self.log_a.iter_mut().enumerate() {
            let row = &self.log_k[i * nc..(i + 1) * nc];
            let lse = log_sum_exp(row.iter().zip(&self.log_b).map(|(k, b)| k + b));
            *la = self.log_p[i] - lse;
        }
    }

    /// One sweep (`a` then `b`); returns the largest relative change of `b`.
    pub fn step(&mut self) -> Result<f64> {
        self.update_a();
        let nc = self.cols.len();
        for j in 0..nc {
            let log_k = &self.log_k;
            self.log_s[j] = log_sum_exp(self.log_a.iter().enumerate().map(|(i, a)| log_k[i * nc + j] + a));
        }
        proxdiv_log(
            &self.spec,
            &self.log_s,
            &self.log_nu,
            self.config.epsilon,
            self.config.proxdiv_variant,
            &mut self.next_b,
        );
        let mut change: f64 = 0.0;
        for (k, (old, new)) in self.log_b.iter().zip(&self.next_b).enumerate() {
            if !new.is_finite() {
                return Err(RdroError::NumericalRange(format!(
                    "scaling b[{}] left the representable range at iteration {}",
                    self.cols[k],
                    self.iterations + 1
                )));
            }
            change = change.max((new - old).exp_m1().abs());
        }
        std::mem::swap(&mut self.log_b, &mut self.next_b);
        self.iterations += 1;
        Ok(change)
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    /// Current full-size plan `a_i K_ij b_j`, with `a` refreshed from the
    /// current `b` so the first marginal is exact.
    pub fn plan(&mut self) -> CouplingMatrix {
        self.update_a();
        let nc = self.cols.len();
        let mut m = Matrix::zeros(self.n, self.r);
        for (ri, &i) in self.rows.iter().enumerate() {
            for (ci, &j) in self.cols.iter().enumerate() {
                let v = (self.log_a[ri] + self.log_k[ri * nc + ci] + self.log_b[ci]).exp();
                m.set(i, j, v);
            }
        }
        CouplingMatrix::from_matrix_unchecked(m)
    }

    fn full_log_a(&self) -> Vec<f64> {
        let mut out = vec![f64::NEG_INFINITY; self.n];
        for (k, &i) in self.rows.iter().enumerate() {
            out[i] = self.log_a[k];
        }
        out
    }

    fn full_log_b(&self) -> Vec<f64> {
        let mut out = vec![f64::NEG_INFINITY; self.r];
        for (k, &j) in self.cols.iter().enumerate() {
            out[j] = self.log_b[k];
        }
        out
    }

    fn full_log_kernel(&self) -> Matrix {
        let nc = self.cols.len();
        let mut m = Matrix::from_fn(self.n, self.r, |_, _| f64::NEG_INFINITY);
        for (ri, &i) in self.rows.iter().enumerate() {
            for (ci, &j) in self.cols.iter().enumerate() {
                m.set(i, j, self.log_k[ri * nc + ci]);
            }
        }
        m
    }
}

/// Runs the scaling loop to convergence or the iteration cap.
pub fn scaling_solve(
    cost: &CostMatrix,
    p: &DiscreteMeasure,
    nu0: &DiscreteMeasure,
    second_marginal_divergence: &DivergenceSpec,
    config: &ScalingConfig,
) -> Result<ScalingReport> {
    scaling_solve_from(cost, p, nu0, second_marginal_divergence, config, None)
}

/// As [`scaling_solve`], optionally warm-started from a previous `ln b`.
pub fn scaling_solve_from(
    cost: &CostMatrix,
    p: &DiscreteMeasure,
    nu0: &DiscreteMeasure,
    second_marginal_divergence: &DivergenceSpec,
    config: &ScalingConfig,
    warm_log_b: Option<&[f64]>,
) -> Result<ScalingReport> {
    let mut state = ScalingState::new(cost, p, nu0, second_marginal_divergence, config)?;
    if let Some(b) = warm_log_b {
        state.warm_start(b)?;
    }
    let mut residual = f64::INFINITY;
    let mut converged = false;
    while state.iterations() < config.max_iterations {
        residual = state.step()?;
        if residual < config.tolerance {
            converged = true;
            break;
        }
    }
    let plan = state.plan();
    let primal_value = regularized_objective(cost, &plan, p, nu0, second_marginal_divergence, config.epsilon)?;
    Ok(ScalingReport {
        log_a: state.full_log_a(),
        log_b: state.full_log_b(),
        log_kernel: state.full_log_kernel(),
        iterations_used: state.iterations(),
        plan,
        primal_value,
        residual,
        converged,
    })
}

/// Generalized KL of `γ` against `p ⊗ ν₀`: the entropy term `H(γ)`.
pub fn entropy_term(gamma: &CouplingMatrix, p: &[f64], nu0: &[f64]) -> f64 {
    let m = gamma.matrix();
    let mut h = 0.0;
    for (i, &pi) in p.iter().enumerate() {
        for (j, &nj) in nu0.iter().enumerate() {
            let g = m.get(i, j);
            let reference = pi * nj;
            if g > 0.0 {
                if reference == 0.0 {
                    return f64::INFINITY;
                }
                h += g * ((g / reference).ln() - 1.0);
            }
            h += reference;
        }
    }
    h
}

/// `⟨C, γ⟩ + ι(π₁γ = p) + D(π₂γ, ν₀) + ε H(γ)`.
pub fn regularized_objective(
    cost: &CostMatrix,
    gamma: &CouplingMatrix,
    p: &DiscreteMeasure,
    nu0: &DiscreteMeasure,
    second_marginal_divergence: &DivergenceSpec,
    epsilon: f64,
) -> Result<f64> {
    let (n, r) = cost.shape();
    if gamma.shape() != (n, r) {
        return Err(RdroError::Dimension(format!(
            "plan is {:?}, cost is {:?}",
            gamma.shape(),
            (n, r)
        )));
    }
    ensure_len("first marginal p", n, p.len())?;
    ensure_len("nominal measure nu0", r, nu0.len())?;
    if !(epsilon >= 0.0) {
        return Err(RdroError::Domain(format!("epsilon must be nonnegative, got {epsilon}")));
    }
    let (first, second) = marginals(gamma);
    let equality = eval_divergence(&DivergenceSpec::equality(), first.weights(), p.weights())?;
    if equality.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let transport = cost.matrix().dot(gamma.matrix());
    let penalty = eval_divergence(second_marginal_divergence, second.weights(), nu0.weights())?;
    let entropy = if epsilon == 0.0 {
        0.0
    } else {
        epsilon * entropy_term(gamma, p.weights(), nu0.weights())
    };
    Ok(transport + penalty + entropy)
}

/// Unregularized inner value at the scaling plan for a `θ·KL` penalty.
pub fn inner_value(
    cost: &CostMatrix,
    p: &DiscreteMeasure,
    nu0: &DiscreteMeasure,
    theta: f64,
    config: &ScalingConfig,
) -> Result<(f64, CouplingMatrix)> {
    let spec = DivergenceSpec::kl(theta)?;
    let report = scaling_solve(cost, p, nu0, &spec, config)?;
    let value = regularized_objective(cost, &report.plan, p, nu0, &spec, 0.0)?;
    Ok((value, report.plan))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn kl(theta: f64) -> DivergenceSpec {
        DivergenceSpec::kl(theta).unwrap()
    }

    fn random_cost(rng: &mut ChaCha8Rng, n: usize, r: usize) -> CostMatrix {
        CostMatrix::new(Matrix::from_fn(n, r, |_, _| rng.random::<f64>())).unwrap()
    }

    fn random_prob(rng: &mut ChaCha8Rng, n: usize) -> DiscreteMeasure {
        let w: Vec<f64> = (0..n).map(|_| 0.1 + rng.random::<f64>()).collect();
        let s: f64 = w.iter().sum();
        DiscreteMeasure::new(w.into_iter().map(|v| v / s).collect()).unwrap()
    }

    #[test]
    fn single_atom_plan_is_forced() {
        let cost = CostMatrix::from_rows(&[vec![3.7]]).unwrap();
        let one = DiscreteMeasure::new(vec![1.0]).unwrap();
        let report = scaling_solve(
            &cost,
            &one,
            &one,
            &DivergenceSpec::equality(),
            &ScalingConfig::default(),
        )
        .unwrap();
        assert_abs_diff_eq!(report.plan.get(0, 0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn plan_factorizes_through_scalings() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cost = random_cost(&mut rng, 6, 4);
        let p = random_prob(&mut rng, 6);
        let nu = random_prob(&mut rng, 4);
        let report = scaling_solve(&cost, &p, &nu, &kl(0.7), &ScalingConfig::default()).unwrap();
        let (a, b) = report.scalings();
        for i in 0..6 {
            for j in 0..4 {
                let k = report.log_kernel.get(i, j).exp();
                let g = report.plan.get(i, j);
                assert!((a[i] * k * b[j] - g).abs() <= 1e-12 * g);
            }
        }
    }

    #[test]
    fn first_marginal_is_feasible_after_convergence() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let cost = random_cost(&mut rng, 8, 3);
        let p = random_prob(&mut rng, 8);
        let nu = random_prob(&mut rng, 3);
        let config = ScalingConfig::default();
        let report = scaling_solve(&cost, &p, &nu, &kl(2.0), &config).unwrap();
        assert!(report.converged);
        let (rows, _) = marginals(&report.plan);
        for (g, q) in rows.weights().iter().zip(p.weights()) {
            assert!((g - q).abs() <= config.tolerance);
        }
    }

    #[test]
    fn zero_mass_atoms_are_reinstated_as_zero() {
        let cost = CostMatrix::from_rows(&[vec![0.1, 0.5, 0.2], vec![0.4, 0.3, 0.9]]).unwrap();
        let p = DiscreteMeasure::new(vec![1.0, 0.0]).unwrap();
        let nu = DiscreteMeasure::new(vec![0.5, 0.0, 0.5]).unwrap();
        let report = scaling_solve(&cost, &p, &nu, &kl(1.0), &ScalingConfig::default()).unwrap();
        for j in 0..3 {
            assert_eq!(report.plan.get(1, j), 0.0);
        }
        assert_eq!(report.plan.get(0, 1), 0.0);
        assert_abs_diff_eq!(report.plan.total_mass(), 1.0, epsilon = 1e-9);
        assert!(report.primal_value.is_finite());
    }

    #[test]
    fn tiny_epsilon_stays_finite_in_log_domain() {
        let cost = CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let half = DiscreteMeasure::uniform(2);
        let config = ScalingConfig {
            epsilon: 1e-3,
            ..Default::default()
        };
        let report = scaling_solve(&cost, &half, &half, &DivergenceSpec::equality(), &config).unwrap();
        // permutation plan diag(0.5, 0.5), the unique LP vertex
        assert_abs_diff_eq!(report.plan.get(0, 0), 0.5, epsilon = 1e-3);
        assert_abs_diff_eq!(report.plan.get(1, 1), 0.5, epsilon = 1e-3);
        assert_abs_diff_eq!(report.plan.get(0, 1), 0.0, epsilon = 1e-3);
    }

    #[test]
    fn unrepresentable_kernel_is_a_range_error() {
        let cost = CostMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let p = DiscreteMeasure::new(vec![1.0]).unwrap();
        let nu = DiscreteMeasure::uniform(2);
        let config = ScalingConfig {
            epsilon: 1e-320,
            ..Default::default()
        };
        assert!(matches!(
            scaling_solve(&cost, &p, &nu, &kl(1.0), &config),
            Err(RdroError::NumericalRange(_))
        ));
    }

    #[test]
    fn dimension_mismatch() {
        let cost = CostMatrix::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let p = DiscreteMeasure::uniform(2);
        let nu = DiscreteMeasure::uniform(2);
        assert!(matches!(
            scaling_solve(&cost, &p, &nu, &kl(1.0), &ScalingConfig::default()),
            Err(RdroError::Dimension(_))
        ));
    }

    #[test]
    fn objective_is_infinite_off_the_first_marginal() {
        let cost = CostMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 1.0]]).unwrap();
        let p = DiscreteMeasure::uniform(2);
        let gamma = CouplingMatrix::from_rows(&[vec![0.5, 0.2], vec![0.1, 0.2]]).unwrap();
        let v = regularized_objective(&cost, &gamma, &p, &p, &kl(1.0), 0.0).unwrap();
        assert_eq!(v, f64::INFINITY);
    }

    #[test]
    fn product_coupling_has_no_penalty() {
        let cost = CostMatrix::from_rows(&[vec![1.0, 2.0], vec![0.0, 3.0]]).unwrap();
        let p = DiscreteMeasure::new(vec![0.3, 0.7]).unwrap();
        let nu = DiscreteMeasure::new(vec![0.6, 0.4]).unwrap();
        let gamma = CouplingMatrix::product(p.weights(), nu.weights());
        let expected = 0.3 * (0.6 * 1.0 + 0.4 * 2.0) + 0.7 * (0.6 * 0.0 + 0.4 * 3.0);
        let v = regularized_objective(&cost, &gamma, &p, &nu, &kl(5.0), 0.0).unwrap();
        assert_abs_diff_eq!(v, expected, epsilon = 1e-14);
    }

    #[test]
    fn solve_beats_product_coupling_on_regularized_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let cost = random_cost(&mut rng, 5, 4);
            let p = random_prob(&mut rng, 5);
            let nu = random_prob(&mut rng, 4);
            let spec = kl(0.5);
            let config = ScalingConfig {
                epsilon: 0.05,
                ..Default::default()
            };
            let report = scaling_solve(&cost, &p, &nu, &spec, &config).unwrap();
            let product = CouplingMatrix::product(p.weights(), nu.weights());
            let at_product = regularized_objective(&cost, &product, &p, &nu, &spec, 0.05).unwrap();
            assert!(report.primal_value <= at_product + 1e-12);
        }
    }

    #[test]
    fn free_second_marginal_takes_row_minima() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let cost = random_cost(&mut rng, 5, 3);
        let p = random_prob(&mut rng, 5);
        let nu = random_prob(&mut rng, 3);
        let config = ScalingConfig {
            epsilon: 1e-3,
            ..Default::default()
        };
        let (value, _) = inner_value(&cost, &p, &nu, 0.0, &config).unwrap();
        let closed_form: f64 = (0..5)
            .map(|i| p.weights()[i] * cost.matrix().row(i).iter().cloned().fold(f64::INFINITY, f64::min))
            .sum();
        assert!((value - closed_form).abs() <= 1e-2, "{value} vs {closed_form}");
    }

    #[test]
    fn identical_columns_keep_nominal() {
        let cost = CostMatrix::from_rows(&[vec![0.4, 0.4], vec![-1.0, -1.0], vec![2.0, 2.0]]).unwrap();
        let p = DiscreteMeasure::new(vec![0.2, 0.5, 0.3]).unwrap();
        let nu = DiscreteMeasure::new(vec![0.35, 0.65]).unwrap();
        let (value, plan) = inner_value(&cost, &p, &nu, 1.0, &ScalingConfig::default()).unwrap();
        let expected = 0.2 * 0.4 - 0.5 + 0.3 * 2.0;
        assert_abs_diff_eq!(value, expected, epsilon = 1e-12);
        let (_, cols) = marginals(&plan);
        assert_abs_diff_eq!(cols.weights()[0], 0.35, epsilon = 1e-12);
    }
}
