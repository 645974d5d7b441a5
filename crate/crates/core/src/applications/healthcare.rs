use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::divergence::DivergenceKind;
use crate::error::{ensure_len, RdroError, Result};
use crate::measure::DiscreteMeasure;
use crate::projection::DecisionSet;
use crate::solver::{PenalizedProblem, ShortageUtility};
use crate::transport::{inner_value, ScalingConfig};

/// Seed used for the demand atoms of the non-uniqueness example.
pub const COUNTEREXAMPLE_SEED: u64 = 2024;
const COUNTEREXAMPLE_ATOMS: usize = 6;

/// Bed/equipment allocation across hospitals under demand ambiguity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HealthcareInstance {
    /// `M_h`, one per hospital.
    pub max_demands: Vec<f64>,
    pub capacity: f64,
    pub coverage: f64,
    /// Demand vectors, one per environment atom.
    pub demand_atoms: Vec<Vec<f64>>,
    pub nominal: Vec<f64>,
    /// Number of decision atoms (scenario-contingent allocations).
    #[serde(default = "one")]
    pub decision_atoms: usize,
}

fn one() -> usize {
    1
}

impl HealthcareInstance {
    /// Samples `atoms` demand vectors uniformly from the box `[0, M]` under
    /// a uniform nominal law.
    pub fn sampled(max_demands: Vec<f64>, capacity: f64, coverage: f64, atoms: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let demand_atoms = (0..atoms)
            .map(|_| max_demands.iter().map(|m| m * rng.random::<f64>()).collect())
            .collect();
        Self {
            max_demands,
            capacity,
            coverage,
            demand_atoms,
            nominal: vec![1.0 / atoms as f64; atoms],
            decision_atoms: 1,
        }
    }

    /// Two hospitals with `M₁ = M₂ = M`, `C = 3M`, `β = 1/2`; the demand
    /// atoms include the corner `(M, M)`.
    pub fn counterexample(max_demand: f64) -> Self {
        let mut inst = Self::sampled(
            vec![max_demand, max_demand],
            3.0 * max_demand,
            0.5,
            COUNTEREXAMPLE_ATOMS - 1,
            COUNTEREXAMPLE_SEED,
        );
        inst.demand_atoms.push(vec![max_demand, max_demand]);
        inst.nominal = vec![1.0 / COUNTEREXAMPLE_ATOMS as f64; COUNTEREXAMPLE_ATOMS];
        inst
    }

    pub fn hospitals(&self) -> usize {
        self.max_demands.len()
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.coverage) {
            return Err(RdroError::Configuration(format!(
                "coverage must lie in [0, 1], got {}",
                self.coverage
            )));
        }
        if !(self.capacity > 0.0) {
            return Err(RdroError::Configuration("capacity must be positive".into()));
        }
        if self.decision_atoms == 0 {
            return Err(RdroError::Configuration("need at least one decision atom".into()));
        }
        ensure_len("nominal demand law", self.demand_atoms.len(), self.nominal.len())?;
        for (j, y) in self.demand_atoms.iter().enumerate() {
            ensure_len(&format!("demand atom {j}"), self.hospitals(), y.len())?;
            if y.iter().zip(&self.max_demands).any(|(v, m)| *v < 0.0 || v > m) {
                return Err(RdroError::Configuration(format!(
                    "demand atom {j} leaves the box [0, M]"
                )));
            }
        }
        Ok(())
    }
}

/// Negated shortage utility over the coverage-constrained allocation set;
/// the outer loop then runs as a projected subgradient method.
pub fn make_healthcare_problem(instance: &HealthcareInstance, theta: f64, epsilon: f64) -> Result<PenalizedProblem> {
    instance.validate()?;
    let n = instance.decision_atoms;
    let p = vec![1.0 / n as f64; n];
    let m = instance.hospitals();
    let problem = PenalizedProblem {
        utility: Arc::new(ShortageUtility),
        decision_set: DecisionSet::coverage_simplex(
            p.clone(),
            vec![instance.capacity; m],
            instance.capacity,
            instance.coverage,
        )?,
        p: DiscreteMeasure::probability(p)?,
        nu0: DiscreteMeasure::probability(instance.nominal.clone())?,
        y_values: instance.demand_atoms.clone(),
        atom_dim: m,
        theta,
        divergence: DivergenceKind::Kl,
        epsilon,
    };
    problem.validate()?;
    Ok(problem)
}

/// Worst-case (penalized inner) value of the constant allocation
/// `(kM, kM)` on the non-uniqueness example, for each `k`.
pub fn verify_counterexample(k_grid: &[f64], max_demand: f64, theta: f64) -> Result<Vec<(f64, f64)>> {
    let instance = HealthcareInstance::counterexample(max_demand);
    let problem = make_healthcare_problem(&instance, theta, ScalingConfig::default().epsilon)?;
    let config = ScalingConfig::default();
    k_grid
        .iter()
        .map(|&k| {
            if !(1.0..=1.5).contains(&k) {
                return Err(RdroError::Configuration(format!("k = {k} lies outside [1, 1.5]")));
            }
            let x = vec![k * max_demand; 2];
            let residual = problem.decision_set.feasibility_residual(&x)?;
            if residual > 0.0 {
                return Err(RdroError::Configuration(format!(
                    "(kM, kM) infeasible at k = {k}: {residual}"
                )));
            }
            let cost = problem.cost_matrix(&x)?;
            let (value, _) = inner_value(&cost, &problem.p, &problem.nu0, theta, &config)?;
            Ok((k, value))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transport::oracle_inner;

    #[test]
    fn covered_demand_has_zero_value() {
        let inst = HealthcareInstance::sampled(vec![2.0, 3.0], 10.0, 0.3, 4, 1);
        let problem = make_healthcare_problem(&inst, 1.0, 0.01).unwrap();
        let cost = problem.cost_matrix(&[2.0, 3.0]).unwrap();
        assert!(cost.matrix().as_slice().iter().all(|c| *c == 0.0));
        let (v, _) = inner_value(&cost, &problem.p, &problem.nu0, 1.0, &ScalingConfig::default()).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn single_hospital_full_shortage() {
        let inst = HealthcareInstance {
            max_demands: vec![5.0],
            capacity: 5.0,
            coverage: 0.0,
            demand_atoms: vec![vec![4.0]],
            nominal: vec![1.0],
            decision_atoms: 1,
        };
        let problem = make_healthcare_problem(&inst, 1.0, 0.01).unwrap();
        let cost = problem.cost_matrix(&[0.0]).unwrap();
        let (v, _) = inner_value(&cost, &problem.p, &problem.nu0, 1.0, &ScalingConfig::default()).unwrap();
        assert!((v + 4.0).abs() < 1e-12);
    }

    #[test]
    fn two_by_two_matches_oracle() {
        let inst = HealthcareInstance {
            max_demands: vec![3.0, 3.0],
            capacity: 4.0,
            coverage: 0.2,
            demand_atoms: vec![vec![2.5, 0.5], vec![0.3, 2.9]],
            nominal: vec![0.4, 0.6],
            decision_atoms: 2,
        };
        let problem = make_healthcare_problem(&inst, 0.5, 1e-3).unwrap();
        let x = [1.0, 1.5, 2.0, 0.2];
        let cost = problem.cost_matrix(&x).unwrap();
        let config = ScalingConfig {
            epsilon: 1e-3,
            max_iterations: 200_000,
            ..Default::default()
        };
        let (v, _) = inner_value(&cost, &problem.p, &problem.nu0, 0.5, &config).unwrap();
        let (o, _) = oracle_inner(&cost, &problem.p, &problem.nu0, 0.5, 400).unwrap();
        assert!((v - o).abs() <= 1e-3, "{v} vs {o}");
    }

    #[test]
    fn shortage_utility_is_midpoint_concave() {
        use crate::solver::Utility;
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..500 {
            let a: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..4.0)).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..4.0)).collect();
            let y: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..4.0)).collect();
            let mid: Vec<f64> = a.iter().zip(&b).map(|(u, v)| 0.5 * (u + v)).collect();
            let u = ShortageUtility;
            assert!(u.value(&mid, &y) >= 0.5 * (u.value(&a, &y) + u.value(&b, &y)) - 1e-12);
        }
    }

    #[test]
    fn counterexample_values_vanish() {
        let out = verify_counterexample(&[1.0, 1.25, 1.5], 1.0, 1.0).unwrap();
        for (_, v) in out {
            assert!(v.abs() <= 1e-9);
        }
        assert!(verify_counterexample(&[1.6], 1.0, 1.0).is_err());
    }
}
