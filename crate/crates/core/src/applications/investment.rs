use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::divergence::DivergenceKind;
use crate::error::{ensure_len, RdroError, Result};
use crate::measure::DiscreteMeasure;
use crate::projection::DecisionSet;
use crate::solver::{CaraUtility, PenalizedProblem};

/// Default kernel volatility when none is given.
pub const DEFAULT_KERNEL_VOLATILITY: f64 = 0.5;

/// Terminal-wealth allocation under a pricing-kernel budget `E[m X] ≤ x₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InvestmentInstance {
    pub pricing_kernel: Vec<f64>,
    pub initial_wealth: f64,
    pub risk_aversion: f64,
    pub payoffs: Vec<f64>,
    pub nominal: Vec<f64>,
    /// Decision-atom probabilities; uniform when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<f64>>,
}

impl InvestmentInstance {
    /// 50 atoms, payoffs (0, 1), uniform laws, α = 0.5, x₀ = 1, and a
    /// lognormal kernel drawn from `seed`.
    pub fn benchmark(seed: u64) -> Self {
        Self {
            pricing_kernel: make_pricing_kernel(50, DEFAULT_KERNEL_VOLATILITY, seed),
            initial_wealth: 1.0,
            risk_aversion: 0.5,
            payoffs: vec![0.0, 1.0],
            nominal: vec![0.5, 0.5],
            probabilities: None,
        }
    }

    pub fn n(&self) -> usize {
        self.pricing_kernel.len()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.probabilities
            .clone()
            .unwrap_or_else(|| vec![1.0 / self.n() as f64; self.n()])
    }

    pub fn validate(&self) -> Result<()> {
        if self.pricing_kernel.is_empty() || self.pricing_kernel.iter().any(|m| !(*m > 0.0)) {
            return Err(RdroError::Configuration(
                "pricing kernel must be nonempty and positive".into(),
            ));
        }
        if !(self.initial_wealth > 0.0) {
            return Err(RdroError::Configuration("initial wealth must be positive".into()));
        }
        if !(self.risk_aversion > 0.0) {
            return Err(RdroError::Configuration("risk aversion must be positive".into()));
        }
        ensure_len("nominal environment law", self.payoffs.len(), self.nominal.len())?;
        if let Some(p) = &self.probabilities {
            ensure_len("decision-atom probabilities", self.n(), p.len())?;
        }
        Ok(())
    }
}

/// Lognormal kernel `m_i = exp(σ Z_i − σ²/2)`, `Z_i` standard normal.
pub fn make_pricing_kernel(n: usize, volatility: f64, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (volatility * z - 0.5 * volatility * volatility).exp()
        })
        .collect()
}

/// CARA utility over the budget orthant `{x ≥ 0, Σ p_i m_i x_i ≤ x₀}`.
pub fn make_investment_problem(instance: &InvestmentInstance, theta: f64, epsilon: f64) -> Result<PenalizedProblem> {
    instance.validate()?;
    let p = instance.probabilities();
    let weights = p.iter().zip(&instance.pricing_kernel).map(|(a, m)| a * m).collect();
    let problem = PenalizedProblem {
        utility: Arc::new(CaraUtility {
            risk_aversion: instance.risk_aversion,
        }),
        p: DiscreteMeasure::probability(p)?,
        nu0: DiscreteMeasure::probability(instance.nominal.clone())?,
        y_values: instance.payoffs.iter().map(|y| vec![*y]).collect(),
        atom_dim: 1,
        theta,
        divergence: DivergenceKind::Kl,
        decision_set: DecisionSet::budget_orthant(weights, instance.initial_wealth)?,
        epsilon,
    };
    problem.validate()?;
    Ok(problem)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_kernel() {
        let m = make_pricing_kernel(10, 1e-12, 4);
        assert!(m.iter().all(|v| (v - 1.0).abs() < 1e-10));
    }

    #[test]
    fn kernel_is_reproducible() {
        let a = make_pricing_kernel(32, 0.5, 99);
        let b = make_pricing_kernel(32, 0.5, 99);
        assert_eq!(a, b);
        assert_ne!(a, make_pricing_kernel(32, 0.5, 100));
    }

    #[test]
    fn kernel_has_unit_mean() {
        let m = make_pricing_kernel(100_000, 0.5, 1);
        let mean = m.iter().sum::<f64>() / m.len() as f64;
        assert!((0.99..=1.01).contains(&mean), "{mean}");
        let var = m.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m.len() - 1) as f64;
        let stderr = (var / m.len() as f64).sqrt();
        assert!((mean - 1.0).abs() <= 3.0 * stderr);
    }

    #[test]
    fn benchmark_problem_shape() {
        let problem = make_investment_problem(&InvestmentInstance::benchmark(7), 1.0, 0.01).unwrap();
        assert_eq!(problem.n(), 50);
        assert_eq!(problem.r(), 2);
        assert_eq!(problem.y_values, vec![vec![0.0], vec![1.0]]);
        let c = problem.cost_matrix(&vec![0.0; 50]).unwrap();
        assert!((c.matrix().get(0, 0) + 2.0).abs() < 1e-15);
    }
}
