//! Two-stage facility location: opening levels `x` first, then a
//! transportation problem over the effective capacities `K_i x_i y_i`.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::min_cost_flow::MinCostFlow;
use crate::divergence::DivergenceKind;
use crate::error::{ensure_len, RdroError, Result};
use crate::matrix::Matrix;
use crate::measure::DiscreteMeasure;
use crate::projection::DecisionSet;
use crate::solver::{PenalizedProblem, Utility};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacilityInstance {
    /// `f_i`
    pub opening_costs: Vec<f64>,
    /// `K_i`
    pub capacities: Vec<f64>,
    /// `d_j`
    pub demands: Vec<f64>,
    /// `c_ij`, facilities by customers.
    pub service_costs: Vec<Vec<f64>>,
    /// Bound on the expected opening cost.
    pub budget: f64,
    /// Effective-capacity fractions, one vector per failure scenario.
    pub scenarios: Vec<Vec<f64>>,
    pub nominal: Vec<f64>,
}

impl FacilityInstance {
    pub fn facilities(&self) -> usize {
        self.capacities.len()
    }

    pub fn customers(&self) -> usize {
        self.demands.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.facilities();
        ensure_len("opening costs", m, self.opening_costs.len())?;
        ensure_len("service cost rows", m, self.service_costs.len())?;
        for row in &self.service_costs {
            ensure_len("service cost row", self.customers(), row.len())?;
            if row.iter().any(|c| !(*c >= 0.0)) {
                return Err(RdroError::Configuration("service costs must be nonnegative".into()));
            }
        }
        if self.demands.iter().any(|d| !(*d >= 0.0)) || self.capacities.iter().any(|k| !(*k >= 0.0)) {
            return Err(RdroError::Configuration(
                "demands and capacities must be nonnegative".into(),
            ));
        }
        if !(self.budget >= 0.0) {
            return Err(RdroError::Configuration("budget must be nonnegative".into()));
        }
        ensure_len("nominal scenario law", self.scenarios.len(), self.nominal.len())?;
        for s in &self.scenarios {
            ensure_len("scenario", m, s.len())?;
        }
        Ok(())
    }
}

struct SecondStage {
    cost: f64,
    assignment: Matrix,
    /// `∂g/∂(capacity_i)`, a subgradient of the optimal cost in the capacities.
    capacity_prices: Vec<f64>,
}

/// Min-cost flow `S → facility → customer → T`; with `shortage_penalty`,
/// an extra `S → customer` arc buys unmet demand at that unit price.
fn solve_second_stage(
    instance: &FacilityInstance,
    x: &[f64],
    y: &[f64],
    shortage_penalty: Option<f64>,
) -> Result<SecondStage> {
    instance.validate()?;
    let m = instance.facilities();
    let n = instance.customers();
    ensure_len("capacity levels x", m, x.len())?;
    ensure_len("capacity fractions y", m, y.len())?;
    let source = 0;
    let sink = m + n + 1;
    let total_demand: f64 = instance.demands.iter().sum();
    let mut g = MinCostFlow::new(m + n + 2);
    for i in 0..m {
        g.add_edge(source, 1 + i, instance.capacities[i] * x[i] * y[i], 0.0);
    }
    let mut arcs = Vec::with_capacity(m * n);
    for i in 0..m {
        for j in 0..n {
            arcs.push(g.add_edge(1 + i, 1 + m + j, total_demand, instance.service_costs[i][j]));
        }
    }
    for (j, d) in instance.demands.iter().enumerate() {
        g.add_edge(1 + m + j, sink, *d, 0.0);
        if let Some(price) = shortage_penalty {
            g.add_edge(source, 1 + m + j, *d, price);
        }
    }
    let (sent, cost) = g.run(source, sink, total_demand);
    let deficit = total_demand - sent;
    if deficit > 1e-9 * total_demand.max(1.0) {
        return Err(RdroError::Infeasible { deficit });
    }
    let assignment = Matrix::from_fn(m, n, |i, j| g.flow_on(arcs[i * n + j]));
    let to_source = g.distances_to(source);
    let capacity_prices = (0..m).map(|i| to_source[1 + i].min(0.0)).collect();
    Ok(SecondStage {
        cost,
        assignment,
        capacity_prices,
    })
}

/// Optimal second-stage cost `g(x, y)` and an optimal assignment `z`.
pub fn facility_second_stage(instance: &FacilityInstance, x: &[f64], y: &[f64]) -> Result<(f64, Matrix)> {
    let s = solve_second_stage(instance, x, y, None)?;
    Ok((s.cost, s.assignment))
}

/// `Σ f_i x_i + g(x, y)`.
pub fn facility_total_cost(instance: &FacilityInstance, x: &[f64], y: &[f64]) -> Result<f64> {
    let (g, _) = facility_second_stage(instance, x, y)?;
    Ok(instance.opening_costs.iter().zip(x).map(|(f, v)| f * v).sum::<f64>() + g)
}

/// `U(x, y) = −(Σ f_i x_i + g_P(x, y))`, where `g_P` admits unmet demand at
/// a per-unit penalty so every scenario stays feasible.
#[derive(Debug, Clone)]
pub struct FacilityUtility {
    pub instance: Arc<FacilityInstance>,
    pub shortage_penalty: f64,
}

impl Utility for FacilityUtility {
    fn value(&self, x: &[f64], y: &[f64]) -> f64 {
        match solve_second_stage(&self.instance, x, y, Some(self.shortage_penalty)) {
            Ok(s) => {
                -(self
                    .instance
                    .opening_costs
                    .iter()
                    .zip(x)
                    .map(|(f, v)| f * v)
                    .sum::<f64>()
                    + s.cost)
            }
            Err(_) => f64::NAN,
        }
    }

    fn gradient(&self, x: &[f64], y: &[f64], grad: &mut [f64]) {
        match solve_second_stage(&self.instance, x, y, Some(self.shortage_penalty)) {
            Ok(s) => {
                for (i, g) in grad.iter_mut().enumerate() {
                    let dcap = self.instance.capacities[i] * y[i];
                    *g = -(self.instance.opening_costs[i] + s.capacity_prices[i] * dcap);
                }
            }
            Err(_) => grad.iter_mut().for_each(|g| *g = f64::NAN),
        }
    }
}

/// Penalized problem over opening levels in `[0, 1]` with expected opening
/// cost at most the budget. The utility is non-smooth, so the outer loop is
/// a projected subgradient method.
pub fn make_facility_problem(
    instance: &FacilityInstance,
    theta: f64,
    epsilon: f64,
    decision_atoms: usize,
    shortage_penalty: f64,
) -> Result<PenalizedProblem> {
    instance.validate()?;
    if instance.opening_costs.iter().any(|f| !(*f > 0.0)) {
        return Err(RdroError::Configuration(
            "opening costs must be positive to define the budget set".into(),
        ));
    }
    if decision_atoms == 0 {
        return Err(RdroError::Configuration("need at least one decision atom".into()));
    }
    let m = instance.facilities();
    let p = vec![1.0 / decision_atoms as f64; decision_atoms];
    let weights = p
        .iter()
        .flat_map(|pi| instance.opening_costs.iter().map(move |f| pi * f))
        .collect();
    let problem = PenalizedProblem {
        utility: Arc::new(FacilityUtility {
            instance: Arc::new(instance.clone()),
            shortage_penalty,
        }),
        p: DiscreteMeasure::probability(p)?,
        nu0: DiscreteMeasure::probability(instance.nominal.clone())?,
        y_values: instance.scenarios.clone(),
        atom_dim: m,
        theta,
        divergence: DivergenceKind::Kl,
        decision_set: DecisionSet::BoxBudget {
            upper: vec![1.0; decision_atoms * m],
            weights: Some(weights),
            capacity: instance.budget,
        },
        epsilon,
    };
    problem.validate()?;
    Ok(problem)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(costs: Vec<Vec<f64>>, capacities: Vec<f64>, demands: Vec<f64>) -> FacilityInstance {
        let m = capacities.len();
        FacilityInstance {
            opening_costs: vec![1.0; m],
            capacities,
            demands,
            service_costs: costs,
            budget: 10.0,
            scenarios: vec![vec![1.0; m]],
            nominal: vec![1.0],
        }
    }

    #[test]
    fn single_lane() {
        let inst = tiny(vec![vec![2.5]], vec![4.0], vec![3.0]);
        let (cost, z) = facility_second_stage(&inst, &[1.0], &[1.0]).unwrap();
        assert_eq!(cost, 7.5);
        assert_eq!(z.get(0, 0), 3.0);
    }

    #[test]
    fn cheaper_facility_serves_first() {
        let inst = tiny(vec![vec![1.0], vec![2.0]], vec![5.0, 5.0], vec![4.0]);
        let (cost, z) = facility_second_stage(&inst, &[1.0, 1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(cost, 4.0);
        assert_eq!(z.get(0, 0), 4.0);
        assert_eq!(z.get(1, 0), 0.0);
    }

    #[test]
    fn infeasible_supply_reports_deficit() {
        let inst = tiny(vec![vec![1.0]], vec![5.0], vec![4.0]);
        match facility_second_stage(&inst, &[0.5], &[0.5]) {
            Err(RdroError::Infeasible { deficit }) => assert!((deficit - 2.75).abs() < 1e-12),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_plant_costs_nothing() {
        let inst = tiny(vec![vec![1.0, 3.0]], vec![5.0], vec![0.0, 0.0]);
        assert_eq!(facility_total_cost(&inst, &[0.0], &[1.0]).unwrap(), 0.0);
    }

    #[test]
    fn opening_cost_is_linear() {
        let mut inst = tiny(vec![vec![1.0], vec![2.0]], vec![5.0, 5.0], vec![4.0]);
        let x = [0.9, 0.6];
        let base = facility_total_cost(&inst, &x, &[1.0, 1.0]).unwrap();
        inst.opening_costs.iter_mut().for_each(|f| *f *= 2.0);
        let doubled = facility_total_cost(&inst, &x, &[1.0, 1.0]).unwrap();
        assert!((doubled - base - (0.9 + 0.6)).abs() < 1e-12);
    }

    #[test]
    fn capacity_price_matches_difference_quotient() {
        // facility 0 is cheap but short; an extra unit of its capacity displaces
        // one unit from facility 1 and saves 3 - 1 = 2
        let inst = tiny(vec![vec![1.0], vec![3.0]], vec![2.0, 10.0], vec![5.0]);
        let u = FacilityUtility {
            instance: Arc::new(inst.clone()),
            shortage_penalty: 100.0,
        };
        let mut g = [0.0; 2];
        u.gradient(&[0.5, 1.0], &[1.0, 1.0], &mut g);
        let h = 1e-6;
        let fd = (u.value(&[0.5 + h, 1.0], &[1.0, 1.0]) - u.value(&[0.5, 1.0], &[1.0, 1.0])) / h;
        assert!((g[0] - fd).abs() < 1e-6, "{} vs {fd}", g[0]);
        assert!((g[0] - (-1.0 + 2.0 * 2.0)).abs() < 1e-9);
    }
}
