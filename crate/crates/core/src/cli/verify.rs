//! Oracle suites behind `rdro verify`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{RunConfig, PRESET_THETA_GRID};
use crate::applications::{facility_second_stage, verify_counterexample, FacilityInstance};
use crate::error::Result;
use crate::measure::DiscreteMeasure;
use crate::projection::DecisionSet;
use crate::solver::theta_sweep;
use crate::transport::{inner_value, oracle_inner, CostMatrix, ScalingConfig};

pub const SUITES: [&str; 5] = ["counterexample", "inner-oracle", "duality", "projection", "facility"];

const SUITE_SEED: u64 = 20_240_601;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
}

impl Check {
    fn new(name: &str, measured: f64, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            measured,
            tolerance,
        }
    }

    pub fn passed(&self) -> bool {
        self.measured <= self.tolerance
    }
}

/// `None` for an unknown suite name.
pub fn run_suite(name: &str) -> Result<Option<Vec<Check>>> {
    Ok(Some(match name {
        "counterexample" => counterexample()?,
        "inner-oracle" => inner_oracle()?,
        "duality" => duality()?,
        "projection" => projection()?,
        "facility" => facility()?,
        _ => return Ok(None),
    }))
}

fn counterexample() -> Result<Vec<Check>> {
    let grid: Vec<f64> = (0..=10).map(|i| 1.0 + 0.05 * i as f64).collect();
    let values = verify_counterexample(&grid, 1.0, 1.0)?;
    let worst = values.iter().map(|(_, v)| v.abs()).fold(0.0, f64::max);
    Ok(vec![Check::new(
        "zero worst-case shortage on k in [1, 1.5]",
        worst,
        1e-9,
    )])
}

fn inner_oracle() -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED);
    let config = ScalingConfig {
        epsilon: 1e-4,
        max_iterations: 2_000_000,
        tolerance: 1e-12,
        ..ScalingConfig::default()
    };
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let cost = CostMatrix::from_rows(&[
            vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
            vec![rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)],
        ])?;
        let a: f64 = rng.random_range(0.1..0.9);
        let b: f64 = rng.random_range(0.1..0.9);
        let p = DiscreteMeasure::probability(vec![a, 1.0 - a])?;
        let nu0 = DiscreteMeasure::probability(vec![b, 1.0 - b])?;
        for theta in [0.1, 1.0, 10.0] {
            let (value, _) = inner_value(&cost, &p, &nu0, theta, &config)?;
            let (oracle, _) = oracle_inner(&cost, &p, &nu0, theta, 200)?;
            worst = worst.max((value - oracle).abs());
        }
    }
    Ok(vec![Check::new("|inner_value - grid oracle| on 2x2", worst, 1e-3)])
}

fn duality() -> Result<Vec<Check>> {
    let config = RunConfig::investment_preset();
    let problem = config.build_problem()?;
    let reports = theta_sweep(&problem, &PRESET_THETA_GRID, &config.outer_config(), &config.scaling)?;
    let identity = reports
        .iter()
        .map(|r| (r.constrained_value + r.theta * r.eta - r.penalized_value).abs())
        .fold(0.0, f64::max);
    let mut cross: f64 = 0.0;
    for a in &reports {
        for b in &reports {
            cross = cross.max(a.penalized_value - (b.constrained_value + a.theta * b.eta));
        }
    }
    let eta_increase = reports.windows(2).map(|w| w[1].eta - w[0].eta).fold(0.0, f64::max);
    Ok(vec![
        Check::new("J^c + theta*eta = J^p per point", identity, 0.0),
        Check::new("J^p(theta) <= J^c(eta') + theta*eta' across points", cross, 1e-3),
        Check::new("eta nonincreasing in theta", eta_increase, 1e-6),
    ])
}

fn projection() -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED);
    let (mut feas, mut idem, mut expand, mut vi) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for t in 0..100 {
        let set = if t % 2 == 0 {
            DecisionSet::budget_orthant(
                vec![rng.random_range(0.1..2.0), rng.random_range(0.1..2.0)],
                rng.random_range(0.0..2.0),
            )?
        } else {
            DecisionSet::BoxBudget {
                upper: vec![rng.random_range(0.1..2.0), rng.random_range(0.1..2.0)],
                weights: Some(vec![rng.random_range(0.1..2.0), rng.random_range(0.1..2.0)]),
                capacity: rng.random_range(0.0..2.0),
            }
        };
        let a: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
        let pa = set.project(&a)?;
        let pb = set.project(&b)?;
        feas = feas.max(set.feasibility_residual(&pa)?);
        idem = idem.max(dist(&set.project(&pa)?, &pa));
        expand = expand.max(dist(&pa, &pb) - dist(&a, &b));
        // (a − P a)·(z − P a) ≤ 0 for feasible z
        for _ in 0..20 {
            let z = set.sample_feasible(&mut rng)?;
            let inner: f64 = (0..2).map(|k| (a[k] - pa[k]) * (z[k] - pa[k])).sum();
            vi = vi.max(inner);
        }
    }
    Ok(vec![
        Check::new("projection is feasible", feas, 1e-10),
        Check::new("projection is idempotent", idem, 1e-10),
        Check::new("projection is nonexpansive", expand, 1e-10),
        Check::new("variational inequality", vi, 1e-9),
    ])
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Random instance with integral data and enough capacity for all demand.
fn random_facility(rng: &mut impl Rng, facilities: usize, customers: usize) -> FacilityInstance {
    let demands: Vec<f64> = (0..customers).map(|_| rng.random_range(1..=6) as f64).collect();
    let total: f64 = demands.iter().sum();
    let mut capacities: Vec<f64> = (0..facilities).map(|_| rng.random_range(1..=10) as f64).collect();
    let short = total - capacities.iter().sum::<f64>();
    if short > 0.0 {
        capacities[0] += short.ceil();
    }
    FacilityInstance {
        opening_costs: vec![1.0; facilities],
        capacities,
        demands,
        service_costs: (0..facilities)
            .map(|_| (0..customers).map(|_| rng.random_range(0..=9) as f64).collect())
            .collect(),
        budget: facilities as f64,
        scenarios: vec![vec![1.0; facilities]],
        nominal: vec![1.0],
    }
}

fn facility() -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(SUITE_SEED);
    let (mut violation, mut gap) = (0.0f64, 0.0f64);
    for _ in 0..20 {
        let m = rng.random_range(1..=4);
        let n = rng.random_range(1..=5);
        let inst = random_facility(&mut rng, m, n);
        let ones = vec![1.0; m];
        let (cost, z) = facility_second_stage(&inst, &ones, &ones)?;
        for j in 0..n {
            let served: f64 = (0..m).map(|i| z.get(i, j)).sum();
            violation = violation.max(inst.demands[j] - served);
        }
        for i in 0..m {
            violation = violation.max(z.row(i).iter().sum::<f64>() - inst.capacities[i]);
            violation = violation.max(-z.row(i).iter().cloned().fold(0.0, f64::min));
        }
        for _ in 0..1000 {
            gap = gap.max(cost - random_assignment_cost(&inst, &mut rng));
        }
    }
    Ok(vec![
        Check::new("assignment meets demand within capacity", violation, 1e-9),
        Check::new("cost exceeds a random feasible assignment by", gap, 1e-9),
    ])
}

/// Serves customers in random order from facilities in random order.
fn random_assignment_cost(inst: &FacilityInstance, rng: &mut impl Rng) -> f64 {
    let mut left = inst.capacities.clone();
    let mut cost = 0.0;
    let mut customers: Vec<usize> = (0..inst.customers()).collect();
    customers.shuffle(rng);
    for j in customers {
        let mut need = inst.demands[j];
        let mut order: Vec<usize> = (0..inst.facilities()).collect();
        order.shuffle(rng);
        for i in order {
            let take = need.min(left[i]) * rng.random_range(0.5..=1.0);
            let take = if need - take < 1e-12 { need } else { take };
            let take = take.min(left[i]);
            left[i] -= take;
            need -= take;
            cost += take * inst.service_costs[i][j];
        }
        // whatever remains goes wherever capacity is left
        for i in 0..inst.facilities() {
            let take = need.min(left[i]);
            left[i] -= take;
            need -= take;
            cost += take * inst.service_costs[i][j];
        }
    }
    cost
}
