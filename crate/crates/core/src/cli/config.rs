//! Run configuration (JSON, schema 1).

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::applications::{
    make_facility_problem, make_healthcare_problem, make_investment_problem, make_pricing_kernel, FacilityInstance,
    HealthcareInstance, InvestmentInstance,
};
use crate::divergence::DivergenceKind;
use crate::error::{RdroError, Result};
use crate::measure::DiscreteMeasure;
use crate::projection::DecisionSet;
use crate::solver::{
    CaraUtility, DualConfig, LinearUtility, OuterConfig, PenalizedProblem, QuadraticTracking, ShortageUtility, Utility,
};
use crate::transport::ScalingConfig;

pub const SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_SEED: u64 = 7;
/// Grid used by `sweep --preset investment73`.
pub const PRESET_THETA_GRID: [f64; 6] = [0.25, 0.5, 1.0, 2.0, 4.0, 8.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Investment,
    Healthcare,
    Facility,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub schema: u32,
    pub problem: ProblemKind,
    /// Problem-specific instance; see the per-problem settings types.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta_target: Option<f64>,
    #[serde(default = "default_bracket")]
    pub theta_bracket: [f64; 2],
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Seeds instance generation, and the starting point when `random_start`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default)]
    pub random_start: bool,
    #[serde(default)]
    pub outer: OuterConfig,
    #[serde(default)]
    pub scaling: ScalingConfig,
    #[serde(default)]
    pub dual: DualConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

fn default_bracket() -> [f64; 2] {
    [1e-3, 1e3]
}

fn default_epsilon() -> f64 {
    0.01
}

/// What a config asks the solver to do.
#[derive(Debug, Clone, PartialEq)]
pub enum Target {
    Theta(f64),
    Grid(Vec<f64>),
    Eta(f64),
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: RunConfig =
            serde_json::from_str(text).map_err(|e| RdroError::Configuration(format!("config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| RdroError::Configuration(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            RdroError::Configuration(msg) => RdroError::Configuration(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// The 50-atom CARA investment benchmark at θ = 1, ε = 0.01.
    pub fn investment_preset() -> Self {
        Self {
            schema: SCHEMA_VERSION,
            problem: ProblemKind::Investment,
            instance: None,
            theta: Some(1.0),
            theta_grid: None,
            eta_target: None,
            theta_bracket: default_bracket(),
            epsilon: default_epsilon(),
            seed: Some(DEFAULT_SEED),
            random_start: false,
            outer: OuterConfig::default(),
            scaling: ScalingConfig::default(),
            dual: DualConfig::default(),
            output: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA_VERSION {
            return Err(RdroError::Configuration(format!(
                "field `schema`: unsupported version {} (expected {SCHEMA_VERSION})",
                self.schema
            )));
        }
        let present: Vec<&str> = [
            ("theta", self.theta.is_some()),
            ("theta_grid", self.theta_grid.is_some()),
            ("eta_target", self.eta_target.is_some()),
        ]
        .iter()
        .filter(|(_, on)| *on)
        .map(|(name, _)| *name)
        .collect();
        match present.len() {
            0 => {
                return Err(RdroError::Configuration(
                    "exactly one of `theta`, `theta_grid`, `eta_target` is required; none given".into(),
                ))
            }
            1 => {}
            _ => {
                return Err(RdroError::Configuration(format!(
                    "fields {} are mutually exclusive; give exactly one of `theta`, `theta_grid`, `eta_target`",
                    present
                        .iter()
                        .map(|n| format!("`{n}`"))
                        .collect::<Vec<_>>()
                        .join(" and ")
                )))
            }
        }
        if let Some(t) = self.theta {
            if !(t >= 0.0) || !t.is_finite() {
                return Err(RdroError::Configuration(format!(
                    "field `theta`: must be finite and >= 0, got {t}"
                )));
            }
        }
        if let Some(grid) = &self.theta_grid {
            if grid.is_empty() {
                return Err(RdroError::Configuration("field `theta_grid`: grid is empty".into()));
            }
            if grid.iter().any(|t| !(*t > 0.0) || !t.is_finite()) || grid.windows(2).any(|w| w[1] <= w[0]) {
                return Err(RdroError::Configuration(
                    "field `theta_grid`: values must be positive, finite and strictly increasing".into(),
                ));
            }
        }
        if let Some(e) = self.eta_target {
            if !(e >= 0.0) {
                return Err(RdroError::Configuration(format!(
                    "field `eta_target`: must be >= 0, got {e}"
                )));
            }
            let [lo, hi] = self.theta_bracket;
            if !(lo >= 0.0 && hi > lo && hi.is_finite()) {
                return Err(RdroError::Configuration(format!(
                    "field `theta_bracket`: invalid ({lo}, {hi})"
                )));
            }
        }
        if !(self.epsilon > 0.0) {
            return Err(RdroError::Configuration(format!(
                "field `epsilon`: must be > 0, got {}",
                self.epsilon
            )));
        }
        if !(self.dual.tolerance > 0.0) {
            return Err(RdroError::Configuration("field `dual.tolerance`: must be > 0".into()));
        }
        self.outer.validate().map_err(|e| prefix("outer", e))?;
        self.scaling.validate().map_err(|e| prefix("scaling", e))?;
        Ok(())
    }

    pub fn target(&self) -> Target {
        if let Some(t) = self.theta {
            Target::Theta(t)
        } else if let Some(g) = &self.theta_grid {
            Target::Grid(g.clone())
        } else {
            Target::Eta(self.eta_target.unwrap_or(0.0))
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    pub fn outer_config(&self) -> OuterConfig {
        OuterConfig {
            seed: if self.random_start {
                Some(self.seed())
            } else {
                self.outer.seed
            },
            ..self.outer
        }
    }

    /// Builds the problem at θ (or a placeholder θ = 1 for sweeps and
    /// η targets, which override it).
    pub fn build_problem(&self) -> Result<PenalizedProblem> {
        let theta = self.theta.unwrap_or(1.0);
        let instance = self.instance.clone();
        match self.problem {
            ProblemKind::Investment => {
                let settings: InvestmentSettings = match instance {
                    None => InvestmentSettings::default(),
                    Some(v) => parse_instance(v)?,
                };
                make_investment_problem(&settings.into_instance(self.seed()), theta, self.epsilon)
            }
            ProblemKind::Healthcare => {
                let inst = match instance {
                    None => HealthcareInstance::counterexample(1.0),
                    Some(v) => parse_instance(v)?,
                };
                make_healthcare_problem(&inst, theta, self.epsilon)
            }
            ProblemKind::Facility => {
                let settings: FacilitySettings = parse_instance(required(instance, "facility")?)?;
                make_facility_problem(
                    &settings.instance,
                    theta,
                    self.epsilon,
                    settings.decision_atoms,
                    settings.shortage_penalty,
                )
            }
            ProblemKind::Custom => {
                let settings: CustomSettings = parse_instance(required(instance, "custom")?)?;
                settings.into_problem(theta, self.epsilon)
            }
        }
    }
}

fn prefix(field: &str, e: RdroError) -> RdroError {
    match e {
        RdroError::Configuration(msg) => RdroError::Configuration(format!("field `{field}`: {msg}")),
        other => other,
    }
}

fn parse_instance<T: for<'de> Deserialize<'de>>(value: serde_json::Value) -> Result<T> {
    serde_json::from_value(value).map_err(|e| RdroError::Configuration(format!("field `instance`: {e}")))
}

fn required(value: Option<serde_json::Value>, problem: &str) -> Result<serde_json::Value> {
    value.ok_or_else(|| RdroError::Configuration(format!("field `instance`: the {problem} problem needs an instance")))
}

/// Investment instance: a generated lognormal kernel unless one is given.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InvestmentSettings {
    pub n: usize,
    pub volatility: f64,
    pub initial_wealth: f64,
    pub risk_aversion: f64,
    pub payoffs: Vec<f64>,
    pub nominal: Vec<f64>,
    pub pricing_kernel: Option<Vec<f64>>,
    pub probabilities: Option<Vec<f64>>,
}

impl Default for InvestmentSettings {
    fn default() -> Self {
        Self {
            n: 50,
            volatility: crate::applications::investment::DEFAULT_KERNEL_VOLATILITY,
            initial_wealth: 1.0,
            risk_aversion: 0.5,
            payoffs: vec![0.0, 1.0],
            nominal: vec![0.5, 0.5],
            pricing_kernel: None,
            probabilities: None,
        }
    }
}

impl InvestmentSettings {
    pub fn into_instance(self, seed: u64) -> InvestmentInstance {
        InvestmentInstance {
            pricing_kernel: self
                .pricing_kernel
                .unwrap_or_else(|| make_pricing_kernel(self.n, self.volatility, seed)),
            initial_wealth: self.initial_wealth,
            risk_aversion: self.risk_aversion,
            payoffs: self.payoffs,
            nominal: self.nominal,
            probabilities: self.probabilities,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FacilitySettings {
    #[serde(flatten)]
    pub instance: FacilityInstance,
    #[serde(default = "one")]
    pub decision_atoms: usize,
    /// Unit price of unmet demand inside the utility.
    #[serde(default = "default_shortage_penalty")]
    pub shortage_penalty: f64,
}

fn one() -> usize {
    1
}

fn default_shortage_penalty() -> f64 {
    1e3
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum UtilitySpec {
    Linear,
    Cara { risk_aversion: f64 },
    QuadraticTracking,
    Shortage,
}

impl UtilitySpec {
    fn build(self) -> Result<Arc<dyn Utility>> {
        Ok(match self {
            UtilitySpec::Linear => Arc::new(LinearUtility),
            UtilitySpec::Cara { risk_aversion } => {
                if !(risk_aversion > 0.0) {
                    return Err(RdroError::Configuration(
                        "field `instance.utility.risk_aversion`: must be > 0".into(),
                    ));
                }
                Arc::new(CaraUtility { risk_aversion })
            }
            UtilitySpec::QuadraticTracking => Arc::new(QuadraticTracking),
            UtilitySpec::Shortage => Arc::new(ShortageUtility),
        })
    }
}

/// A problem spelled out atom by atom.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CustomSettings {
    pub utility: UtilitySpec,
    pub p: Vec<f64>,
    pub nu0: Vec<f64>,
    pub y_values: Vec<Vec<f64>>,
    pub decision_set: DecisionSet,
    #[serde(default = "kl")]
    pub divergence: DivergenceKind,
}

fn kl() -> DivergenceKind {
    DivergenceKind::Kl
}

impl CustomSettings {
    pub fn into_problem(self, theta: f64, epsilon: f64) -> Result<PenalizedProblem> {
        if self.p.is_empty() || self.decision_set.dim() % self.p.len() != 0 {
            return Err(RdroError::Configuration(format!(
                "field `instance.decision_set`: dimension {} is not a multiple of {} decision atoms",
                self.decision_set.dim(),
                self.p.len()
            )));
        }
        let problem = PenalizedProblem {
            utility: self.utility.build()?,
            atom_dim: self.decision_set.dim() / self.p.len(),
            p: DiscreteMeasure::probability(self.p)?,
            nu0: DiscreteMeasure::probability(self.nu0)?,
            y_values: self.y_values,
            theta,
            divergence: self.divergence,
            decision_set: self.decision_set,
            epsilon,
        };
        problem.validate()?;
        Ok(problem)
    }
}
