//! Instance generators and evaluators for the robust investment, healthcare
//! allocation, and facility location models.

pub mod facility;
pub mod healthcare;
pub mod investment;
mod min_cost_flow;

pub use facility::{facility_second_stage, facility_total_cost, make_facility_problem, FacilityInstance};
pub use healthcare::{make_healthcare_problem, verify_counterexample, HealthcareInstance};
pub use investment::{make_investment_problem, make_pricing_kernel, InvestmentInstance};
