//! Random distributionally robust optimization over discrete measures.
//!
//! The inner worst-case problem is an entropic unbalanced transport problem
//! solved by log-domain Sinkhorn-type scaling; the outer problem is solved by
//! an inexact projected gradient method over the decision measure.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod applications;
pub mod cli;
pub mod coupling;
pub mod diagnostics;
pub mod divergence;
pub mod error;
pub mod matrix;
pub mod measure;
pub mod projection;
pub mod solver;
pub mod transport;

pub use coupling::{marginals, CouplingMatrix};
pub use diagnostics::{fit_convergence, ConvergenceDiagnostics};
pub use divergence::{eval_divergence, proxdiv, proxdiv_with, DivergenceKind, DivergenceSpec, ProxdivVariant};
pub use error::{RdroError, Result};
pub use matrix::Matrix;
pub use measure::DiscreteMeasure;
pub use projection::DecisionSet;
pub use solver::{
    outer_gradient, residual_series, solve_constrained, solve_penalized, theta_sweep, DualConfig, OuterConfig,
    PenalizedProblem, SolveReport, StepDirection, TraceEntry,
};
pub use transport::{
    inner_value, oracle_inner, regularized_objective, scaling_solve, scaling_solve_from, CostMatrix, ScalingConfig,
    ScalingReport, ScalingState,
};
