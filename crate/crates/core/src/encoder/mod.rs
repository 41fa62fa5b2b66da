//! Hinge costs over grounded clauses, the dual-weighted CNF cost, its closed
//! form and gradients, and two baseline encodings for comparison.

mod baseline;
mod duals;
mod matrix;
mod simplex;
pub mod toy;

use thiserror::Error;

pub use baseline::{baseline_cost, baseline_grad, EncoderKind};
pub use duals::{
    apply_dual_grads, cnf_cost, closed_form_cost, dual_step, grad_duals, grad_outputs, optimal_duals, ClosedForm,
    DualOwner, DualState, TieRule,
};
pub use matrix::{atom_cost, CostMatrix};
pub use simplex::{on_simplex, project_simplex};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EncoderError {
    #[error("non-finite value {0}")]
    NonFinite(f64),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("clause {0} has no literals")]
    EmptyClause(usize),

    #[error("negative cost {0}")]
    NegativeCost(f64),
}
