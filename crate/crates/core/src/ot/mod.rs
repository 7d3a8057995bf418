//! Absolute partial optimal transport between support and query nodes.
//!
//! A partial problem (match exactly `M` units of mass, each node bounded by
//! its own mass) is turned into a balanced transportation problem with one
//! dummy supplier and one dummy demander. Both dummies connect to the real
//! nodes at zero cost and the dummy-to-dummy cell is excluded from the
//! problem altogether, which forces exactly `M` units through the real
//! block.

mod cost;
mod oracle;
mod plan;
mod problem;
mod rounding;
mod sinkhorn;

pub use cost::{cosine_cost_matrix, cosine_similarity, transport_cost, CostMatrix};
pub use oracle::{exact_solve_oracle, ORACLE_MAX_DIM};
pub use plan::{strip_dummies, TransportPlan};
pub use problem::{build_full_problem, build_partial_problem, select_matched_mass, BalancedProblem, MarginalWeights};
pub use rounding::round_to_feasible;
pub use sinkhorn::{sinkhorn_solve, SinkhornConfig};
