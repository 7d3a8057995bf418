//! Dense correspondence matching between a support and a query feature grid.
//!
//! The crate is organised bottom-up:
//!
//! - [`tensor_io`]: tensor and mask containers, the `CMT1` file format and a
//!   synthetic episode generator.
//! - [`ot`]: cosine costs, the dummy-node reduction of absolute partial
//!   transport to a balanced problem, a log-domain Sinkhorn solver, rounding
//!   onto the feasible polytope and an exact transportation-simplex oracle.
//! - [`message_flow`]: positional fusion plus attention message passing along
//!   grid-neighbour (inner) and bipartite (cross) edges.
//! - [`correspondence`]: plans to foreground probability maps, prior masks and
//!   best-match maps.
//! - [`metrics`]: IoU, mean IoU and foreground/background IoU.
//! - [`pipeline`]: end-to-end episode runner and seed suites used by the CLI.

// Negated comparisons are used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod correspondence;
pub mod error;
pub mod kvfile;
pub mod message_flow;
pub mod metrics;
pub mod ot;
pub mod pipeline;
pub mod tensor_io;

pub use error::{Error, Result};
pub use tensor_io::{BinaryMask, BoundingBox, DType, FeatureGrid, Tensor, TensorData};
