//! Positional fusion and attention-based message passing.
//!
//! Every node aggregates values from its connected nodes with softmax
//! attention weights and updates itself residually through a two-layer
//! MLP over `[f, m]`. Inner flow connects grid neighbours within an image;
//! cross flow connects every query node to every support node and back.

mod attention;
mod params;
mod positional;
mod schedule;

pub use attention::{
    attention_aggregate, attention_weights, message_step, residual_update, Adjacency, GraphNodeState,
};
pub use params::{AttentionParams, Linear, ParameterStore, PARAMS_CFG};
pub use positional::{fuse_position, positional_encode, PositionalEncoder, DEFAULT_BASE};
pub use schedule::{cross_flow_step, inner_flow_step, run_message_flow, FlowMode, FlowSchedule, Neighborhood};
