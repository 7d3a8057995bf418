use std::fmt;
use std::str::FromStr;

use super::attention::{message_step, Adjacency, GraphNodeState};
use super::params::{AttentionParams, ParameterStore};
use crate::error::{Error, Result};
use crate::tensor_io::FeatureGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FlowMode {
    /// One parameter set applied at every step.
    #[default]
    Iterative,
    /// A distinct parameter set per step.
    Stacked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Neighborhood {
    Four,
    #[default]
    Eight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowSchedule {
    pub mode: FlowMode,
    pub steps: usize,
    pub neighborhood: Neighborhood,
}

impl Default for FlowSchedule {
    fn default() -> Self {
        Self { mode: FlowMode::Iterative, steps: 1, neighborhood: Neighborhood::Eight }
    }
}

impl FlowSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.steps < 1 {
            return Err(Error::Config("message flow needs at least one step".into()));
        }
        Ok(())
    }

    pub fn parameter_sets(&self) -> usize {
        match self.mode {
            FlowMode::Iterative => 1,
            FlowMode::Stacked => self.steps,
        }
    }
}

impl FromStr for FlowMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "iterative" => Ok(Self::Iterative),
            "stacked" => Ok(Self::Stacked),
            _ => Err(Error::Config(format!("unknown schedule `{s}`"))),
        }
    }
}

impl fmt::Display for FlowMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Iterative => "iterative",
            Self::Stacked => "stacked",
        })
    }
}

impl FromStr for Neighborhood {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "4" | "four" => Ok(Self::Four),
            "8" | "eight" => Ok(Self::Eight),
            _ => Err(Error::Config(format!("unknown neighborhood `{s}`"))),
        }
    }
}

impl fmt::Display for Neighborhood {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Four => "4",
            Self::Eight => "8",
        })
    }
}

/// Attention over grid neighbours followed by the residual update.
pub fn inner_flow_step(grid: &GraphNodeState, params: &AttentionParams, nbhd: Neighborhood) -> Result<GraphNodeState> {
    let edges = Adjacency::grid(grid.height, grid.width, nbhd == Neighborhood::Eight);
    message_step(grid, grid, &edges, params)
}

/// Both directions of full bipartite attention, computed from the inputs of
/// this step with the same parameters.
pub fn cross_flow_step(
    query: &GraphNodeState,
    support: &GraphNodeState,
    params: &AttentionParams,
) -> Result<(GraphNodeState, GraphNodeState)> {
    if query.nodes() == 0 || support.nodes() == 0 {
        return Err(Error::InvalidShape("cross flow over an empty grid".into()));
    }
    let q = message_step(query, support, &Adjacency::complete(query.nodes(), support.nodes()), params)?;
    let s = message_step(support, query, &Adjacency::complete(support.nodes(), query.nodes()), params)?;
    Ok((q, s))
}

/// Runs `schedule.steps` rounds of inner flow on each grid followed by cross
/// flow between them. Inputs are expected to carry positional encoding
/// already.
pub fn run_message_flow(
    query: &FeatureGrid,
    support: &FeatureGrid,
    schedule: &FlowSchedule,
    store: &ParameterStore,
) -> Result<(FeatureGrid, FeatureGrid)> {
    schedule.validate()?;
    if query.channels() != support.channels() || query.channels() != store.channels {
        return Err(Error::ShapeMismatch(format!(
            "query width {}, support width {}, parameters for {}",
            query.channels(),
            support.channels(),
            store.channels
        )));
    }
    if store.blocks.len() != schedule.parameter_sets() {
        return Err(Error::Config(format!(
            "{} schedule with {} steps needs {} parameter sets, got {}",
            schedule.mode,
            schedule.steps,
            schedule.parameter_sets(),
            store.blocks.len()
        )));
    }
    let mut q = GraphNodeState::from(query);
    let mut s = GraphNodeState::from(support);
    for step in 0..schedule.steps {
        let params = match schedule.mode {
            FlowMode::Iterative => &store.blocks[0],
            FlowMode::Stacked => &store.blocks[step],
        };
        q = inner_flow_step(&q, params, schedule.neighborhood)?;
        s = inner_flow_step(&s, params, schedule.neighborhood)?;
        (q, s) = cross_flow_step(&q, &s, params)?;
    }
    Ok((q.try_into()?, s.try_into()?))
}
