//! Physical world: wired topology, propagation and link abstraction, and
//! user mobility along a two-lane strip.

mod mobility;
mod radio;
mod topology;

pub use mobility::{best_n_cells, kmh_to_mps, step_mobility, Strip, UserEquipment};
pub use radio::{
    dbm_to_mw, distance, mw_to_dbm, noise_dbm, path_loss, rate_from_sinr, rx_power_dbm, sample_channel, sinr,
    ChannelSample, RadioNode, RadioParams,
};
pub use topology::{build_topology, NetworkGraph, Node, NodeId, NodeKind, TopologyConfig, WiredLink};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetError {
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid graph: {0}")]
    Invalid(String),
    #[error("node {0} is not reachable from the gateway")]
    Disconnected(NodeId),
    #[error("line {line}: cannot parse {text:?}")]
    Parse { line: usize, text: String },
}

/// Radio nodes of `graph` with the given radio parameters. Reuse groups are
/// assigned round-robin by id and each group gets `bandwidth / reuse`.
pub fn radio_nodes(graph: &NetworkGraph, p: &RadioParams) -> Vec<RadioNode> {
    let reuse = p.reuse.max(1);
    graph
        .radio_nodes()
        .map(|n| RadioNode {
            id: n.id,
            position: n.position.expect("radio nodes are placed"),
            tx_power_dbm: p.tx_power_dbm,
            bandwidth_hz: p.bandwidth_hz / reuse as f64,
            reuse_group: n.id % reuse,
        })
        .collect()
}
