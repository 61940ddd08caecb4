//! Path-based multipath traffic engineering: candidate routes, rate
//! allocation under backhaul and radio rate-region constraints, and v-u-SGW
//! host placement.

mod placement;
mod solve;

pub use placement::{change_reaches_host, place_vusgw, placement_cost, PlacementWeights, UeTrajectory};
pub use solve::{solve_max_min, solve_max_sum, TeParams};

use crate::lp::LpError;
use crate::netmodel::{NetworkGraph, NodeId};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TrafficClass {
    BestEffort,
    Video,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Commodity {
    pub flow_id: usize,
    /// Gateway or v-u-SGW host the flow leaves from.
    pub source: NodeId,
    pub ue_id: usize,
    pub class: TrafficClass,
    /// bit/s; ignored for elastic best-effort flows.
    pub demand_bps: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    pub flow_id: usize,
    /// Index among the flow's paths.
    pub path_id: usize,
    /// Wired route from the source to the radio node, both ends included.
    pub nodes: Vec<NodeId>,
    pub links: Vec<usize>,
    pub radio_node: NodeId,
    /// Rate of the wireless hop if the radio node served only this UE.
    pub peak_rate_bps: f64,
}

impl Path {
    /// Wired hops plus the wireless hop.
    pub fn hop_count(&self) -> usize {
        self.links.len() + 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathRate {
    pub flow_id: usize,
    pub path_id: usize,
    pub rate_bps: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TeSolution {
    pub rates: Vec<PathRate>,
    pub objective: f64,
    pub solved_at: f64,
}

impl TeSolution {
    pub fn path_rate(&self, flow_id: usize, path_id: usize) -> f64 {
        self.rates
            .iter()
            .find(|r| r.flow_id == flow_id && r.path_id == path_id)
            .map_or(0.0, |r| r.rate_bps)
    }

    pub fn flow_rate(&self, flow_id: usize) -> f64 {
        self.rates.iter().filter(|r| r.flow_id == flow_id).map(|r| r.rate_bps).sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("flow_id,path_id,rate_bps\n");
        for r in &self.rates {
            let _ = writeln!(s, "{},{},{:.3}", r.flow_id, r.path_id, r.rate_bps);
        }
        s
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TeError {
    #[error("flow {0} has no usable path")]
    Unroutable(usize),
    #[error("path refers to unknown flow {0}")]
    UnknownFlow(usize),
    #[error("no candidate host")]
    NoHosts,
    #[error("no host reaches the serving nodes of UE {0}")]
    UnreachableHost(usize),
    #[error("solution violates {0}")]
    Violation(String),
    #[error(transparent)]
    Lp(#[from] LpError),
}

/// One route per serving node (in serving order), at most `k` in total.
/// `serving` pairs each serving radio node with the UE's peak rate there.
pub fn candidate_paths(
    graph: &NetworkGraph,
    commodity: &Commodity,
    serving: &[(NodeId, f64)],
    k: usize,
) -> Result<Vec<Path>, TeError> {
    assert!(k >= 1, "need at least one path");
    let mut out = Vec::new();
    for &(node, peak) in serving {
        if out.len() == k {
            break;
        }
        if out.iter().any(|p: &Path| p.radio_node == node) {
            continue;
        }
        let Some(nodes) = graph.shortest_path(commodity.source, node) else { continue };
        let links = graph.path_links(&nodes).expect("consecutive nodes are adjacent");
        out.push(Path {
            flow_id: commodity.flow_id,
            path_id: out.len(),
            nodes,
            links,
            radio_node: node,
            peak_rate_bps: peak,
        });
    }
    if out.is_empty() {
        return Err(TeError::Unroutable(commodity.flow_id));
    }
    Ok(out)
}

/// Largest violation of backhaul and rate-region constraints, relative to
/// the constraint's capacity.
pub fn max_violation(sol: &TeSolution, paths: &[Path], graph: &NetworkGraph) -> f64 {
    let find = |r: &PathRate| paths.iter().find(|p| p.flow_id == r.flow_id && p.path_id == r.path_id);
    let mut link_load = vec![0.0; graph.links().len()];
    let mut node_time = vec![0.0; graph.nodes().len()];
    let mut worst: f64 = 0.0;
    for r in &sol.rates {
        worst = worst.max(-r.rate_bps / 1e6);
        let Some(p) = find(r) else { return f64::INFINITY };
        for &l in &p.links {
            link_load[l] += r.rate_bps;
        }
        if r.rate_bps > 0.0 {
            node_time[p.radio_node] += if p.peak_rate_bps > 0.0 { r.rate_bps / p.peak_rate_bps } else { f64::INFINITY };
        }
    }
    for (l, load) in link_load.iter().enumerate() {
        let cap = graph.links()[l].capacity_bps;
        worst = worst.max((load - cap) / cap);
    }
    for t in node_time {
        worst = worst.max(t - 1.0);
    }
    worst
}

/// True every `period_s` or whenever a tracked UE handed over since the last run.
pub fn rerun_schedule(now: f64, last_run: Option<f64>, handover_pending: bool, period_s: f64) -> bool {
    match last_run {
        None => true,
        Some(last) => handover_pending || now - last >= period_s - 1e-9,
    }
}
