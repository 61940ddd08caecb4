use super::TeError;
use crate::netmodel::{NetworkGraph, NodeId};
use std::collections::BTreeSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlacementWeights {
    pub hops: f64,
    pub migration: f64,
    pub new_host: f64,
}

impl Default for PlacementWeights {
    fn default() -> Self {
        Self { hops: 1.0, migration: 10.0, new_host: 5.0 }
    }
}

/// Primary serving node of one UE at evenly spaced sample times.
#[derive(Debug, Clone, PartialEq)]
pub struct UeTrajectory {
    pub ue_id: usize,
    pub serving: Vec<NodeId>,
}

/// Whether a switch of serving node from `old` to `new` changes the route
/// above `host`: false only when `host` sits on the shared prefix of the
/// gateway routes to both nodes.
pub fn change_reaches_host(graph: &NetworkGraph, gateway: NodeId, host: NodeId, old: NodeId, new: NodeId) -> bool {
    let (Some(a), Some(b)) = (graph.shortest_path(gateway, old), graph.shortest_path(gateway, new)) else {
        return true;
    };
    let shared = a.iter().zip(&b).take_while(|(x, y)| x == y).count();
    !a[..shared].contains(&host)
}

/// Cost of serving `traj` from `host`; `None` when some serving node is
/// unreachable from it.
pub fn placement_cost(
    graph: &NetworkGraph,
    host: NodeId,
    traj: &UeTrajectory,
    w: &PlacementWeights,
    newly_opened: bool,
) -> Option<f64> {
    if traj.serving.is_empty() {
        return Some(if newly_opened { w.new_host } else { 0.0 });
    }
    let gateway = graph.gateway()?;
    let dist = graph.hop_distances(host);
    let mut hops = 0.0;
    for &s in &traj.serving {
        hops += dist[s]? as f64;
    }
    hops /= traj.serving.len() as f64;
    let steps = traj.serving.len().saturating_sub(1);
    let moved = traj
        .serving
        .windows(2)
        .filter(|p| p[0] != p[1] && change_reaches_host(graph, gateway, host, p[0], p[1]))
        .count();
    let migration = if steps == 0 { 0.0 } else { moved as f64 / steps as f64 };
    Some(w.hops * hops + w.migration * migration + if newly_opened { w.new_host } else { 0.0 })
}

/// Greedy assignment in trajectory order; ties go to the smaller node id.
pub fn place_vusgw(
    graph: &NetworkGraph,
    hosts: &[NodeId],
    trajectories: &[UeTrajectory],
    w: &PlacementWeights,
) -> Result<Vec<NodeId>, TeError> {
    if hosts.is_empty() {
        return Err(TeError::NoHosts);
    }
    let mut candidates = hosts.to_vec();
    candidates.sort_unstable();
    candidates.dedup();
    let mut opened = BTreeSet::new();
    let mut out = Vec::with_capacity(trajectories.len());
    for traj in trajectories {
        let mut best: Option<(f64, NodeId)> = None;
        for &h in &candidates {
            let Some(c) = placement_cost(graph, h, traj, w, !opened.contains(&h)) else { continue };
            if best.is_none_or(|(bc, _)| c < bc - 1e-12) {
                best = Some((c, h));
            }
        }
        let (_, h) = best.ok_or(TeError::UnreachableHost(traj.ue_id))?;
        opened.insert(h);
        out.push(h);
    }
    Ok(out)
}
