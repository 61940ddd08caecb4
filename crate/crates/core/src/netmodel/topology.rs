use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::NetError;

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    Gateway,
    Router,
    RadioNode,
    VusgwHost,
}

impl NodeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            NodeKind::Gateway => "gateway",
            NodeKind::Router => "router",
            NodeKind::RadioNode => "radio_node",
            NodeKind::VusgwHost => "vusgw_host",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "gateway" => NodeKind::Gateway,
            "router" => NodeKind::Router,
            "radio_node" => NodeKind::RadioNode,
            "vusgw_host" => NodeKind::VusgwHost,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub id: NodeId,
    pub kind: NodeKind,
    /// Meters; routers carry one too so radio nodes can attach to the nearest.
    pub position: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WiredLink {
    pub from: NodeId,
    pub to: NodeId,
    pub capacity_bps: f64,
    pub latency_s: f64,
}

/// Wired part of the network. Links are bidirectional.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkGraph {
    nodes: Vec<Node>,
    links: Vec<WiredLink>,
    adjacency: Vec<Vec<(NodeId, usize)>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    pub radio_nodes: usize,
    pub routers: usize,
    pub gateway_routers: usize,
    pub area_km2: f64,
    pub seed: u64,
    pub access_capacity_bps: f64,
    pub core_capacity_bps: f64,
    pub gateway_capacity_bps: f64,
    pub hop_latency_s: f64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        Self {
            radio_nodes: 57,
            routers: 11,
            gateway_routers: 3,
            area_km2: 0.04,
            seed: 1,
            access_capacity_bps: 1e9,
            core_capacity_bps: 10e9,
            gateway_capacity_bps: 10e9,
            hop_latency_s: 0.005,
        }
    }
}

impl TopologyConfig {
    /// Side of the square deployment area in meters.
    pub fn side_m(&self) -> f64 {
        (self.area_km2 * 1e6).sqrt()
    }
}

impl NetworkGraph {
    pub fn new(nodes: Vec<Node>, links: Vec<WiredLink>) -> Result<Self, NetError> {
        for (i, n) in nodes.iter().enumerate() {
            if n.id != i {
                return Err(NetError::Invalid(format!("node ids must be dense, found {} at {i}", n.id)));
            }
        }
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for (i, l) in links.iter().enumerate() {
            if l.from >= nodes.len() || l.to >= nodes.len() || l.from == l.to {
                return Err(NetError::Invalid(format!("link {} - {} is out of range", l.from, l.to)));
            }
            if !(l.capacity_bps > 0.0) {
                return Err(NetError::Invalid(format!("link {} - {} has capacity {}", l.from, l.to, l.capacity_bps)));
            }
            adjacency[l.from].push((l.to, i));
            adjacency[l.to].push((l.from, i));
        }
        for a in &mut adjacency {
            a.sort_unstable();
        }
        let g = Self { nodes, links, adjacency };
        g.check_connected()?;
        Ok(g)
    }

    fn check_connected(&self) -> Result<(), NetError> {
        let Some(gw) = self.gateway() else {
            return Err(NetError::Invalid("no gateway".into()));
        };
        let d = self.hop_distances(gw);
        match d.iter().position(|x| x.is_none()) {
            Some(n) => Err(NetError::Disconnected(n)),
            None => Ok(()),
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn links(&self) -> &[WiredLink] {
        &self.links
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id]
    }

    pub fn gateway(&self) -> Option<NodeId> {
        self.nodes.iter().find(|n| n.kind == NodeKind::Gateway).map(|n| n.id)
    }

    pub fn radio_nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter().filter(|n| n.kind == NodeKind::RadioNode)
    }

    pub fn of_kind(&self, kind: NodeKind) -> Vec<NodeId> {
        self.nodes.iter().filter(|n| n.kind == kind).map(|n| n.id).collect()
    }

    /// Neighbors with the connecting link index, sorted by neighbor id.
    pub fn neighbors(&self, id: NodeId) -> &[(NodeId, usize)] {
        &self.adjacency[id]
    }

    pub fn link_between(&self, a: NodeId, b: NodeId) -> Option<usize> {
        self.adjacency[a].iter().find(|(n, _)| *n == b).map(|(_, l)| *l)
    }

    pub fn hop_distances(&self, from: NodeId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.nodes.len()];
        let mut q = VecDeque::new();
        dist[from] = Some(0);
        q.push_back(from);
        while let Some(u) = q.pop_front() {
            let du = dist[u].unwrap();
            for &(v, _) in &self.adjacency[u] {
                if dist[v].is_none() {
                    dist[v] = Some(du + 1);
                    q.push_back(v);
                }
            }
        }
        dist
    }

    /// Hop-count shortest node sequence `from..=to`; among equal-length routes
    /// the lexicographically smallest node sequence wins.
    pub fn shortest_path(&self, from: NodeId, to: NodeId) -> Option<Vec<NodeId>> {
        let to_dst = self.hop_distances(to);
        let mut d = to_dst[from]?;
        let mut path = vec![from];
        let mut cur = from;
        while d > 0 {
            // neighbors are sorted by id, so the first hit is the smallest
            let next = self.adjacency[cur].iter().map(|(v, _)| *v).find(|v| to_dst[*v] == Some(d - 1))?;
            path.push(next);
            cur = next;
            d -= 1;
        }
        Some(path)
    }

    /// Link indices along a node sequence.
    pub fn path_links(&self, nodes: &[NodeId]) -> Option<Vec<usize>> {
        nodes.windows(2).map(|w| self.link_between(w[0], w[1])).collect()
    }

    pub fn path_latency(&self, nodes: &[NodeId]) -> f64 {
        self.path_links(nodes)
            .map(|ls| ls.iter().map(|&l| self.links[l].latency_s).sum())
            .unwrap_or(f64::INFINITY)
    }

    /// One record per line: `node <id> <kind> [x y]` and
    /// `link <from> <to> <capacity_bps> <latency_s>`.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# densenet topology v1\n");
        for n in &self.nodes {
            match n.position {
                Some((x, y)) => writeln!(s, "node {} {} {} {}", n.id, n.kind.as_str(), x, y),
                None => writeln!(s, "node {} {}", n.id, n.kind.as_str()),
            }
            .unwrap();
        }
        for l in &self.links {
            writeln!(s, "link {} {} {} {}", l.from, l.to, l.capacity_bps, l.latency_s).unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self, NetError> {
        let mut nodes = Vec::new();
        let mut links = Vec::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let bad = || NetError::Parse { line: no + 1, text: raw.to_string() };
            let f: Vec<&str> = line.split_whitespace().collect();
            match f.as_slice() {
                ["node", id, kind, rest @ ..] => {
                    let id = id.parse().map_err(|_| bad())?;
                    let kind = NodeKind::parse(kind).ok_or_else(bad)?;
                    let position = match rest {
                        [] => None,
                        [x, y] => Some((x.parse().map_err(|_| bad())?, y.parse().map_err(|_| bad())?)),
                        _ => return Err(bad()),
                    };
                    nodes.push(Node { id, kind, position });
                }
                ["link", a, b, cap, lat] => links.push(WiredLink {
                    from: a.parse().map_err(|_| bad())?,
                    to: b.parse().map_err(|_| bad())?,
                    capacity_bps: cap.parse().map_err(|_| bad())?,
                    latency_s: lat.parse().map_err(|_| bad())?,
                }),
                _ => return Err(bad()),
            }
        }
        Self::new(nodes, links)
    }
}

/// Gateway (id 0), routers `1..=R` on a jittered grid joined in a ring,
/// `G` of them evenly spaced on the ring attached to the gateway, then
/// radio nodes placed uniformly and attached to the nearest router.
pub fn build_topology(cfg: &TopologyConfig) -> Result<NetworkGraph, NetError> {
    if !(cfg.area_km2 > 0.0) {
        return Err(NetError::Config("topology.area_km2 must be > 0".into()));
    }
    if cfg.radio_nodes == 0 || cfg.routers == 0 {
        return Err(NetError::Config("topology.radio_nodes and topology.routers must be >= 1".into()));
    }
    if cfg.gateway_routers == 0 || cfg.gateway_routers > cfg.routers {
        return Err(NetError::Config("topology.gateway_routers must be in 1..=routers".into()));
    }
    let side = cfg.side_m();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut nodes = vec![Node { id: 0, kind: NodeKind::Gateway, position: Some((side / 2.0, side / 2.0)) }];

    let cols = (cfg.routers as f64).sqrt().ceil() as usize;
    let rows = cfg.routers.div_ceil(cols);
    for r in 0..cfg.routers {
        let (cx, cy) = ((r % cols) as f64 + 0.5, (r / cols) as f64 + 0.5);
        let jx: f64 = rng.random_range(-0.25..0.25);
        let jy: f64 = rng.random_range(-0.25..0.25);
        let pos = ((cx + jx) * side / cols as f64, (cy + jy) * side / rows as f64);
        nodes.push(Node { id: 1 + r, kind: NodeKind::Router, position: Some(pos) });
    }

    let mut links = Vec::new();
    let link = |a, b, cap| WiredLink { from: a, to: b, capacity_bps: cap, latency_s: cfg.hop_latency_s };
    if cfg.routers > 1 {
        for r in 0..cfg.routers {
            let next = (r + 1) % cfg.routers;
            if cfg.routers == 2 && r == 1 {
                break;
            }
            links.push(link(1 + r, 1 + next, cfg.core_capacity_bps));
        }
    }
    for g in 0..cfg.gateway_routers {
        let r = g * cfg.routers / cfg.gateway_routers;
        links.push(link(0, 1 + r, cfg.gateway_capacity_bps));
    }

    let first_radio = 1 + cfg.routers;
    for i in 0..cfg.radio_nodes {
        let pos = (rng.random_range(0.0..side), rng.random_range(0.0..side));
        let id = first_radio + i;
        let nearest = (1..first_radio)
            .min_by(|&a, &b| {
                let da = dist2(nodes[a].position.unwrap(), pos);
                let db = dist2(nodes[b].position.unwrap(), pos);
                da.total_cmp(&db).then(a.cmp(&b))
            })
            .unwrap();
        nodes.push(Node { id, kind: NodeKind::RadioNode, position: Some(pos) });
        links.push(link(nearest, id, cfg.access_capacity_bps));
    }
    NetworkGraph::new(nodes, links)
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_scale_topology() {
        let g = build_topology(&TopologyConfig::default()).unwrap();
        assert_eq!(g.radio_nodes().count(), 57);
        assert_eq!(g.of_kind(NodeKind::Router).len(), 11);
        assert_eq!(g.neighbors(g.gateway().unwrap()).len(), 3);
        let d = g.hop_distances(0);
        assert!(g.radio_nodes().all(|n| d[n.id].is_some()));
        let side = TopologyConfig::default().side_m();
        assert!((side - 200.0).abs() < 1e-9);
        for n in g.radio_nodes() {
            let (x, y) = n.position.unwrap();
            assert!((0.0..side).contains(&x) && (0.0..side).contains(&y));
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = TopologyConfig::default();
        assert_eq!(build_topology(&cfg).unwrap(), build_topology(&cfg).unwrap());
        let other = TopologyConfig { seed: 2, ..cfg.clone() };
        assert_ne!(build_topology(&cfg).unwrap(), build_topology(&other).unwrap());
        let macro_cfg = TopologyConfig { area_km2: 1.0, ..cfg };
        let g = build_topology(&macro_cfg).unwrap();
        assert!(g.radio_nodes().any(|n| n.position.unwrap().0 > 500.0));
    }

    #[test]
    fn config_errors() {
        let bad = TopologyConfig { area_km2: 0.0, ..Default::default() };
        assert!(matches!(build_topology(&bad), Err(NetError::Config(_))));
        let bad = TopologyConfig { radio_nodes: 0, ..Default::default() };
        assert!(matches!(build_topology(&bad), Err(NetError::Config(_))));
    }

    #[test]
    fn diamond_tie_breaks_lexicographically() {
        let nodes = (0..4)
            .map(|i| Node { id: i, kind: if i == 0 { NodeKind::Gateway } else { NodeKind::Router }, position: None })
            .collect();
        let l = |a, b| WiredLink { from: a, to: b, capacity_bps: 1.0, latency_s: 0.0 };
        let g = NetworkGraph::new(nodes, vec![l(0, 2), l(0, 1), l(2, 3), l(1, 3)]).unwrap();
        assert_eq!(g.shortest_path(0, 3).unwrap(), vec![0, 1, 3]);
    }

    #[test]
    fn text_roundtrip() {
        let g = build_topology(&TopologyConfig { radio_nodes: 5, routers: 3, gateway_routers: 1, ..Default::default() })
            .unwrap();
        let back = NetworkGraph::from_text(&g.to_text()).unwrap();
        assert_eq!(back, g);
        assert!(matches!(NetworkGraph::from_text("node x gateway"), Err(NetError::Parse { line: 1, .. })));
    }

    #[test]
    fn disconnected_rejected() {
        let nodes = vec![
            Node { id: 0, kind: NodeKind::Gateway, position: None },
            Node { id: 1, kind: NodeKind::RadioNode, position: Some((0.0, 0.0)) },
        ];
        assert!(matches!(NetworkGraph::new(nodes, vec![]), Err(NetError::Disconnected(1))));
    }
}
