use serde::{Deserialize, Serialize};
use super::topology::NodeId;

/// Propagation and link-abstraction constants.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioParams {
    pub tx_power_dbm: f64,
    pub bandwidth_hz: f64,
    /// Loss at the 1 m reference distance.
    pub pl0_db: f64,
    pub exponent: f64,
    pub d_min_m: f64,
    pub noise_density_dbm_hz: f64,
    pub noise_figure_db: f64,
    /// bit/s/Hz ceiling of the link abstraction.
    pub se_cap: f64,
    pub mimo_gain: f64,
    pub reuse: usize,
}

impl Default for RadioParams {
    fn default() -> Self {
        Self {
            tx_power_dbm: 24.0,
            bandwidth_hz: 10e6,
            pl0_db: 38.0,
            exponent: 3.0,
            d_min_m: 1.0,
            noise_density_dbm_hz: -174.0,
            noise_figure_db: 9.0,
            se_cap: 6.0,
            mimo_gain: 1.5,
            reuse: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RadioNode {
    pub id: NodeId,
    pub position: (f64, f64),
    pub tx_power_dbm: f64,
    pub bandwidth_hz: f64,
    pub reuse_group: usize,
}

/// Measurement for one UE / radio node pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSample {
    pub ue_id: usize,
    pub node_id: NodeId,
    pub path_loss_db: f64,
    pub sinr_db: f64,
    /// Rate if the node gave this UE all of its resource.
    pub peak_rate_bps: f64,
}

/// Log-distance loss: `PL0 + 10 a log10(max(d, d_min))`.
pub fn path_loss(distance_m: f64, p: &RadioParams) -> f64 {
    p.pl0_db + 10.0 * p.exponent * distance_m.max(p.d_min_m).log10()
}

pub fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn mw_to_dbm(mw: f64) -> f64 {
    10.0 * mw.log10()
}

/// Thermal noise over `bandwidth_hz` including the receiver noise figure.
pub fn noise_dbm(bandwidth_hz: f64, p: &RadioParams) -> f64 {
    p.noise_density_dbm_hz + 10.0 * bandwidth_hz.log10() + p.noise_figure_db
}

pub fn rx_power_dbm(node: &RadioNode, at: (f64, f64), p: &RadioParams) -> f64 {
    node.tx_power_dbm - path_loss(distance(node.position, at), p)
}

/// SINR at `ue_pos` from `serving`, counting only `interferers` in the same
/// reuse group (the serving node itself is skipped if listed).
pub fn sinr<'a>(
    ue_pos: (f64, f64),
    serving: &RadioNode,
    interferers: impl IntoIterator<Item = &'a RadioNode>,
    p: &RadioParams,
) -> f64 {
    let s = dbm_to_mw(rx_power_dbm(serving, ue_pos, p));
    let i: f64 = interferers
        .into_iter()
        .filter(|n| n.id != serving.id && n.reuse_group == serving.reuse_group)
        .map(|n| dbm_to_mw(rx_power_dbm(n, ue_pos, p)))
        .sum();
    let n = dbm_to_mw(noise_dbm(serving.bandwidth_hz, p));
    mw_to_dbm(s / (n + i))
}

/// `fraction * B * min(log2(1 + sinr), cap) * gain`.
pub fn rate_from_sinr(sinr_db: f64, bandwidth_hz: f64, fraction: f64, se_cap: f64, mimo_gain: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&fraction));
    let lin = 10f64.powf(sinr_db / 10.0);
    fraction * bandwidth_hz * (1.0 + lin).log2().min(se_cap) * mimo_gain
}

pub fn sample_channel<'a>(
    ue_id: usize,
    ue_pos: (f64, f64),
    node: &RadioNode,
    interferers: impl IntoIterator<Item = &'a RadioNode>,
    p: &RadioParams,
) -> ChannelSample {
    let sinr_db = sinr(ue_pos, node, interferers, p);
    ChannelSample {
        ue_id,
        node_id: node.id,
        path_loss_db: path_loss(distance(node.position, ue_pos), p),
        sinr_db,
        peak_rate_bps: rate_from_sinr(sinr_db, node.bandwidth_hz, 1.0, p.se_cap, p.mimo_gain),
    }
}
