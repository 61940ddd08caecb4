use super::radio::{distance, path_loss, RadioNode, RadioParams};
use super::topology::NodeId;

/// Two parallel lanes along x. Lane 0 travels toward +x, lane 1 toward -x.
#[derive(Debug, Clone, PartialEq)]
pub struct Strip {
    pub x_min: f64,
    pub x_max: f64,
    pub lane_y: [f64; 2],
}

impl Strip {
    /// Lanes at one and two thirds of the height, spanning `length` meters
    /// centred in a square of side `side`.
    pub fn centred(side: f64, length: f64) -> Self {
        let length = length.min(side);
        let x_min = (side - length) / 2.0;
        Self { x_min, x_max: x_min + length, lane_y: [side / 3.0, 2.0 * side / 3.0] }
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserEquipment {
    pub id: usize,
    pub position: (f64, f64),
    /// m/s
    pub velocity: (f64, f64),
    pub lane: usize,
    /// Best radio nodes by ascending path loss.
    pub serving_set: Vec<NodeId>,
    pub noise_figure_db: f64,
}

impl UserEquipment {
    pub fn on_lane(id: usize, lane: usize, x: f64, speed_mps: f64, strip: &Strip) -> Self {
        let dir = if lane == 0 { 1.0 } else { -1.0 };
        Self {
            id,
            position: (x, strip.lane_y[lane]),
            velocity: (dir * speed_mps, 0.0),
            lane,
            serving_set: Vec::new(),
            noise_figure_db: 9.0,
        }
    }
}

pub fn kmh_to_mps(kmh: f64) -> f64 {
    kmh / 3.6
}

/// Advances every UE by `velocity * dt`; leaving the strip wraps to the
/// entry edge of the lane.
pub fn step_mobility(ues: &mut [UserEquipment], dt: f64, strip: &Strip) {
    debug_assert!(dt > 0.0);
    let len = strip.length();
    for ue in ues {
        let mut x = ue.position.0 + ue.velocity.0 * dt;
        if len > 0.0 {
            while x > strip.x_max {
                x -= len;
            }
            while x < strip.x_min {
                x += len;
            }
        }
        ue.position = (x, ue.position.1 + ue.velocity.1 * dt);
    }
}

/// The `n` nodes with the smallest path loss, ties by node id.
pub fn best_n_cells(ue_pos: (f64, f64), nodes: &[RadioNode], n: usize, p: &RadioParams) -> Vec<NodeId> {
    debug_assert!(n >= 1);
    let mut ranked: Vec<(f64, NodeId)> = nodes
        .iter()
        .map(|r| (path_loss(distance(r.position, ue_pos), p), r.id))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked.into_iter().take(n).map(|(_, id)| id).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strip() -> Strip {
        Strip::centred(200.0, 200.0)
    }

    #[test]
    fn moves_along_lane() {
        let s = strip();
        let mut ues = vec![UserEquipment::on_lane(0, 0, 50.0, kmh_to_mps(30.0), &s)];
        step_mobility(&mut ues, 1.0, &s);
        assert!((ues[0].position.0 - 58.333_333).abs() < 1e-3);
        let mut still = vec![UserEquipment::on_lane(1, 1, 50.0, 0.0, &s)];
        step_mobility(&mut still, 1.0, &s);
        assert_eq!(still[0].position, (50.0, s.lane_y[1]));
    }

    #[test]
    fn wraps_at_strip_end() {
        let s = strip();
        let mut ues = vec![
            UserEquipment::on_lane(0, 0, 199.0, 10.0, &s),
            UserEquipment::on_lane(1, 1, 1.0, 10.0, &s),
        ];
        step_mobility(&mut ues, 0.5, &s);
        assert!((ues[0].position.0 - 4.0).abs() < 1e-9);
        assert!((ues[1].position.0 - 196.0).abs() < 1e-9);
    }

    #[test]
    fn best_cells_order_and_ties() {
        let p = RadioParams::default();
        let mk = |id, x: f64| RadioNode { id, position: (x, 0.0), tx_power_dbm: 24.0, bandwidth_hz: 10e6, reuse_group: 0 };
        let nodes = vec![mk(5, 30.0), mk(3, -10.0), mk(4, 10.0), mk(7, 100.0), mk(8, 60.0)];
        assert_eq!(best_n_cells((0.0, 0.0), &nodes, 1, &p), vec![3]);
        assert_eq!(best_n_cells((0.0, 0.0), &nodes, 4, &p), vec![3, 4, 5, 8]);
        assert_eq!(best_n_cells((0.0, 0.0), &nodes, 10, &p).len(), 5);
    }
}
