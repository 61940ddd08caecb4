use crate::netmodel::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum HandoverMode {
    Drop,
    Forward,
}

impl HandoverMode {
    pub fn as_str(self) -> &'static str {
        match self {
            HandoverMode::Drop => "drop",
            HandoverMode::Forward => "forward",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HandoverAction {
    /// The node left the serving set; its queue for the UE is dropped or
    /// forwarded according to `mode`.
    Release { node: NodeId, mode: HandoverMode },
    /// The node joined and may schedule the UE from `ready_at` on.
    Join { node: NodeId, ready_at: f64 },
}

/// Actions for a serving-set change; empty when the sets hold the same nodes.
pub fn handover_execute(
    old_set: &[NodeId],
    new_set: &[NodeId],
    mode: HandoverMode,
    now: f64,
    control_delay_s: f64,
) -> Vec<HandoverAction> {
    let mut out: Vec<HandoverAction> = old_set
        .iter()
        .filter(|n| !new_set.contains(n))
        .map(|&node| HandoverAction::Release { node, mode })
        .collect();
    out.extend(
        new_set
            .iter()
            .filter(|n| !old_set.contains(n))
            .map(|&node| HandoverAction::Join { node, ready_at: now + control_delay_s }),
    );
    out
}
