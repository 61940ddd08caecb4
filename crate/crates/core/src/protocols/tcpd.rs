use std::collections::{BTreeMap, VecDeque};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TcpDParams {
    /// Packets in flight at most.
    pub window: usize,
    pub rto_initial_s: f64,
    pub rto_min_s: f64,
    pub rto_max_s: f64,
}

impl Default for TcpDParams {
    fn default() -> Self {
        Self { window: 64, rto_initial_s: 1.0, rto_min_s: 0.05, rto_max_s: 60.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Outstanding {
    sent_at: f64,
    retransmitted: bool,
}

/// Sender side of TCP-D: fixed window, per-packet acknowledgments and a
/// single retransmission timer. No congestion control.
#[derive(Debug, Clone, PartialEq)]
pub struct ArqState {
    pub params: TcpDParams,
    total: u64,
    next_seq: u64,
    unacked: BTreeMap<u64, Outstanding>,
    retx: VecDeque<u64>,
    pub srtt: Option<f64>,
    pub rttvar: f64,
    pub rto: f64,
    deadline: Option<f64>,
    pub retransmissions: u64,
    pub timeouts: u64,
}

impl ArqState {
    /// Sender for a transfer of `total` packets.
    pub fn new(total: u64, params: TcpDParams) -> Self {
        Self {
            params,
            total,
            next_seq: 0,
            unacked: BTreeMap::new(),
            retx: VecDeque::new(),
            srtt: None,
            rttvar: 0.0,
            rto: params.rto_initial_s,
            deadline: None,
            retransmissions: 0,
            timeouts: 0,
        }
    }

    pub fn outstanding(&self) -> usize {
        self.unacked.len()
    }

    pub fn is_done(&self) -> bool {
        self.next_seq == self.total && self.unacked.is_empty()
    }

    /// Whether `next_to_send` would return a packet.
    pub fn can_send(&self) -> bool {
        !self.retx.is_empty() || (self.next_seq < self.total && self.unacked.len() < self.params.window)
    }

    /// Next packet to put on the wire: pending retransmissions first, then
    /// new data while the window has room.
    pub fn next_to_send(&mut self, now: f64) -> Option<u64> {
        while let Some(seq) = self.retx.pop_front() {
            if let Some(o) = self.unacked.get_mut(&seq) {
                o.sent_at = now;
                o.retransmitted = true;
                self.retransmissions += 1;
                self.arm(now);
                return Some(seq);
            }
        }
        if self.next_seq < self.total && self.unacked.len() < self.params.window {
            let seq = self.next_seq;
            self.next_seq += 1;
            self.unacked.insert(seq, Outstanding { sent_at: now, retransmitted: false });
            self.arm(now);
            return Some(seq);
        }
        None
    }

    fn arm(&mut self, now: f64) {
        if self.deadline.is_none() {
            self.deadline = Some(now + self.rto);
        }
    }

    fn sample(&mut self, rtt: f64) {
        match self.srtt {
            None => {
                self.srtt = Some(rtt);
                self.rttvar = rtt / 2.0;
            }
            Some(s) => {
                self.rttvar = 0.75 * self.rttvar + 0.25 * (s - rtt).abs();
                self.srtt = Some(0.875 * s + 0.125 * rtt);
            }
        }
        let s = self.srtt.expect("set above");
        self.rto = (s + 4.0 * self.rttvar).clamp(self.params.rto_min_s, self.params.rto_max_s);
    }

    /// Returns true when `seq` was outstanding. Retransmitted packets give no
    /// RTT sample (Karn).
    pub fn on_ack(&mut self, seq: u64, now: f64) -> bool {
        let Some(o) = self.unacked.remove(&seq) else { return false };
        if !o.retransmitted {
            self.sample(now - o.sent_at);
        }
        self.deadline = if self.unacked.is_empty() { None } else { Some(now + self.rto) };
        true
    }

    pub fn timer_deadline(&self) -> Option<f64> {
        self.deadline
    }

    /// On expiry every unacknowledged packet is queued for retransmission and
    /// the timeout doubles. Returns the number of packets queued.
    pub fn on_timeout(&mut self, now: f64) -> usize {
        match self.deadline {
            Some(d) if now >= d - 1e-12 => {}
            _ => return 0,
        }
        self.timeouts += 1;
        self.rto = (self.rto * 2.0).min(self.params.rto_max_s);
        self.retx = self.unacked.keys().copied().collect();
        self.deadline = if self.unacked.is_empty() { None } else { Some(now + self.rto) };
        self.retx.len()
    }
}

/// Receiver side: records arrivals and counts duplicates without
/// suppressing them upstream.
#[derive(Debug, Clone, PartialEq)]
pub struct TcpReceiver {
    seen: Vec<bool>,
    received: u64,
    pub duplicates: u64,
}

impl TcpReceiver {
    pub fn new(total: u64) -> Self {
        Self { seen: vec![false; total as usize], received: 0, duplicates: 0 }
    }

    /// True for a first arrival.
    pub fn on_packet(&mut self, seq: u64) -> bool {
        let Some(slot) = self.seen.get_mut(seq as usize) else { return false };
        if *slot {
            self.duplicates += 1;
            false
        } else {
            *slot = true;
            self.received += 1;
            true
        }
    }

    pub fn received(&self) -> u64 {
        self.received
    }

    pub fn is_complete(&self) -> bool {
        self.received == self.seen.len() as u64
    }
}
