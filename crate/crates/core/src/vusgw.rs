//! Data plane of the virtual user-specific serving gateway: per-flow block
//! queue, encoder cursor, rate shaping per path, buffer-status feedback and
//! decode acknowledgments.
//!
//! Symbols are handed out as [`SymbolRef`] descriptors. A flow ingested with
//! real bytes can turn any descriptor into a [`CodedSymbol`]; flows ingested
//! by length only (the simulator) never touch payloads.

use crate::fountain::{fixed_rate_count, repair_symbol, segment_from, segment_layout, CodecError, CodedSymbol, SourceBlock};
use crate::netmodel::NodeId;
use crate::te::TrafficClass;
use std::collections::{BTreeSet, VecDeque};
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DispatchMode {
    /// Systematic symbols, then repair until the block is acknowledged.
    Rateless,
    /// `ceil(K * ratio)` symbols per block, then the next block.
    FixedRate(f64),
    /// Rateless, but every path runs at this rate whatever the TE says.
    Multicast(f64),
    /// Systematic symbols only.
    Uncoded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SymbolRef {
    pub block_id: u32,
    pub esi: u32,
    pub k: u32,
}

impl SymbolRef {
    pub fn is_systematic(&self) -> bool {
        self.esi < self.k
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackParams {
    pub enabled: bool,
    pub beta: f64,
    /// Thresholds in seconds of allocated rate.
    pub high_s: f64,
    pub low_s: f64,
    pub report_period_s: f64,
    /// Lowest adjusted/allocated ratio the decrease rule may reach.
    pub min_factor: f64,
}

impl Default for FeedbackParams {
    fn default() -> Self {
        Self { enabled: true, beta: 0.5, high_s: 0.3, low_s: 0.1, report_period_s: 0.1, min_factor: 1.0 / 64.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BufferStatusReport {
    pub node_id: NodeId,
    pub flow_id: usize,
    pub queued_bytes: u64,
    pub timestamp: f64,
}

/// Rate state of one path, keyed by its radio node.
#[derive(Debug, Clone, PartialEq)]
pub struct PathShaper {
    pub node: NodeId,
    pub allocated_bps: f64,
    /// adjusted / allocated, in (0, 1].
    pub factor: f64,
    carry_bits: f64,
    pub emitted: u64,
}

impl PathShaper {
    pub fn new(node: NodeId, allocated_bps: f64) -> Self {
        Self { node, allocated_bps, factor: 1.0, carry_bits: 0.0, emitted: 0 }
    }

    pub fn adjusted_bps(&self) -> f64 {
        self.allocated_bps * self.factor
    }

    /// Whole symbols the path may emit after `dt` more seconds.
    pub fn budget(&mut self, dt: f64, symbol_bits: f64) -> usize {
        self.carry_bits += self.adjusted_bps() * dt;
        let n = (self.carry_bits / symbol_bits).floor();
        self.carry_bits -= n * symbol_bits;
        n as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeedbackEvent {
    pub time: f64,
    pub node: NodeId,
    pub queued_bytes: u64,
    pub old_bps: f64,
    pub new_bps: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AckRecord {
    pub block_id: u32,
    pub k: usize,
    pub sent: u64,
    pub redundancy: f64,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
struct BlockState {
    block_id: u32,
    k: usize,
    true_len: usize,
    next_esi: u32,
    sent: u64,
    /// Symbol count after which a fixed-rate block is done.
    limit: Option<usize>,
    source: Option<SourceBlock>,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VusgwError {
    #[error("flow {0} is not registered")]
    UnknownFlow(usize),
    #[error("handover forwarding is disabled")]
    ForwardingDisabled,
    #[error(transparent)]
    Codec(#[from] CodecError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowContext {
    pub flow_id: usize,
    pub class: TrafficClass,
    pub mode: DispatchMode,
    pub symbol_size: usize,
    pub max_k: usize,
    pub feedback: FeedbackParams,
    pub forwarding: bool,
    blocks: VecDeque<BlockState>,
    next_block_id: u32,
    acked: BTreeSet<u32>,
    paths: Vec<PathShaper>,
    forwarded: VecDeque<SymbolRef>,
    rr: usize,
    pub stale_reports: u64,
    pub repair_ops: u64,
    pub acks: Vec<AckRecord>,
    pub feedback_log: Vec<FeedbackEvent>,
}

impl FlowContext {
    pub fn new(flow_id: usize, class: TrafficClass, mode: DispatchMode, symbol_size: usize, max_k: usize) -> Self {
        assert!(symbol_size > 0 && max_k > 0);
        Self {
            flow_id,
            class,
            mode,
            symbol_size,
            max_k,
            feedback: FeedbackParams::default(),
            forwarding: false,
            blocks: VecDeque::new(),
            next_block_id: 0,
            acked: BTreeSet::new(),
            paths: Vec::new(),
            forwarded: VecDeque::new(),
            rr: 0,
            stale_reports: 0,
            repair_ops: 0,
            acks: Vec::new(),
            feedback_log: Vec::new(),
        }
    }

    fn symbol_bits(&self) -> f64 {
        (self.symbol_size * 8) as f64
    }

    fn limit(&self, k: usize) -> Option<usize> {
        match self.mode {
            DispatchMode::FixedRate(r) => Some(fixed_rate_count(k, r).unwrap_or(k)),
            DispatchMode::Uncoded => Some(k),
            _ => None,
        }
    }

    /// Segments `data` and queues its blocks; returns their ids.
    pub fn ingest(&mut self, data: &[u8]) -> Result<Vec<u32>, VusgwError> {
        if data.is_empty() {
            return Ok(Vec::new());
        }
        let blocks = segment_from(data, self.symbol_size, self.max_k, self.next_block_id)?;
        let mut ids = Vec::with_capacity(blocks.len());
        for b in blocks {
            ids.push(b.block_id());
            let limit = self.limit(b.k());
            self.blocks.push_back(BlockState {
                block_id: b.block_id(),
                k: b.k(),
                true_len: b.true_len(),
                next_esi: 0,
                sent: 0,
                limit,
                source: Some(b),
            });
        }
        self.next_block_id += ids.len() as u32;
        Ok(ids)
    }

    /// Queues blocks for `len` bytes without keeping any payload.
    pub fn ingest_len(&mut self, len: usize) -> Result<Vec<(u32, usize)>, VusgwError> {
        if len == 0 {
            return Ok(Vec::new());
        }
        let mut out = Vec::new();
        for l in segment_layout(len, self.symbol_size, self.max_k)? {
            let id = self.next_block_id;
            self.next_block_id += 1;
            let limit = self.limit(l.k);
            self.blocks.push_back(BlockState {
                block_id: id,
                k: l.k,
                true_len: l.true_len,
                next_esi: 0,
                sent: 0,
                limit,
                source: None,
            });
            out.push((id, l.k));
        }
        Ok(out)
    }

    pub fn pending_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn has_data(&self) -> bool {
        !self.blocks.is_empty() || !self.forwarded.is_empty()
    }

    pub fn paths(&self) -> &[PathShaper] {
        &self.paths
    }

    /// Installs a new TE allocation. Feedback state carries over for radio
    /// nodes that stay in the set.
    pub fn set_allocation(&mut self, alloc: &[(NodeId, f64)]) {
        let old = std::mem::take(&mut self.paths);
        self.paths = alloc
            .iter()
            .map(|&(node, bps)| {
                let rate = match self.mode {
                    DispatchMode::Multicast(r) => r,
                    _ => bps.max(0.0),
                };
                match old.iter().find(|p| p.node == node) {
                    Some(p) => PathShaper { allocated_bps: rate, ..p.clone() },
                    None => PathShaper::new(node, rate),
                }
            })
            .collect();
    }

    fn next_symbol(&mut self) -> Option<SymbolRef> {
        if let Some(s) = self.forwarded.pop_front() {
            return Some(s);
        }
        loop {
            let b = self.blocks.front_mut()?;
            if let Some(limit) = b.limit {
                if b.sent as usize >= limit {
                    // fixed-rate and uncoded blocks are done once fully sent
                    self.blocks.pop_front();
                    continue;
                }
            }
            let s = SymbolRef { block_id: b.block_id, esi: b.next_esi, k: b.k as u32 };
            b.next_esi += 1;
            b.sent += 1;
            if !s.is_systematic() {
                self.repair_ops += b.k as u64;
            }
            return Some(s);
        }
    }

    /// Symbols to send on each path for an interval of `dt` seconds.
    pub fn dispatch_tick(&mut self, dt: f64) -> Vec<(NodeId, SymbolRef)> {
        assert!(dt > 0.0);
        let bits = self.symbol_bits();
        let mut budgets: Vec<usize> = Vec::with_capacity(self.paths.len());
        for p in &mut self.paths {
            budgets.push(p.budget(dt, bits));
        }
        let mut out = Vec::new();
        // interleave paths so one path cannot take every systematic symbol
        let n = self.paths.len();
        let mut remaining: usize = budgets.iter().sum();
        let mut i = self.rr;
        while remaining > 0 {
            let pi = i % n;
            i += 1;
            if budgets[pi] == 0 {
                continue;
            }
            let Some(s) = self.next_symbol() else { break };
            budgets[pi] -= 1;
            remaining -= 1;
            self.paths[pi].emitted += 1;
            out.push((self.paths[pi].node, s));
        }
        if n > 0 {
            self.rr = i % n;
        }
        // unused budget is forfeited so idle time banks no credit
        out
    }

    /// Payload of a descriptor when the flow was ingested with bytes. Blocks
    /// already acknowledged are gone.
    pub fn materialize(&mut self, s: &SymbolRef) -> Option<CodedSymbol> {
        let b = self.blocks.iter().find(|b| b.block_id == s.block_id)?;
        let src = b.source.as_ref()?;
        if !s.is_systematic() {
            self.repair_ops += b.k as u64;
        }
        Some(repair_symbol(src, s.esi))
    }

    /// Applies the threshold rule for the path ending at `report.node_id`.
    /// Returns the new adjusted rate, or `None` for stale or unknown reports.
    pub fn on_buffer_report(&mut self, report: &BufferStatusReport, now: f64) -> Option<f64> {
        let fb = self.feedback;
        if now - report.timestamp > fb.report_period_s + 1e-9 {
            self.stale_reports += 1;
            return None;
        }
        let p = self.paths.iter_mut().find(|p| p.node == report.node_id)?;
        if !fb.enabled {
            return Some(p.adjusted_bps());
        }
        let old = p.adjusted_bps();
        let bytes_per_s = p.allocated_bps / 8.0;
        let q = report.queued_bytes as f64;
        if q > fb.high_s * bytes_per_s {
            p.factor = (p.factor * fb.beta).max(fb.min_factor);
        } else if q < fb.low_s * bytes_per_s {
            p.factor = (p.factor / fb.beta).min(1.0);
        }
        let new = p.adjusted_bps();
        if new != old {
            self.feedback_log.push(FeedbackEvent {
                time: now,
                node: report.node_id,
                queued_bytes: report.queued_bytes,
                old_bps: old,
                new_bps: new,
            });
        }
        Some(new)
    }

    /// Stops the block and records its redundancy. `None` for unknown or
    /// already acknowledged blocks, in which case nothing should be purged.
    pub fn on_decode_ack(&mut self, block_id: u32, now: f64) -> Option<AckRecord> {
        if !self.acked.insert(block_id) {
            return None;
        }
        let pos = self.blocks.iter().position(|b| b.block_id == block_id);
        let (k, sent) = match pos {
            Some(i) => {
                let b = self.blocks.remove(i).expect("index from position");
                (b.k, b.sent)
            }
            None => {
                self.acked.remove(&block_id);
                return None;
            }
        };
        self.forwarded.retain(|s| s.block_id != block_id);
        let rec = AckRecord { block_id, k, sent, redundancy: (sent as f64 / k as f64 - 1.0).max(0.0), time: now };
        self.acks.push(rec);
        Some(rec)
    }

    /// Takes back symbols stranded at a departed node; they are sent again
    /// ahead of fresh symbols. Symbols of acknowledged blocks are discarded.
    pub fn on_handover_forward(&mut self, symbols: impl IntoIterator<Item = SymbolRef>) -> Result<usize, VusgwError> {
        if !self.forwarding {
            return Err(VusgwError::ForwardingDisabled);
        }
        let mut n = 0;
        let mut take: Vec<SymbolRef> = symbols.into_iter().filter(|s| !self.acked.contains(&s.block_id)).collect();
        n += take.len();
        for s in take.drain(..).rev() {
            self.forwarded.push_front(s);
        }
        Ok(n)
    }

    /// Bytes of the block still owed by `true_len` bookkeeping.
    pub fn block_len(&self, block_id: u32) -> Option<usize> {
        self.blocks.iter().find(|b| b.block_id == block_id).map(|b| b.true_len)
    }

    pub fn redundancy_csv(&self) -> String {
        let mut s = String::from("flow_id,block_id,k,sent,redundancy,time_s\n");
        for a in &self.acks {
            let _ = writeln!(s, "{},{},{},{},{:.6},{:.6}", self.flow_id, a.block_id, a.k, a.sent, a.redundancy, a.time);
        }
        s
    }

    pub fn feedback_csv(&self) -> String {
        let mut s = String::from("flow_id,time_s,node,queued_bytes,old_bps,new_bps\n");
        for e in &self.feedback_log {
            let _ = writeln!(
                s,
                "{},{:.6},{},{},{:.1},{:.1}",
                self.flow_id, e.time, e.node, e.queued_bytes, e.old_bps, e.new_bps
            );
        }
        s
    }
}
