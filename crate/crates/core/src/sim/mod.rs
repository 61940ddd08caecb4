//! Discrete-event simulation of a scenario: mobility and channel sampling,
//! per-TTI scheduling at every radio node, the transport protocols, and the
//! metrics the experiments report.
//!
//! Time is kept in integer microseconds. The main loop advances one TTI at a
//! time; sporadic events (acks, purges, forwarded packets, session starts,
//! frame deadlines, buffer reports) wait in a heap ordered by `(time, seq)`
//! and are handled at the first tick at or after their time.

mod engine;
mod scripted;
mod video;

pub use scripted::{delay_spike_scenario, transfer_session, DelaySpikeOutcome, TransferOutcome, TransferProtocol};
pub use video::{percentile, supported_video_rate, VideoProbe, VideoRateResult, OUTAGE_LIMIT};

use crate::config::{ConfigError, ScenarioConfig};
use crate::netmodel::NetError;
use std::fmt::Write as _;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("{0}")]
    Setup(String),
}

/// Event counters. Differences between two snapshots give the counts of an
/// interval.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Counters {
    /// Items sent from the gateway toward a radio node, forwarded ones again.
    pub dispatched: u64,
    pub delivered: u64,
    /// Air errors that were not recovered.
    pub lost: u64,
    /// Removed from radio buffers after the block or frame was decoded.
    pub purged: u64,
    /// Discarded at handover or on buffer overflow.
    pub dropped: u64,
    /// Past their deadline when reached by the scheduler.
    pub expired: u64,
    /// Taken out of a departed node and sent back to the gateway.
    pub forwarded: u64,
    /// Same packet or symbol delivered twice while still useful.
    pub duplicates: u64,
    /// Delivered after the block or session was already complete.
    pub post_decode: u64,
    pub backhaul_bytes: u64,
    pub handovers: u64,
    pub te_runs: u64,
    pub te_failures: u64,
    pub harq_retx: u64,
    pub stale_reports: u64,
    pub encoder_ops: u64,
    pub busy_ttis: u64,
}

impl Counters {
    fn minus(&self, o: &Counters) -> Counters {
        Counters {
            dispatched: self.dispatched - o.dispatched,
            delivered: self.delivered - o.delivered,
            lost: self.lost - o.lost,
            purged: self.purged - o.purged,
            dropped: self.dropped - o.dropped,
            expired: self.expired - o.expired,
            forwarded: self.forwarded - o.forwarded,
            duplicates: self.duplicates - o.duplicates,
            post_decode: self.post_decode - o.post_decode,
            backhaul_bytes: self.backhaul_bytes - o.backhaul_bytes,
            handovers: self.handovers - o.handovers,
            te_runs: self.te_runs - o.te_runs,
            te_failures: self.te_failures - o.te_failures,
            harq_retx: self.harq_retx - o.harq_retx,
            stale_reports: self.stale_reports - o.stale_reports,
            encoder_ops: self.encoder_ops - o.encoder_ops,
            busy_ttis: self.busy_ttis - o.busy_ttis,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionRecord {
    pub ue: usize,
    pub session: u32,
    pub start_s: f64,
    /// Completion time; `None` when the run ended first.
    pub end_s: Option<f64>,
    /// Video sessions only.
    pub outage: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub seed: u64,
    pub protocol: String,
    /// Sessions completed after the warm-up, per UE.
    pub completed_sessions: Vec<u32>,
    pub sessions: Vec<SessionRecord>,
    /// Counts after the warm-up.
    pub counters: Counters,
    /// Counts over the whole run.
    pub totals: Counters,
    /// Items still queued or travelling when the run ended.
    pub in_flight: u64,
    /// Repair redundancy `sent / K - 1` of every acknowledged block.
    pub redundancy: Vec<f64>,
    /// Outage fraction of every measured video session.
    pub video_outage: Vec<f64>,
}

impl Metrics {
    pub fn total_completed(&self) -> u64 {
        self.completed_sessions.iter().map(|&c| c as u64).sum()
    }

    pub fn jain(&self) -> Option<f64> {
        let v: Vec<f64> = self.completed_sessions.iter().map(|&c| c as f64).collect();
        jain_index(&v)
    }

    pub fn mean_redundancy(&self) -> Option<f64> {
        mean(&self.redundancy)
    }

    /// `redundancy` bucketed by 10 %, the last bucket open-ended.
    pub fn redundancy_histogram(&self) -> [u64; 6] {
        let mut h = [0; 6];
        for &r in &self.redundancy {
            h[((r * 10.0).floor().max(0.0) as usize).min(5)] += 1;
        }
        h
    }

    /// One row per session, then one summary row. See [`CSV_HEADER`].
    pub fn to_csv_rows(&self) -> String {
        let mut s = String::new();
        for r in &self.sessions {
            let _ = writeln!(
                s,
                "session,{},{},{},{},{:.3},{},{},,,,,,,,,,,,,,,",
                self.seed,
                self.protocol,
                r.ue,
                r.session,
                r.start_s,
                r.end_s.map(|e| format!("{e:.3}")).unwrap_or_default(),
                r.outage.map(|o| format!("{o:.4}")).unwrap_or_default(),
            );
        }
        let c = &self.counters;
        let _ = writeln!(
            s,
            "summary,{},{},,,,,,{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.seed,
            self.protocol,
            self.total_completed(),
            c.duplicates,
            c.backhaul_bytes,
            c.dispatched,
            c.delivered,
            c.lost,
            c.purged,
            c.dropped,
            c.expired,
            c.handovers,
            c.te_runs,
            c.harq_retx,
            c.encoder_ops,
            self.mean_redundancy().map(|r| format!("{r:.4}")).unwrap_or_default(),
            self.jain().map(|j| format!("{j:.4}")).unwrap_or_default(),
        );
        s
    }
}

pub const CSV_HEADER: &str = "row,seed,protocol,ue,session,start_s,end_s,outage,completed_sessions,duplicates,backhaul_bytes,dispatched,delivered,lost,purged,dropped,expired,handovers,te_runs,harq_retx,encoder_ops,mean_redundancy,jain";

pub fn metrics_csv(runs: &[Metrics]) -> String {
    let mut s = format!("{CSV_HEADER}\n");
    for m in runs {
        s.push_str(&m.to_csv_rows());
    }
    s
}

/// `(sum v)^2 / (n sum v^2)`; `None` when empty or all zero.
pub fn jain_index(values: &[f64]) -> Option<f64> {
    let sum: f64 = values.iter().sum();
    let sq: f64 = values.iter().map(|v| v * v).sum();
    if values.is_empty() || sq <= 0.0 {
        return None;
    }
    Some(sum * sum / (values.len() as f64 * sq))
}

pub fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

/// Simulates `cfg` with `seed`.
pub fn run(cfg: &ScenarioConfig, seed: u64) -> Result<Metrics, SimError> {
    cfg.validate()?;
    engine::World::new(cfg, seed)?.run()
}

/// Runs every job on up to `workers` threads; results come back in job order.
pub fn run_many(jobs: &[(ScenarioConfig, u64)], workers: usize) -> Vec<Result<Metrics, SimError>> {
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<Result<Metrics, SimError>>>> = Mutex::new(vec![None; jobs.len()]);
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, jobs.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some((cfg, seed)) = jobs.get(i) else { break };
                let r = run(cfg, *seed);
                slots.lock().expect("no panics while holding the lock")[i] = Some(r);
            });
        }
    });
    slots.into_inner().expect("threads joined").into_iter().map(|r| r.expect("every job ran")).collect()
}

/// Worker count from `DENSENET_WORKERS`, else the available parallelism.
pub fn default_workers() -> usize {
    std::env::var("DENSENET_WORKERS")
        .ok()
        .and_then(|v| v.parse().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}
