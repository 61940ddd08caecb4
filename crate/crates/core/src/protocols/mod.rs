//! Software-defined protocol layer: per-class feature profiles, the TCP-D
//! sender and receiver, HARQ, and handover execution.

mod handover;
mod harq;
mod tcpd;

pub use handover::{handover_execute, HandoverAction, HandoverMode};
pub use harq::{harq_error_probability, harq_transmit, HarqOutcome, HarqParams, HarqProcess};
pub use tcpd::{ArqState, TcpDParams, TcpReceiver};

use std::fmt::Write as _;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SchedulerPolicy {
    MaxRate,
    ProportionalFair,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SdpClass {
    BestEffort,
    VideoI,
    VideoP,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SdpProfile {
    pub te: bool,
    pub radio_coordination: bool,
    pub multipath: bool,
    pub harq: bool,
    pub fc: bool,
    pub fixed_rate_fc: bool,
    pub handover_forwarding: bool,
    pub scheduler: SchedulerPolicy,
    /// Frames with fewer symbols than this are sent uncoded.
    pub fc_small_block_threshold: usize,
}

impl SdpProfile {
    pub fn is_consistent(&self) -> bool {
        (!self.fixed_rate_fc || self.fc) && (!self.multipath || self.te)
    }
}

/// Inputs beyond the traffic class that the selection depends on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpContext {
    pub high_load: bool,
    /// Size of the unit to protect (frame or block) in symbols.
    pub unit_symbols: usize,
    pub fc_small_block_threshold: usize,
}

impl Default for SdpContext {
    fn default() -> Self {
        Self { high_load: false, unit_symbols: usize::MAX, fc_small_block_threshold: 16 }
    }
}

pub fn sdp_select(class: SdpClass, ctx: &SdpContext) -> SdpProfile {
    let base = SdpProfile {
        te: true,
        radio_coordination: false,
        multipath: false,
        harq: false,
        fc: false,
        fixed_rate_fc: false,
        handover_forwarding: false,
        scheduler: SchedulerPolicy::MaxRate,
        fc_small_block_threshold: ctx.fc_small_block_threshold,
    };
    match class {
        SdpClass::BestEffort => SdpProfile { radio_coordination: ctx.high_load, multipath: true, fc: true, ..base },
        SdpClass::VideoI => SdpProfile {
            radio_coordination: true,
            multipath: true,
            fc: true,
            fixed_rate_fc: true,
            handover_forwarding: true,
            ..base
        },
        SdpClass::VideoP => {
            let fc = ctx.unit_symbols >= ctx.fc_small_block_threshold;
            SdpProfile {
                radio_coordination: true,
                multipath: fc,
                harq: true,
                fc,
                fixed_rate_fc: fc,
                handover_forwarding: !fc,
                ..base
            }
        }
    }
}

/// Feature matrix for best effort, I-frames and small P-frames.
pub fn profile_table(ctx: &SdpContext) -> String {
    let small = SdpContext { unit_symbols: 0, ..*ctx };
    let cols = [
        ("best effort", sdp_select(SdpClass::BestEffort, ctx)),
        ("I-frame", sdp_select(SdpClass::VideoI, ctx)),
        ("P-frame", sdp_select(SdpClass::VideoP, &small)),
    ];
    let mark = |b: bool| if b { "yes" } else { "-" };
    let rows: [(&str, fn(&SdpProfile) -> bool); 7] = [
        ("traffic engineering", |p| p.te),
        ("radio coordination", |p| p.radio_coordination),
        ("multipath", |p| p.multipath),
        ("HARQ", |p| p.harq),
        ("fountain coding", |p| p.fc),
        ("fixed-rate FC", |p| p.fixed_rate_fc),
        ("handover forwarding", |p| p.handover_forwarding),
    ];
    let mut s = String::from("| function | best effort | I-frame | P-frame |\n|---|---|---|---|\n");
    for (name, get) in rows {
        let _ = writeln!(s, "| {name} | {} | {} | {} |", mark(get(&cols[0].1)), mark(get(&cols[1].1)), mark(get(&cols[2].1)));
    }
    let sched = |p: &SdpProfile| match p.scheduler {
        SchedulerPolicy::MaxRate => "max-rate",
        SchedulerPolicy::ProportionalFair => "proportional fair",
    };
    let _ = writeln!(s, "| scheduler | {} | {} | {} |", sched(&cols[0].1), sched(&cols[1].1), sched(&cols[2].1));
    s
}
