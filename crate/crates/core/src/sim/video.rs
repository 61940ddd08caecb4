use super::{run_many, SimError};
use crate::config::ScenarioConfig;

/// Outage bound on the 99th percentile of sessions.
pub const OUTAGE_LIMIT: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct VideoProbe {
    pub rate_bps: f64,
    /// Nearest-rank 99th percentile of session outage over all seeds;
    /// `None` when no session was measured.
    pub p99_outage: Option<f64>,
    pub sessions: usize,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VideoRateResult {
    /// Highest probed rate that passed; 0 when even the lowest failed.
    pub rate_bps: f64,
    pub probes: Vec<VideoProbe>,
    /// Probe pairs where a higher rate passed and a lower one failed.
    pub monotonicity_violations: usize,
}

/// Nearest-rank percentile, `q` in (0, 1].
pub fn percentile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = ((q * v.len() as f64).ceil() as usize).clamp(1, v.len());
    Some(v[rank - 1])
}

fn probe(base: &ScenarioConfig, rate: f64, seeds: &[u64], workers: usize) -> Result<VideoProbe, SimError> {
    let mut cfg = base.clone();
    cfg.traffic.video_rate_bps = rate;
    let jobs: Vec<(ScenarioConfig, u64)> = seeds.iter().map(|&s| (cfg.clone(), s)).collect();
    let mut outage = Vec::new();
    for r in run_many(&jobs, workers) {
        outage.extend(r?.video_outage);
    }
    let p99 = percentile(&outage, 0.99);
    Ok(VideoProbe { rate_bps: rate, p99_outage: p99, sessions: outage.len(), pass: p99.is_some_and(|p| p < OUTAGE_LIMIT) })
}

/// Binary search for the highest multiple of the probe step, up to the probe
/// ceiling, whose 99th-percentile outage stays below 5 %.
pub fn supported_video_rate(base: &ScenarioConfig, seeds: &[u64], workers: usize) -> Result<VideoRateResult, SimError> {
    base.validate()?;
    let step = base.traffic.video_probe_step_bps;
    let top = (base.traffic.video_probe_ceiling_bps / step).floor() as u64;
    let mut probes = Vec::new();
    let mut run = |m: u64| -> Result<bool, SimError> {
        let p = probe(base, m as f64 * step, seeds, workers)?;
        let pass = p.pass;
        probes.push(p);
        Ok(pass)
    };
    let best = if top == 0 || !run(1)? {
        0
    } else if run(top)? {
        top
    } else {
        // invariant: lo passes, hi fails
        let (mut lo, mut hi) = (1, top);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if run(mid)? {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };
    let monotonicity_violations = probes
        .iter()
        .map(|a| probes.iter().filter(|b| b.rate_bps > a.rate_bps && b.pass && !a.pass).count())
        .sum();
    Ok(VideoRateResult { rate_bps: best as f64 * step, probes, monotonicity_violations })
}
