//! Scenario configuration: TOML parsing with preset expansion, validation
//! with field paths, and dotted-key overrides used by sweeps.

use crate::netmodel::{RadioParams, TopologyConfig};
use crate::protocols::{HandoverMode, HarqParams, SchedulerPolicy};
use serde::{Deserialize, Serialize};
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ProtocolName {
    #[serde(rename = "tcp_d_1path")]
    TcpD1Path,
    #[serde(rename = "tcp_d_multipath")]
    TcpDMultipath,
    #[serde(rename = "fc_mp")]
    FcMp,
    #[serde(rename = "fc_mc")]
    FcMc,
    #[serde(rename = "udp_1path")]
    Udp1Path,
    #[serde(rename = "fc_mp_video")]
    FcMpVideo,
    #[serde(rename = "od_fc")]
    OdFc,
}

impl ProtocolName {
    pub const ALL: [ProtocolName; 7] = [
        ProtocolName::TcpD1Path,
        ProtocolName::TcpDMultipath,
        ProtocolName::FcMp,
        ProtocolName::FcMc,
        ProtocolName::Udp1Path,
        ProtocolName::FcMpVideo,
        ProtocolName::OdFc,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolName::TcpD1Path => "tcp_d_1path",
            ProtocolName::TcpDMultipath => "tcp_d_multipath",
            ProtocolName::FcMp => "fc_mp",
            ProtocolName::FcMc => "fc_mc",
            ProtocolName::Udp1Path => "udp_1path",
            ProtocolName::FcMpVideo => "fc_mp_video",
            ProtocolName::OdFc => "od_fc",
        }
    }

    pub fn default_paths(self) -> usize {
        match self {
            ProtocolName::TcpD1Path | ProtocolName::Udp1Path => 1,
            _ => 4,
        }
    }

    pub fn is_video(self) -> bool {
        matches!(self, ProtocolName::Udp1Path | ProtocolName::FcMpVideo)
    }
}

impl fmt::Display for ProtocolName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrafficKind {
    BestEffort,
    Video,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Intensity {
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Placement {
    Gateway,
    Optimized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", remote = "HandoverMode")]
enum HandoverModeDef {
    Drop,
    Forward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", remote = "SchedulerPolicy")]
enum SchedulerPolicyDef {
    MaxRate,
    ProportionalFair,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MobilityConfig {
    pub ues: usize,
    pub speed_kmh: f64,
    /// Length of the lanes, centred in the deployment area.
    pub strip_length_m: f64,
    /// Serving-set size; 0 picks the protocol's path count.
    pub serving_cells: usize,
}

impl Default for MobilityConfig {
    fn default() -> Self {
        Self { ues: 30, speed_kmh: 30.0, strip_length_m: 200.0, serving_cells: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrafficConfig {
    pub class: TrafficKind,
    pub intensity: Intensity,
    pub off_time_low_s: f64,
    pub off_time_high_s: f64,
    pub file_bits: f64,
    pub video_rate_bps: f64,
    pub fps: f64,
    pub gop: usize,
    pub i_to_p_ratio: f64,
    pub frame_deadline_s: f64,
    pub video_session_s: f64,
    pub fixed_rate_ratio: f64,
    pub video_symbol_bytes: usize,
    pub video_probe_ceiling_bps: f64,
    pub video_probe_step_bps: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            class: TrafficKind::BestEffort,
            intensity: Intensity::High,
            off_time_low_s: 10.0,
            off_time_high_s: 1.0,
            file_bits: 20e6,
            video_rate_bps: 450e3,
            fps: 30.0,
            gop: 30,
            i_to_p_ratio: 5.0,
            frame_deadline_s: 0.1,
            video_session_s: 10.0,
            fixed_rate_ratio: 1.3,
            video_symbol_bytes: 500,
            video_probe_ceiling_bps: 20e6,
            video_probe_step_bps: 50e3,
        }
    }
}

impl TrafficConfig {
    pub fn off_time_mean_s(&self) -> f64 {
        match self.intensity {
            Intensity::Low => self.off_time_low_s,
            Intensity::High => self.off_time_high_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolConfig {
    pub name: ProtocolName,
    #[serde(with = "HandoverModeDef")]
    pub handover: HandoverMode,
    #[serde(with = "SchedulerPolicyDef")]
    pub scheduler: SchedulerPolicy,
    pub feedback: bool,
    pub feedback_beta: f64,
    pub feedback_high_s: f64,
    pub feedback_low_s: f64,
    pub symbol_bytes: usize,
    pub max_k: usize,
    pub tcp_window: usize,
    pub be_ceiling_bps: f64,
    pub fc_mc_rate_bps: f64,
    pub control_delay_s: f64,
    pub fc_small_block_threshold: usize,
    /// Smallest virtual block for on-demand coding; padding fills the rest.
    pub od_fc_min_block: usize,
    /// Transmit buffer per UE at each radio node; arrivals beyond it are dropped.
    pub radio_buffer_bytes: usize,
    pub te_on_handover: bool,
    pub placement: Placement,
    pub harq: HarqParams,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            name: ProtocolName::FcMp,
            handover: HandoverMode::Drop,
            scheduler: SchedulerPolicy::MaxRate,
            feedback: false,
            feedback_beta: 0.5,
            feedback_high_s: 0.3,
            feedback_low_s: 0.1,
            symbol_bytes: 1000,
            max_k: 1000,
            tcp_window: 64,
            be_ceiling_bps: 20e6,
            fc_mc_rate_bps: 20e6,
            control_delay_s: 0.02,
            fc_small_block_threshold: 16,
            od_fc_min_block: 8,
            radio_buffer_bytes: 1_000_000,
            te_on_handover: true,
            placement: Placement::Gateway,
            harq: HarqParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub duration_s: f64,
    pub warmup_s: f64,
    pub seeds: Vec<u64>,
    pub te_period_s: f64,
    pub report_period_s: f64,
    pub mobility_period_s: f64,
    pub tti_s: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            duration_s: 120.0,
            warmup_s: 5.0,
            seeds: vec![1, 2, 3, 4, 5],
            te_period_s: 0.5,
            report_period_s: 0.1,
            mobility_period_s: 0.1,
            tti_s: 0.001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub topology: TopologyConfig,
    pub radio: RadioParams,
    pub mobility: MobilityConfig,
    pub traffic: TrafficConfig,
    pub protocol: ProtocolConfig,
    pub run: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown preset {0:?}")]
    UnknownPreset(String),
    #[error("invalid config: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<FieldError>),
}

impl ConfigError {
    pub fn fields(&self) -> Vec<FieldError> {
        match self {
            ConfigError::Invalid(v) => v.clone(),
            ConfigError::UnknownPreset(p) => vec![FieldError { path: "preset".into(), message: format!("unknown preset {p:?}") }],
            ConfigError::Parse(m) => vec![FieldError { path: String::new(), message: m.clone() }],
        }
    }
}

pub const PRESETS: [&str; 5] = ["paper_fig4_low", "paper_fig4_high", "paper_fig5", "paper_fig6", "paper_table1"];

/// Switches the deployment to the 1 km² macro layout.
pub fn macro_network(cfg: &mut ScenarioConfig) {
    cfg.topology.area_km2 = 1.0;
    cfg.radio.tx_power_dbm = 46.0;
    cfg.radio.exponent = 3.5;
}

/// Switches the deployment to the 0.04 km² dense layout.
pub fn dense_network(cfg: &mut ScenarioConfig) {
    let d = ScenarioConfig::default();
    cfg.topology.area_km2 = d.topology.area_km2;
    cfg.radio.tx_power_dbm = d.radio.tx_power_dbm;
    cfg.radio.exponent = d.radio.exponent;
}

/// Reuse factor of the figure presets. Three static frequency groups stand
/// in for the radio coordination that the best-effort and video profiles
/// turn on under load; the plain default stays at reuse 1.
pub const PRESET_REUSE: usize = 3;

pub fn preset(name: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut c = ScenarioConfig::default();
    c.radio.reuse = PRESET_REUSE;
    match name {
        "paper_fig4_low" => c.traffic.intensity = Intensity::Low,
        "paper_fig4_high" => {}
        "paper_fig5" => c.protocol.handover = HandoverMode::Forward,
        "paper_fig6" => {}
        "paper_table1" => {
            c.traffic.class = TrafficKind::Video;
            c.protocol.name = ProtocolName::FcMpVideo;
        }
        other => return Err(ConfigError::UnknownPreset(other.to_string())),
    }
    Ok(c)
}

impl ScenarioConfig {
    pub fn serving_cells(&self) -> usize {
        match self.mobility.serving_cells {
            0 => self.protocol.name.default_paths(),
            n => n,
        }
    }

    /// Every violated range, with its dotted field path.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut errs = Vec::new();
        let mut check = |ok: bool, path: &str, msg: &str| {
            if !ok {
                errs.push(FieldError { path: path.to_string(), message: msg.to_string() });
            }
        };
        let pos = |x: f64| x.is_finite() && x > 0.0;
        let nonneg = |x: f64| x.is_finite() && x >= 0.0;
        let t = &self.topology;
        check(t.radio_nodes >= 1, "topology.radio_nodes", "must be >= 1");
        check(t.routers >= 1, "topology.routers", "must be >= 1");
        check(
            t.gateway_routers >= 1 && t.gateway_routers <= t.routers,
            "topology.gateway_routers",
            "must be in 1..=topology.routers",
        );
        check(pos(t.area_km2), "topology.area_km2", "must be > 0");
        check(pos(t.access_capacity_bps), "topology.access_capacity_bps", "must be > 0");
        check(pos(t.core_capacity_bps), "topology.core_capacity_bps", "must be > 0");
        check(pos(t.gateway_capacity_bps), "topology.gateway_capacity_bps", "must be > 0");
        check(nonneg(t.hop_latency_s) && t.hop_latency_s <= 1.0, "topology.hop_latency_s", "must be in [0, 1]");

        let r = &self.radio;
        check(r.tx_power_dbm.is_finite() && (-30.0..=70.0).contains(&r.tx_power_dbm), "radio.tx_power_dbm", "must be in [-30, 70]");
        check(pos(r.bandwidth_hz), "radio.bandwidth_hz", "must be > 0");
        check(r.pl0_db.is_finite(), "radio.pl0_db", "must be finite");
        check(r.exponent.is_finite() && (1.0..=6.0).contains(&r.exponent), "radio.exponent", "must be in [1, 6]");
        check(pos(r.d_min_m), "radio.d_min_m", "must be > 0");
        check(r.noise_density_dbm_hz.is_finite(), "radio.noise_density_dbm_hz", "must be finite");
        check(nonneg(r.noise_figure_db), "radio.noise_figure_db", "must be >= 0");
        check(pos(r.se_cap), "radio.se_cap", "must be > 0");
        check(pos(r.mimo_gain), "radio.mimo_gain", "must be > 0");
        check(r.reuse >= 1, "radio.reuse", "must be >= 1");

        let m = &self.mobility;
        check(m.ues <= 10_000, "mobility.ues", "must be in 0..=10000");
        check(nonneg(m.speed_kmh) && m.speed_kmh <= 500.0, "mobility.speed", "speed_kmh must be in [0, 500]");
        check(pos(m.strip_length_m), "mobility.strip_length_m", "must be > 0");
        check(m.serving_cells <= 16, "mobility.serving_cells", "must be in 0..=16");

        let tr = &self.traffic;
        check(pos(tr.off_time_low_s), "traffic.off_time_low_s", "must be > 0");
        check(pos(tr.off_time_high_s), "traffic.off_time_high_s", "must be > 0");
        check(pos(tr.file_bits), "traffic.file_bits", "must be > 0");
        check(pos(tr.video_rate_bps), "traffic.video_rate_bps", "must be > 0");
        check(pos(tr.fps) && tr.fps <= 240.0, "traffic.fps", "must be in (0, 240]");
        check(tr.gop >= 1, "traffic.gop", "must be >= 1");
        check(tr.i_to_p_ratio.is_finite() && tr.i_to_p_ratio >= 1.0, "traffic.i_to_p_ratio", "must be >= 1");
        check(pos(tr.frame_deadline_s), "traffic.frame_deadline_s", "must be > 0");
        check(pos(tr.video_session_s), "traffic.video_session_s", "must be > 0");
        check(tr.fixed_rate_ratio.is_finite() && tr.fixed_rate_ratio >= 1.0, "traffic.fixed_rate_ratio", "must be >= 1");
        check(tr.video_symbol_bytes >= 1, "traffic.video_symbol_bytes", "must be >= 1");
        check(pos(tr.video_probe_ceiling_bps), "traffic.video_probe_ceiling_bps", "must be > 0");
        check(pos(tr.video_probe_step_bps), "traffic.video_probe_step_bps", "must be > 0");

        let p = &self.protocol;
        check(p.feedback_beta > 0.0 && p.feedback_beta < 1.0, "protocol.feedback_beta", "must be in (0, 1)");
        check(pos(p.feedback_high_s), "protocol.feedback_high_s", "must be > 0");
        check(
            nonneg(p.feedback_low_s) && p.feedback_low_s < p.feedback_high_s,
            "protocol.feedback_low_s",
            "must be in [0, protocol.feedback_high_s)",
        );
        check(p.symbol_bytes >= 1, "protocol.symbol_bytes", "must be >= 1");
        check(p.max_k >= 1, "protocol.max_k", "must be >= 1");
        check(p.tcp_window >= 1, "protocol.tcp_window", "must be >= 1");
        check(pos(p.be_ceiling_bps), "protocol.be_ceiling_bps", "must be > 0");
        check(pos(p.fc_mc_rate_bps), "protocol.fc_mc_rate_bps", "must be > 0");
        check(nonneg(p.control_delay_s), "protocol.control_delay_s", "must be >= 0");
        check(p.od_fc_min_block >= 1, "protocol.od_fc_min_block", "must be >= 1");
        check(
            p.radio_buffer_bytes >= p.symbol_bytes.max(tr.video_symbol_bytes),
            "protocol.radio_buffer_bytes",
            "must hold at least one symbol",
        );
        let h = &p.harq;
        check((0.0..=1.0).contains(&h.p_stale), "protocol.harq.p_stale", "must be in [0, 1]");
        check((0.0..=1.0).contains(&h.p_fresh), "protocol.harq.p_fresh", "must be in [0, 1]");
        check(nonneg(h.margin_db), "protocol.harq.margin_db", "must be >= 0");
        check(pos(h.spacing_s), "protocol.harq.spacing_s", "must be > 0");
        check(h.max_retx <= 16, "protocol.harq.max_retx", "must be in 0..=16");
        let video_proto = p.name.is_video();
        check(
            video_proto == (tr.class == TrafficKind::Video),
            "protocol.name",
            "udp_1path and fc_mp_video need traffic.class = video; the others need best_effort",
        );

        let run = &self.run;
        check(pos(run.tti_s) && run.tti_s <= 0.01, "run.tti_s", "must be in (0, 0.01]");
        check(pos(run.duration_s), "run.duration_s", "must be > 0");
        check(nonneg(run.warmup_s) && run.warmup_s < run.duration_s, "run.warmup_s", "must be in [0, run.duration_s)");
        check(!run.seeds.is_empty(), "run.seeds", "must not be empty");
        check(pos(run.te_period_s), "run.te_period_s", "must be > 0");
        check(pos(run.report_period_s), "run.report_period_s", "must be > 0");
        check(pos(run.mobility_period_s), "run.mobility_period_s", "must be > 0");
        let ticks = |x: f64| (x / run.tti_s - (x / run.tti_s).round()).abs() < 1e-6;
        for (x, path) in [
            (run.te_period_s, "run.te_period_s"),
            (run.report_period_s, "run.report_period_s"),
            (run.mobility_period_s, "run.mobility_period_s"),
        ] {
            check(ticks(x), path, "must be a whole number of TTIs");
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(ConfigError::Invalid(errs))
        }
    }

    /// Effective configuration as TOML; parses back to an equal value.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Sets one dotted key (`protocol.name`, `mobility.speed_kmh`, ...) from
    /// its textual value. The key `network` takes `dense` or `macro`.
    pub fn with_override(&self, key: &str, raw: &str) -> Result<ScenarioConfig, ConfigError> {
        self.with_overrides(&[(key, raw)])
    }

    /// Applies the overrides in order and validates the result once, so
    /// keys that constrain each other can change together.
    pub fn with_overrides(&self, overrides: &[(&str, &str)]) -> Result<ScenarioConfig, ConfigError> {
        let mut cfg = self.clone();
        for (k, v) in overrides {
            cfg = cfg.set_raw(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set_raw(&self, key: &str, raw: &str) -> Result<ScenarioConfig, ConfigError> {
        if key == "network" {
            let mut c = self.clone();
            match raw {
                "dense" => dense_network(&mut c),
                "macro" => macro_network(&mut c),
                _ => {
                    return Err(ConfigError::Invalid(vec![FieldError {
                        path: "network".into(),
                        message: "must be dense or macro".into(),
                    }]))
                }
            }
            return Ok(c);
        }
        let mut table = toml::Table::try_from(self).map_err(|e| ConfigError::Parse(e.to_string()))?;
        let parts: Vec<&str> = key.split('.').collect();
        let (last, parents) = parts.split_last().expect("split yields one part");
        let mut cur = &mut table;
        for p in parents {
            cur = cur
                .get_mut(*p)
                .and_then(toml::Value::as_table_mut)
                .ok_or_else(|| unknown_key(key))?;
        }
        if !cur.contains_key(*last) {
            return Err(unknown_key(key));
        }
        cur.insert(last.to_string(), parse_value(raw));
        let cfg: ScenarioConfig = toml::Value::Table(table).try_into().map_err(|e: toml::de::Error| {
            ConfigError::Invalid(vec![FieldError { path: key.to_string(), message: e.message().to_string() }])
        })?;
        Ok(cfg)
    }
}

fn unknown_key(key: &str) -> ConfigError {
    ConfigError::Invalid(vec![FieldError { path: key.to_string(), message: "unknown key".into() }])
}

/// A bare word becomes a string; anything TOML can read as a value is kept.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Parses a scenario file. A top-level `preset` key starts from that preset;
/// the remaining keys override it. Unknown keys are rejected.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ConfigError> {
    let mut user: toml::Table = toml::from_str(text).map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    let base = match user.remove("preset") {
        Some(toml::Value::String(name)) => preset(&name)?,
        Some(_) => {
            return Err(ConfigError::Invalid(vec![FieldError { path: "preset".into(), message: "must be a string".into() }]))
        }
        None => ScenarioConfig::default(),
    };
    let mut table = toml::Table::try_from(&base).map_err(|e| ConfigError::Parse(e.to_string()))?;
    merge(&mut table, user);
    let cfg: ScenarioConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Parse(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}
