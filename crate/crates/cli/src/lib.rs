//! Parameter sweeps over scenario configurations.
//!
//! A sweep is the cartesian product of its axes, each cell run once per seed
//! in `run.seeds`. Every (config, seed) pair is keyed by a SHA-256 of the
//! effective config and the seed; results are appended to `results.csv` and
//! pairs already present there are not run again.

use densenet::config::{ConfigError, FieldError, ScenarioConfig};
use densenet::sim::{self, mean, Metrics};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<String>,
}

impl Axis {
    /// Parses `key=v1,v2,...`.
    pub fn parse(s: &str) -> Result<Axis, ConfigError> {
        let bad = |m: &str| ConfigError::Invalid(vec![FieldError { path: "axis".into(), message: format!("{m}: {s:?}") }]);
        let (key, vals) = s.split_once('=').ok_or_else(|| bad("expected key=v1,v2"))?;
        let values: Vec<String> = vals.split(',').map(str::trim).filter(|v| !v.is_empty()).map(String::from).collect();
        if key.trim().is_empty() || values.is_empty() {
            return Err(bad("empty key or value list"));
        }
        Ok(Axis { key: key.trim().to_string(), values })
    }
}

/// One point of the product: the axis values and the resulting config.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub values: Vec<String>,
    pub config: ScenarioConfig,
}

/// Expands the axes over `base`, first axis outermost. Every cell is
/// validated with all its axis values applied, before anything runs.
pub fn expand(base: &ScenarioConfig, axes: &[Axis]) -> Result<Vec<Cell>, ConfigError> {
    let mut points: Vec<Vec<String>> = vec![Vec::new()];
    for axis in axes {
        points = points
            .iter()
            .flat_map(|p| {
                axis.values.iter().map(move |v| {
                    let mut p = p.clone();
                    p.push(v.clone());
                    p
                })
            })
            .collect();
    }
    points
        .into_iter()
        .map(|values| {
            let pairs: Vec<(&str, &str)> = axes.iter().zip(&values).map(|(a, v)| (a.key.as_str(), v.as_str())).collect();
            let config = base.with_overrides(&pairs)?;
            Ok(Cell { values, config })
        })
        .collect()
}

/// Hex SHA-256 of the effective config and the seed, truncated to 16 digits.
pub fn run_key(cfg: &ScenarioConfig, seed: u64) -> String {
    let mut h = Sha256::new();
    h.update(cfg.to_toml().as_bytes());
    h.update(b"\nseed=");
    h.update(seed.to_string().as_bytes());
    h.finalize().iter().take(8).fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Summary of one (config, seed) run as stored in `results.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub key: String,
    pub cell: String,
    pub seed: u64,
    pub protocol: String,
    pub completed: f64,
    pub duplicates: f64,
    pub backhaul_bytes: f64,
    pub mean_redundancy: Option<f64>,
    pub p99_outage: Option<f64>,
    pub jain: Option<f64>,
    pub error: Option<String>,
}

pub const RESULTS_HEADER: &str =
    "key,cell,seed,protocol,completed,duplicates,backhaul_bytes,mean_redundancy,p99_outage,jain,error";

fn opt(v: Option<f64>) -> String {
    // shortest text that parses back to the same value
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunRecord {
    fn from_metrics(key: String, cell: String, m: &Metrics) -> Self {
        RunRecord {
            key,
            cell,
            seed: m.seed,
            protocol: m.protocol.clone(),
            completed: m.total_completed() as f64,
            duplicates: m.counters.duplicates as f64,
            backhaul_bytes: m.counters.backhaul_bytes as f64,
            mean_redundancy: m.mean_redundancy(),
            p99_outage: sim::percentile(&m.video_outage, 0.99),
            jain: m.jain(),
            error: None,
        }
    }

    fn to_row(&self) -> String {
        // error text is the last field; commas in it are replaced
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.key,
            self.cell,
            self.seed,
            self.protocol,
            self.completed,
            self.duplicates,
            self.backhaul_bytes,
            opt(self.mean_redundancy),
            opt(self.p99_outage),
            opt(self.jain),
            self.error.as_deref().unwrap_or("").replace([',', '\n'], ";"),
        )
    }

    fn from_row(line: &str) -> Option<Self> {
        let f: Vec<&str> = line.splitn(11, ',').collect();
        if f.len() != 11 {
            return None;
        }
        let num = |s: &str| s.parse::<f64>().ok();
        Some(RunRecord {
            key: f[0].to_string(),
            cell: f[1].to_string(),
            seed: f[2].parse().ok()?,
            protocol: f[3].to_string(),
            completed: num(f[4])?,
            duplicates: num(f[5])?,
            backhaul_bytes: num(f[6])?,
            mean_redundancy: num(f[7]),
            p99_outage: num(f[8]),
            jain: num(f[9]),
            error: (!f[10].is_empty()).then(|| f[10].to_string()),
        })
    }
}

/// Aggregate of one cell over its seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct CellSummary {
    pub values: Vec<String>,
    pub protocol: String,
    pub runs: usize,
    pub failed: usize,
    pub completed_mean: f64,
    pub completed_sd: f64,
    /// `completed_mean / baseline - 1` against the same cell with the
    /// baseline protocol.
    pub gain: Option<f64>,
    pub duplicates_mean: f64,
    pub redundancy_mean: Option<f64>,
    pub p99_outage_mean: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub axes: Vec<String>,
    pub baseline: Option<String>,
    pub cells: Vec<CellSummary>,
    pub records: Vec<RunRecord>,
    /// Runs actually simulated; the rest came from earlier results.
    pub executed: usize,
}

/// Sample standard deviation; 0 for fewer than two values.
pub fn stddev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn load_results(path: &Path) -> HashMap<String, RunRecord> {
    let Ok(text) = fs::read_to_string(path) else { return HashMap::new() };
    text.lines().skip(1).filter_map(RunRecord::from_row).map(|r| (r.key.clone(), r)).collect()
}

/// Runs every cell and seed not already in `out_dir/results.csv`, appends
/// the new results there and aggregates. Without `out_dir` nothing is
/// cached. A failed run is recorded with its error and the sweep goes on.
pub fn run_sweep(
    base: &ScenarioConfig,
    axes: &[Axis],
    baseline: Option<&str>,
    workers: usize,
    out_dir: Option<&Path>,
) -> Result<SweepTable, SweepError> {
    let cells = expand(base, axes)?;
    let results_path = out_dir.map(|d| d.join("results.csv"));
    let mut known = results_path.as_deref().map(load_results).unwrap_or_default();

    let mut jobs = Vec::new();
    let mut job_meta = Vec::new();
    let mut order = Vec::new();
    for c in &cells {
        let label = c.values.join(";");
        for &seed in &c.config.run.seeds {
            let key = run_key(&c.config, seed);
            order.push(key.clone());
            if !known.contains_key(&key) && !job_meta.iter().any(|(k, _): &(String, String)| *k == key) {
                jobs.push((c.config.clone(), seed));
                job_meta.push((key, label.clone()));
            }
        }
    }
    let results = sim::run_many(&jobs, workers);
    let mut fresh = Vec::with_capacity(results.len());
    for (((cfg, seed), (key, label)), r) in jobs.iter().zip(job_meta).zip(results) {
        fresh.push(match r {
            Ok(m) => RunRecord::from_metrics(key, label, &m),
            Err(e) => RunRecord {
                key,
                cell: label,
                seed: *seed,
                protocol: cfg.protocol.name.as_str().to_string(),
                completed: 0.0,
                duplicates: 0.0,
                backhaul_bytes: 0.0,
                mean_redundancy: None,
                p99_outage: None,
                jain: None,
                error: Some(e.to_string()),
            },
        });
    }
    if let (Some(dir), Some(path)) = (out_dir, results_path.as_deref()) {
        fs::create_dir_all(dir)?;
        let new_file = !path.exists();
        let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
        if new_file {
            writeln!(f, "{RESULTS_HEADER}")?;
        }
        for r in &fresh {
            writeln!(f, "{}", r.to_row())?;
        }
    }
    let executed = fresh.len();
    for r in fresh {
        known.insert(r.key.clone(), r);
    }
    let records: Vec<RunRecord> = order.iter().filter_map(|k| known.get(k).cloned()).collect();

    let mut summaries: Vec<CellSummary> = Vec::with_capacity(cells.len());
    for c in &cells {
        let keys: Vec<String> = c.config.run.seeds.iter().map(|&s| run_key(&c.config, s)).collect();
        let rs: Vec<&RunRecord> = keys.iter().filter_map(|k| known.get(k)).collect();
        let ok: Vec<&RunRecord> = rs.iter().copied().filter(|r| r.error.is_none()).collect();
        let completed: Vec<f64> = ok.iter().map(|r| r.completed).collect();
        let red: Vec<f64> = ok.iter().filter_map(|r| r.mean_redundancy).collect();
        let out: Vec<f64> = ok.iter().filter_map(|r| r.p99_outage).collect();
        summaries.push(CellSummary {
            values: c.values.clone(),
            protocol: c.config.protocol.name.as_str().to_string(),
            runs: rs.len(),
            failed: rs.len() - ok.len(),
            completed_mean: mean(&completed).unwrap_or(0.0),
            completed_sd: stddev(&completed),
            gain: None,
            duplicates_mean: mean(&ok.iter().map(|r| r.duplicates).collect::<Vec<_>>()).unwrap_or(0.0),
            redundancy_mean: mean(&red),
            p99_outage_mean: mean(&out),
        });
    }
    if let Some(b) = baseline {
        // the baseline of a cell is the cell with the same values on every
        // axis other than the protocol
        let pidx = axes.iter().position(|a| a.key == "protocol.name");
        let strip = |v: &[String]| -> Vec<String> {
            v.iter().enumerate().filter(|(i, _)| Some(*i) != pidx).map(|(_, s)| s.clone()).collect()
        };
        let base_means: Vec<(Vec<String>, f64)> = summaries
            .iter()
            .filter(|s| s.protocol == b && s.runs > s.failed)
            .map(|s| (strip(&s.values), s.completed_mean))
            .collect();
        for s in &mut summaries {
            let key = strip(&s.values);
            if let Some((_, m)) = base_means.iter().find(|(k, _)| *k == key) {
                if *m > 0.0 && s.runs > s.failed {
                    s.gain = Some(s.completed_mean / m - 1.0);
                }
            }
        }
    }
    Ok(SweepTable {
        axes: axes.iter().map(|a| a.key.clone()).collect(),
        baseline: baseline.map(String::from),
        cells: summaries,
        records,
        executed,
    })
}

#[derive(Debug, Error)]
pub enum SweepError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("writing results: {0}")]
    Io(#[from] std::io::Error),
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_parsing() {
        let a = Axis::parse(" mobility.speed_kmh = 3, 30 ,120").unwrap();
        assert_eq!(a.key, "mobility.speed_kmh");
        assert_eq!(a.values, ["3", "30", "120"]);
        assert!(Axis::parse("=1,2").is_err());
        assert!(Axis::parse("k=").is_err());
    }

    #[test]
    fn sample_stddev() {
        assert_eq!(stddev(&[5.0]), 0.0);
        assert!((stddev(&[2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]) - 2.138_089_935).abs() < 1e-9);
    }

    #[test]
    fn keys_follow_config_and_seed() {
        let c = ScenarioConfig::default();
        let k = run_key(&c, 1);
        assert_eq!(k.len(), 16);
        assert_eq!(k, run_key(&c.clone(), 1));
        assert_ne!(k, run_key(&c, 2));
        assert_ne!(k, run_key(&c.with_override("mobility.ues", "31").unwrap(), 1));
    }

    #[test]
    fn record_round_trip() {
        let r = RunRecord {
            key: "00ff".into(),
            cell: "fc_mp;30".into(),
            seed: 4,
            protocol: "fc_mp".into(),
            completed: 12.0,
            duplicates: 3.0,
            backhaul_bytes: 1e9,
            mean_redundancy: Some(0.1 + 0.2),
            p99_outage: None,
            jain: Some(0.97),
            error: None,
        };
        assert_eq!(RunRecord::from_row(&r.to_row()), Some(r.clone()));
        let failed = RunRecord { error: Some("bad, very bad\nindeed".into()), ..r };
        let back = RunRecord::from_row(&failed.to_row()).unwrap();
        assert_eq!(back.error.as_deref(), Some("bad; very bad;indeed"));
    }
}
