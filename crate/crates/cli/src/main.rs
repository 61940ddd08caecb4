use clap::{Parser, Subcommand};
use densenet::config::{parse_config, preset, ConfigError, FieldError, ScenarioConfig, PRESETS};
use densenet::sim::{self, default_workers, metrics_csv};
use densenet_cli::{run_sweep, Axis, SweepError, SweepTable};
use serde_json::json;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Simulator for mobile users in dense radio access networks.
///
/// A config argument is a TOML file, or the name of a built-in preset.
/// Worker threads default to DENSENET_WORKERS, else the number of CPUs.
#[derive(Parser)]
#[command(name = "densenet", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a scenario once per seed and write the metrics CSV.
    Run {
        config: String,
        /// Override a config key, e.g. `--set protocol.name=fc_mp`.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Directory for config.toml and metrics.csv; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the cartesian product of the axes over a base scenario.
    Sweep {
        config: String,
        /// `key=v1,v2,...`; repeat for more axes.
        #[arg(long = "axis", value_name = "KEY=V1,V2", required = true)]
        axis: Vec<String>,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Protocol the relative-gain column compares against.
        #[arg(long, default_value = "tcp_d_1path")]
        baseline: String,
        /// Directory for results.csv (append-only), summary.csv and summary.md.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the built-in presets.
    Presets {
        /// Print the full config of this preset.
        #[arg(long)]
        show: Option<String>,
    },
    /// Parse and validate a config, then print the effective config.
    Validate { config: String },
}

#[derive(Debug)]
enum CliError {
    Config(ConfigError),
    Io(String, std::io::Error),
    Sim(sim::SimError),
    Sweep(SweepError),
}

impl CliError {
    fn to_json(&self) -> serde_json::Value {
        let fields = |f: Vec<FieldError>| -> Vec<serde_json::Value> {
            f.into_iter().map(|e| json!({ "path": e.path, "message": e.message })).collect()
        };
        match self {
            CliError::Config(e) => json!({ "error": "config", "message": e.to_string(), "fields": fields(e.fields()) }),
            CliError::Io(path, e) => json!({ "error": "io", "message": format!("{path}: {e}") }),
            CliError::Sim(e) => json!({ "error": "simulation", "message": e.to_string() }),
            CliError::Sweep(SweepError::Config(e)) => {
                json!({ "error": "config", "message": e.to_string(), "fields": fields(e.fields()) })
            }
            CliError::Sweep(e) => json!({ "error": "io", "message": e.to_string() }),
        }
    }

    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Sweep(SweepError::Config(_)) => 2,
            _ => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

fn load(arg: &str, set: &[String]) -> Result<ScenarioConfig, CliError> {
    let path = Path::new(arg);
    let cfg = if !path.exists() && PRESETS.contains(&arg) {
        preset(arg)?
    } else {
        let text = fs::read_to_string(path).map_err(|e| CliError::Io(arg.to_string(), e))?;
        parse_config(&text)?
    };
    let mut pairs = Vec::with_capacity(set.len());
    for s in set {
        let (k, v) = s.split_once('=').ok_or_else(|| {
            ConfigError::Invalid(vec![FieldError { path: s.clone(), message: "expected KEY=VALUE".into() }])
        })?;
        pairs.push((k.trim(), v.trim()));
    }
    Ok(cfg.with_overrides(&pairs)?)
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Io(path.display().to_string(), e))
}

fn mkdir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.display().to_string(), e))
}

fn pm(mean: f64, sd: f64) -> String {
    format!("{mean:.1} ± {sd:.1}")
}

fn fmt_opt(v: Option<f64>, scale: f64, digits: usize) -> String {
    v.map(|x| format!("{:.*}", digits, x * scale)).unwrap_or_else(|| "-".into())
}

fn summary_csv(t: &SweepTable) -> String {
    let mut s = t.axes.join(",");
    s.push_str(",protocol,runs,failed,completed_mean,completed_sd,gain,duplicates_mean,redundancy_mean,p99_outage_mean\n");
    for c in &t.cells {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.3},{:.3},{},{:.1},{},{}",
            c.values.join(","),
            c.protocol,
            c.runs,
            c.failed,
            c.completed_mean,
            c.completed_sd,
            fmt_opt(c.gain, 1.0, 4),
            c.duplicates_mean,
            fmt_opt(c.redundancy_mean, 1.0, 4),
            fmt_opt(c.p99_outage_mean, 1.0, 4),
        );
    }
    s
}

fn summary_md(t: &SweepTable) -> String {
    let gain_col = match &t.baseline {
        Some(b) => format!("gain vs {b}"),
        None => "gain".into(),
    };
    let mut s = String::new();
    let _ = writeln!(
        s,
        "| {} | runs | failed | completed sessions | {gain_col} | duplicates | redundancy | p99 outage |",
        t.axes.join(" | ")
    );
    let _ = writeln!(s, "|{}", "---|".repeat(t.axes.len() + 7));
    for c in &t.cells {
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {:.0} | {} | {} |",
            c.values.join(" | "),
            c.runs,
            c.failed,
            pm(c.completed_mean, c.completed_sd),
            c.gain.map(|g| format!("{:+.1}%", g * 100.0)).unwrap_or_else(|| "-".into()),
            c.duplicates_mean,
            fmt_opt(c.redundancy_mean, 100.0, 1),
            fmt_opt(c.p99_outage_mean, 100.0, 2),
        );
    }
    s
}

fn execute(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Run { config, set, out } => {
            let cfg = load(&config, &set)?;
            let jobs: Vec<(ScenarioConfig, u64)> = cfg.run.seeds.iter().map(|&s| (cfg.clone(), s)).collect();
            let mut runs = Vec::with_capacity(jobs.len());
            for r in sim::run_many(&jobs, default_workers()) {
                runs.push(r.map_err(CliError::Sim)?);
            }
            let csv = metrics_csv(&runs);
            match out {
                Some(dir) => {
                    mkdir(&dir)?;
                    write(&dir.join("config.toml"), &cfg.to_toml())?;
                    write(&dir.join("metrics.csv"), &csv)?;
                    eprint!("{}", cfg.to_toml());
                }
                None => {
                    for line in cfg.to_toml().lines() {
                        println!("# {line}");
                    }
                    print!("{csv}");
                }
            }
        }
        Cmd::Sweep { config, axis, set, baseline, out } => {
            let cfg = load(&config, &set)?;
            let axes = axis.iter().map(|a| Axis::parse(a)).collect::<Result<Vec<_>, _>>()?;
            if let Some(dir) = &out {
                mkdir(dir)?;
                write(&dir.join("base_config.toml"), &cfg.to_toml())?;
            }
            let table = run_sweep(&cfg, &axes, Some(&baseline), default_workers(), out.as_deref()).map_err(CliError::Sweep)?;
            let md = summary_md(&table);
            if let Some(dir) = &out {
                write(&dir.join("summary.csv"), &summary_csv(&table))?;
                write(&dir.join("summary.md"), &md)?;
            }
            eprintln!("{} runs executed, {} reused", table.executed, table.records.len() - table.executed);
            print!("{md}");
        }
        Cmd::Presets { show } => match show {
            Some(name) => print!("{}", preset(&name)?.to_toml()),
            None => PRESETS.iter().for_each(|p| println!("{p}")),
        },
        Cmd::Validate { config } => print!("{}", load(&config, &[])?.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.code())
        }
    }
}
