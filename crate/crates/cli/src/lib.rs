//! Experiment runner: reads one TOML config, applies overrides, runs a stage
//! and leaves CSV, JSON and plot-data artifacts plus a manifest behind.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure.

pub mod output;
pub mod stages;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use thiserror::Error;

use loggas::config::ExperimentConfig;

use output::{OutputDir, RunManifest, Table, MANIFEST_FILE};
use stages::{sha256_hex, Stage};

pub const CONFIG_COPY: &str = "config.toml";

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] loggas::error::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("output directory is locked by another run ({0} exists)")]
    Busy(PathBuf),
}

impl CliError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_config() => 2,
            CliError::Busy(_) => 2,
            _ => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "loggas", version, about = "Log-gas equilibrium, sampling and large-deviation experiments")]
pub struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Global seed; overrides `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Dotted config override, e.g. `--set equilibrium.grid=800`. Repeatable;
    /// applied after the subcommand flags.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run Metropolis chains and write configurations and the pooled measure.
    Sample {
        #[arg(long)]
        chains: Option<usize>,
    },
    /// Solve for the grid equilibrium measure.
    Equilibrium {
        #[arg(long)]
        grid: Option<usize>,
        /// `a,b`
        #[arg(long, allow_hyphen_values = true)]
        truncate: Option<String>,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Compare a measure with a reference law or the oracle.
    Verify {
        /// rho-infinity, semicircle or oracle.
        #[arg(long)]
        against: Option<String>,
        /// w1 or bl.
        #[arg(long)]
        metric: Option<String>,
        /// sample, equilibrium, matrix-model or reference.
        #[arg(long)]
        source: Option<String>,
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Oracle probabilities of a half-space event against the solver's rate.
    LdpProbe {
        /// `g,t` with g one of x, x2, abs.
        #[arg(long, allow_hyphen_values = true)]
        event: Option<String>,
        /// Comma-separated particle counts.
        #[arg(long, value_delimiter = ',')]
        n: Vec<usize>,
    },
    /// Draw frequencies from the bosonic matrix model.
    BosonMatrix {
        #[arg(long)]
        draws: Option<usize>,
    },
    /// Tensor-quadrature partition function and marginal at tiny n.
    Oracle {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        resolution: Option<usize>,
        /// `g,t`; repeatable.
        #[arg(long = "event", allow_hyphen_values = true)]
        events: Vec<String>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Sample { .. } => "sample",
            Command::Equilibrium { .. } => "equilibrium",
            Command::Verify { .. } => "verify",
            Command::LdpProbe { .. } => "ldp-probe",
            Command::BosonMatrix { .. } => "boson-matrix",
            Command::Oracle { .. } => "oracle",
        }
    }

    /// Subcommand flags as config overrides.
    fn overrides(&self) -> Vec<String> {
        let mut o = Vec::new();
        let quoted = |s: &str| toml_string(s);
        match self {
            Command::Sample { chains } => {
                if let Some(k) = chains {
                    o.push(format!("sampler.chains={k}"));
                }
            }
            Command::Equilibrium { grid, truncate, tol } => {
                if let Some(m) = grid {
                    o.push(format!("equilibrium.grid={m}"));
                }
                if let Some(t) = truncate {
                    o.push(format!("equilibrium.truncate=[{t}]"));
                }
                if let Some(g) = tol {
                    o.push(format!("equilibrium.tolerance={}", toml_float(*g)));
                }
            }
            Command::Verify {
                against,
                metric,
                source,
                threshold,
            } => {
                if let Some(a) = against {
                    o.push(format!("verify.against={}", quoted(a)));
                }
                if let Some(m) = metric {
                    o.push(format!("verify.metric={}", quoted(m)));
                }
                if let Some(s) = source {
                    o.push(format!("verify.source={}", quoted(s)));
                }
                if let Some(t) = threshold {
                    o.push(format!("verify.threshold={}", toml_float(*t)));
                }
            }
            Command::LdpProbe { event, n } => {
                if let Some(e) = event {
                    o.push(format!("ldp.event={}", quoted(e)));
                }
                if !n.is_empty() {
                    let list: Vec<String> = n.iter().map(usize::to_string).collect();
                    o.push(format!("ldp.ns=[{}]", list.join(",")));
                }
            }
            Command::BosonMatrix { draws } => {
                if let Some(d) = draws {
                    o.push(format!("matrix_model.draws={d}"));
                }
            }
            Command::Oracle { n, resolution, events } => {
                if let Some(n) = n {
                    o.push(format!("oracle.n={n}"));
                }
                if let Some(r) = resolution {
                    o.push(format!("oracle.resolution={r}"));
                }
                if !events.is_empty() {
                    let list: Vec<String> = events.iter().map(|e| quoted(e)).collect();
                    o.push(format!("oracle.events=[{}]", list.join(",")));
                }
            }
        }
        o
    }
}

/// Basic TOML string literal.
fn toml_string(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Floats keep a decimal point or exponent so TOML reads them as floats.
fn toml_float(x: f64) -> String {
    let s = format!("{x:?}");
    if s.contains(['.', 'e', 'E', 'n', 'i']) {
        s
    } else {
        format!("{s}.0")
    }
}

/// Result of a successful run.
#[derive(Debug)]
pub struct Outcome {
    pub manifest: RunManifest,
    pub output_dir: PathBuf,
    /// Human-readable summary for stdout.
    pub table: String,
}

/// Loads the config with overrides in the order: subcommand flags, `--out`,
/// `--seed`, then `--set`.
pub fn load_config(cli: &Cli) -> Result<ExperimentConfig, CliError> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| loggas::error::Error::Config("--config <FILE> is required".into()))?;
    let mut overrides = cli.command.overrides();
    if let Some(out) = &cli.out {
        overrides.push(format!("output_dir={}", toml_string(&out.to_string_lossy())));
    }
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    overrides.extend(cli.set.iter().cloned());
    Ok(ExperimentConfig::load(path, &overrides)?)
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let cfg = load_config(cli)?;
    let started = chrono::Utc::now();
    let clock = Instant::now();
    let effective = cfg.to_toml_string()?;
    let config_hash = sha256_hex(effective.as_bytes());
    let root = PathBuf::from(&cfg.output_dir);
    let mut out = OutputDir::acquire(&root)?;
    out.write(CONFIG_COPY, &effective)?;

    let mut stage = Stage {
        cfg: &cfg,
        out: &mut out,
        headline: BTreeMap::new(),
        table: Table::default(),
    };
    match &cli.command {
        Command::Sample { .. } => {
            stage.sample()?;
        }
        Command::Equilibrium { .. } => {
            stage.equilibrium()?;
        }
        Command::Verify { .. } => stage.verify()?,
        Command::LdpProbe { .. } => stage.ldp_probe()?,
        Command::BosonMatrix { .. } => {
            stage.boson_matrix()?;
        }
        Command::Oracle { .. } => {
            stage.oracle(None)?;
        }
    }
    let Stage { headline, table, .. } = stage;

    let manifest = RunManifest {
        tool: "loggas".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        subcommand: cli.command.name().into(),
        config_hash,
        seed: cfg.seed,
        started_at: started.to_rfc3339(),
        finished_at: chrono::Utc::now().to_rfc3339(),
        wall_time_seconds: clock.elapsed().as_secs_f64(),
        outputs: out.written().to_vec(),
        headline,
    };
    out.write_json(MANIFEST_FILE, &manifest)?;
    let mut summary = Table::default();
    summary.row("subcommand", &manifest.subcommand);
    summary.row("output", root.display());
    summary.row("config sha256", &manifest.config_hash);
    summary.extend(table);
    Ok(Outcome {
        manifest,
        output_dir: root,
        table: summary.render(),
    })
}
