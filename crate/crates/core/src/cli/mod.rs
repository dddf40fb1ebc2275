//! Command-line front end: config, file formats, subcommands and the builtin scene.

pub mod builtin;
pub mod commands;
pub mod config;
pub mod io;

use std::path::PathBuf;
use std::time::SystemTime;

use clap::{Args, Parser, Subcommand};

use crate::{Error, Result};
pub use config::RunConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_RUNTIME: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "twinbeam",
    version,
    about = "Learn site-specific analog beam codebooks from a digital twin"
)]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration; missing fields take defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Global seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory, overriding the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a canonical scene file from a builtin name or a scene file.
    Scene {
        /// Builtin name (toy-manhattan) or scene path; defaults to the config's scene.
        name: Option<String>,
    },
    /// Trace the target and twin datasets.
    Generate,
    /// Cluster the twin dataset.
    Cluster,
    /// Learn the codebook(s) from the twin dataset.
    Train,
    /// Score learned and baseline codebooks on the target dataset.
    Evaluate,
    /// Run the twin fidelity sweep.
    Sensitivity,
    /// generate, cluster, train, evaluate and sensitivity in order.
    All,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Scene { .. } => "scene",
            Command::Generate => "generate",
            Command::Cluster => "cluster",
            Command::Train => "train",
            Command::Evaluate => "evaluate",
            Command::Sensitivity => "sensitivity",
            Command::All => "all",
        }
    }
}

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Parse { .. }
        | Error::Io { .. }
        | Error::UserSetMismatch { .. }
        | Error::DimensionMismatch { .. } => EXIT_DATA,
        _ => EXIT_RUNTIME,
    }
}

/// Builds the effective config from the file and flag overrides.
pub fn resolve_config(common: &Common) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out {
        cfg.out = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn run(cli: &Cli) -> Result<()> {
    let started = SystemTime::now();
    let cfg = resolve_config(&cli.common)?;
    if let Some(j) = cli.common.jobs {
        if j == 0 {
            return Err(Error::Config("--jobs must be positive".into()));
        }
        // a second initialisation in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global();
    }
    commands::write_resolved_config(&cfg)?;
    match &cli.command {
        Command::Scene { name } => {
            let scene = commands::cmd_scene(name.as_deref().unwrap_or(&cfg.scene), &cfg.out)?;
            println!(
                "scene: {} buildings, hash {}",
                scene.buildings.len(),
                &scene.hash()[..12]
            );
        }
        Command::Generate => {
            let d = commands::cmd_generate(&cfg)?;
            for (name, ds) in [("target", &d.target), ("twin", &d.twin)] {
                println!(
                    "{name}: {} users, {} LoS, {} outage",
                    ds.len(),
                    ds.los_count(),
                    ds.outage_count()
                );
            }
        }
        Command::Cluster => {
            for (g, c) in commands::cmd_cluster(&cfg)? {
                println!(
                    "{g:?}: {} clusters over {} users",
                    c.n_clusters,
                    c.assignments.len()
                );
            }
        }
        Command::Train => {
            let learned = commands::cmd_train(&cfg)?;
            for g in learned.groups() {
                println!("{:?}: {} beams", g.group, g.learned.codebook.len());
            }
        }
        Command::Evaluate => {
            for r in commands::cmd_evaluate(&cfg)? {
                let f = |v: Option<f64>| v.map(|x| format!("{x:.2}")).unwrap_or_else(|| "-".into());
                println!(
                    "{:16} mean {:>7} dB  los {:>7}  nlos {:>7}  outage {:.3}",
                    r.method,
                    f(r.summary.mean_db),
                    f(r.los().mean_db()),
                    f(r.nlos().mean_db()),
                    r.summary.outage_frac
                );
            }
        }
        Command::Sensitivity => {
            for r in commands::cmd_sensitivity(&cfg)? {
                println!(
                    "{:12} {:>6}  los {:?}  nlos {:?}",
                    r.axis.name(),
                    r.value,
                    r.mean_snr_los,
                    r.mean_snr_nlos
                );
            }
        }
        Command::All => commands::cmd_all(&cfg)?,
    }
    commands::record_meta(&cfg.out, cli.command.name(), started)
}
