use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dcaa_core::harness::config::PowerConfig;
use dcaa_core::harness::sweep::{run_sweep, SweepKind};
use dcaa_core::signalchain::ScenarioFile;
use dcaa_core::{Architecture, DcaaError, RunConfig};

/// Spherical DCAA design, beam analysis and Monte-Carlo sensing runs.
#[derive(Parser)]
#[command(name = "dcaa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sub-array layout of the sphere.
    Design(Common),
    /// Beam-pattern envelopes of both architectures.
    Beampattern(Common),
    /// First-null resolution maps.
    Resolution(Common),
    /// Minimum sphere radius over array sizes and carriers.
    RadiusSweep(Common),
    /// One MUSIC run on a swarm draw or a scenario file.
    Music {
        #[command(flatten)]
        common: Common,
        /// Scenario JSON (paths, K, Pt, sigma2, N_RF).
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Swarm sensing Monte-Carlo: missed targets and angle RMSE.
    Montecarlo(Common),
    /// Spectral efficiency of the selected uplink channel versus SNR.
    Rate(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Restrict to one architecture.
    #[arg(long, value_enum)]
    arch: Option<ArchArg>,
    /// Monte-Carlo trials Q.
    #[arg(long)]
    trials: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ArchArg {
    Dcaa,
    UpaKpc,
}

impl From<ArchArg> for Architecture {
    fn from(a: ArchArg) -> Self {
        match a {
            ArchArg::Dcaa => Architecture::Dcaa,
            ArchArg::UpaKpc => Architecture::UpaKpc,
        }
    }
}

enum Failure {
    Config(String),
    Numerical(String),
}

impl From<DcaaError> for Failure {
    fn from(e: DcaaError) -> Self {
        match e {
            DcaaError::Config(_)
            | DcaaError::Json(_)
            | DcaaError::Domain(_)
            | DcaaError::Collision { .. }
            | DcaaError::SeparationViolation { .. }
            | DcaaError::ModelOrder { .. } => Failure::Config(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            RunConfig::from_json(&text)?
        }
        None => RunConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(dir) = &common.out_dir {
        cfg.out_dir = dir.clone();
    }
    if let Some(arch) = common.arch {
        cfg.architectures = vec![arch.into()];
    }
    if let Some(q) = common.trials {
        cfg.trials = q;
        cfg.rate.trials = q;
    }
    if common.threads.is_some() {
        cfg.threads = common.threads;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> Result<(), Failure> {
    let (kind, common, scenario) = match &cli.command {
        Command::Design(c) => (SweepKind::Design, c, None),
        Command::Beampattern(c) => (SweepKind::Beampattern, c, None),
        Command::Resolution(c) => (SweepKind::Resolution, c, None),
        Command::RadiusSweep(c) => (SweepKind::RadiusSweep, c, None),
        Command::Music { common, scenario } => (SweepKind::Music, common, scenario.as_ref()),
        Command::Montecarlo(c) => (SweepKind::Montecarlo, c, None),
        Command::Rate(c) => (SweepKind::Rate, c, None),
    };
    let mut cfg = load_config(common)?;
    let paths = match scenario {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
            let scn = ScenarioFile::from_json(&text)?;
            cfg.k = scn.k;
            cfg.n_rf = scn.n_rf;
            cfg.power = PowerConfig::Explicit { pt: scn.pt.linear(), sigma2: scn.sigma2 };
            cfg.symbol_model = scn.symbol_model;
            cfg.coherence = scn.coherence;
            Some(scn.path_set()?)
        }
        None => None,
    };
    let manifest = run_sweep(&cfg, kind, paths.as_ref())?;
    for f in &manifest.outputs {
        println!("{}", cfg.out_dir.join(f).display());
    }
    if manifest.failed_trials > 0 {
        eprintln!("warning: {} trials failed and were excluded", manifest.failed_trials);
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
