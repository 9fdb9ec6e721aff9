//! `tlebm`: run one analysis of the two-layer energy balance model from a TOML scenario.
//!
//! Exit codes: 0 success, 1 other failure (including the step limit), 2 config error,
//! 3 blow-up, 4 I/O error, 5 regime precondition not met.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use config::ScenarioConfig;
use error::{CliError, EXIT_CONFIG};
use output::{OutputDir, RunManifest};

#[derive(Parser)]
#[command(name = "tlebm", version, about = "Two-layer energy balance model toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Scenario TOML; defaults apply to every missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `out_dir` in the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Reserved; recorded in the manifest.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for grid work.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Integrate one trajectory from `[initial]`.
    Simulate,
    /// Enumerate and classify equilibria.
    Equilibria,
    /// Continue equilibria over `[sweep]`.
    Sweep,
    /// Step ε from `jump.eps_star` to `jump.eps_plus` starting on the warm branch.
    Jump,
    /// Quasi-static up-down ε path.
    Hysteresis,
    /// Axis thresholds, separatrix and basin grid.
    Basins,
    /// Blow-up certificate for ε > 2 from `[initial]`.
    Blowup,
    /// N, N* curves and the ε_{a,0} bracket.
    Convexity,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Equilibria => "equilibria",
            Command::Sweep => "sweep",
            Command::Jump => "jump",
            Command::Hysteresis => "hysteresis",
            Command::Basins => "basins",
            Command::Blowup => "blowup",
            Command::Convexity => "convexity",
        }
    }

    fn run(self, cfg: &ScenarioConfig, out: &mut OutputDir) -> Result<i32, CliError> {
        match self {
            Command::Simulate => commands::simulate(cfg, out),
            Command::Equilibria => commands::equilibria(cfg, out),
            Command::Sweep => commands::sweep_cmd(cfg, out),
            Command::Jump => commands::jump(cfg, out),
            Command::Hysteresis => commands::hysteresis(cfg, out),
            Command::Basins => commands::basins(cfg, out),
            Command::Blowup => commands::blowup(cfg, out),
            Command::Convexity => commands::convexity(cfg, out),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();

    if let Some(n) = cli.threads {
        if n == 0 || rayon::ThreadPoolBuilder::new().num_threads(n).build_global().is_err() {
            eprintln!("tlebm: config error: --threads must be a positive integer");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    }

    let cfg = match &cli.config {
        Some(path) => ScenarioConfig::load(path),
        None => Ok(ScenarioConfig::default()),
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("tlebm: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    let dir = cli.out.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("tlebm-out"));
    let mut out = match OutputDir::create(&dir) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("tlebm: {e}");
            return ExitCode::from(e.exit_code() as u8);
        }
    };

    let result = cli.command.run(&cfg, &mut out);
    let (code, error) = match &result {
        Ok(code) => (*code, None),
        Err(e) => (e.exit_code(), Some(e.to_string())),
    };
    if let Some(msg) = &error {
        eprintln!("tlebm: {msg}");
    }
    let manifest = RunManifest {
        config_sha256: cfg.hash(),
        version: env!("CARGO_PKG_VERSION"),
        subcommand: cli.command.name().to_string(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        files: out.files().to_vec(),
        exit_code: code,
        error,
        seed: cli.seed,
        threads: cli.threads,
    };
    if let Err(e) = out.manifest(&manifest) {
        eprintln!("tlebm: {e}");
        return ExitCode::from(e.exit_code() as u8);
    }
    ExitCode::from(code as u8)
}
