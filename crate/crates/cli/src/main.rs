//! `lindlab` — experiment runner for dissipative lattice dynamics.
//!
//! Exit codes: 0 success, 1 error, 2 hypothesis failure (the model
//! violates a premise of the stability theorem, e.g. a degenerate fixed
//! point or lack of rapid mixing — a scientific result, not a bug).

mod commands;
mod config;
mod store;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_HYPOTHESIS: u8 = 2;

#[derive(Parser)]
#[command(name = "lindlab", version, about = "Dissipative lattice dynamics laboratory")]
struct Cli {
    /// Worker threads for sweep parallelism (0 = all cores)
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Master seed for Monte-Carlo pipelines (overrides the config seed)
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory receiving run folders
    #[arg(long, global = true, default_value = "runs")]
    out_dir: PathBuf,
    /// Numerical tolerance for verdict checks
    #[arg(long, global = true, default_value_t = 1e-6)]
    tolerance: f64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct ConfigSource {
    /// Experiment definition (TOML)
    config: Option<PathBuf>,
    /// Use a built-in preset with default settings instead of a file
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Evolve one observable and report its approach to the fixed point
    Evolve(ConfigSource),
    /// Sweep lattice sizes and fit the rapid-mixing envelope
    Mixing(ConfigSource),
    /// Probe commutator spreading and fit the Lieb-Robinson envelope
    Lr(ConfigSource),
    /// Measure the size-independent decay envelope Delta(t)
    Envelope(ConfigSource),
    /// Run the perturbation-stability sweep and verdict
    Stability(ConfigSource),
    /// Classical Glauber dynamics: exact and kinetic Monte-Carlo curves
    Glauber(ConfigSource),
    /// Inspect built-in presets
    Preset {
        #[command(subcommand)]
        action: PresetAction,
    },
    /// Statically check a config without running anything
    Validate {
        /// Experiment definition (TOML)
        config: PathBuf,
    },
}

#[derive(Subcommand)]
enum PresetAction {
    /// List preset names
    List,
    /// Print the full default config for a preset
    Dump { name: String },
}

/// Outcome of a pipeline: exit code plus an optional note for stderr.
pub struct RunOutcome {
    pub code: u8,
    pub note: Option<String>,
}

impl RunOutcome {
    pub fn ok() -> Self {
        RunOutcome {
            code: EXIT_OK,
            note: None,
        }
    }

    pub fn hypothesis(note: impl Into<String>) -> Self {
        RunOutcome {
            code: EXIT_HYPOTHESIS,
            note: Some(note.into()),
        }
    }
}

fn load_config(src: &ConfigSource) -> Result<ExperimentConfig, String> {
    match (&src.config, &src.preset) {
        (Some(path), _) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
            toml::from_str(&text).map_err(|e| format!("config parse error: {e}"))
        }
        (None, Some(name)) => ExperimentConfig::from_preset(name)
            .ok_or_else(|| format!("unknown preset '{name}' (try `lindlab preset list`)")),
        (None, None) => Err("a config file or --preset is required".into()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
        {
            eprintln!("error: cannot configure thread pool: {e}");
            return ExitCode::from(EXIT_ERROR);
        }
    }

    let result: Result<RunOutcome, String> = match &cli.command {
        Command::Preset { action } => match action {
            PresetAction::List => {
                for name in lindlab_core::presets::Preset::names() {
                    println!("{name}");
                }
                Ok(RunOutcome::ok())
            }
            PresetAction::Dump { name } => match ExperimentConfig::from_preset(name) {
                Some(cfg) => {
                    print!("{}", cfg.canonical_toml());
                    Ok(RunOutcome::ok())
                }
                None => Err(format!("unknown preset '{name}'")),
            },
        },
        Command::Validate { config } => {
            let text = match std::fs::read_to_string(config) {
                Ok(t) => t,
                Err(e) => {
                    eprintln!("error: cannot read {}: {e}", config.display());
                    return ExitCode::from(EXIT_ERROR);
                }
            };
            match toml::from_str::<ExperimentConfig>(&text) {
                Ok(cfg) => {
                    let diags = cfg.diagnostics();
                    if diags.is_empty() {
                        println!("ok");
                    } else {
                        for d in &diags {
                            println!("{d}");
                        }
                    }
                    Ok(RunOutcome::ok())
                }
                Err(e) => Err(format!("config parse error: {e}")),
            }
        }
        Command::Evolve(src)
        | Command::Mixing(src)
        | Command::Lr(src)
        | Command::Envelope(src)
        | Command::Stability(src)
        | Command::Glauber(src) => load_config(src).and_then(|mut cfg| {
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            let ctx = commands::Context {
                out_dir: cli.out_dir.clone(),
                tolerance: cli.tolerance,
            };
            let run = match &cli.command {
                Command::Evolve(_) => commands::evolve(&ctx, &cfg),
                Command::Mixing(_) => commands::mixing(&ctx, &cfg),
                Command::Lr(_) => commands::lr(&ctx, &cfg),
                Command::Envelope(_) => commands::envelope(&ctx, &cfg),
                Command::Stability(_) => commands::stability(&ctx, &cfg),
                Command::Glauber(_) => commands::glauber(&ctx, &cfg),
                _ => unreachable!(),
            };
            run.map_err(|e| e.to_string())
        }),
    };

    match result {
        Ok(outcome) => {
            if let Some(note) = &outcome.note {
                eprintln!("verdict: {note}");
            }
            ExitCode::from(outcome.code)
        }
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
