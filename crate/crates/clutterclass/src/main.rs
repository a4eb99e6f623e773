use clap::{ArgAction, Parser, Subcommand};
use clutterclass::cli::{run, Command, RunManifest};
use clutterclass::io::error_json;
use std::path::PathBuf;
use std::process::ExitCode;

/// Partition radar range-bin snapshots into homogeneous clutter classes.
#[derive(Parser)]
#[command(name = "clutterclass", version, about)]
struct Cli {
    /// Increase log verbosity (-v info, -vv debug); RUST_LOG overrides.
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: CliCommand,
}

#[derive(Subcommand)]
enum CliCommand {
    /// Generate a synthetic labeled scenario.
    Simulate {
        /// Scenario config JSON.
        #[arg(long)]
        config: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        /// Override the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Fit a mixture to a range-profile file.
    Fit {
        /// Fit config JSON.
        #[arg(long)]
        config: PathBuf,
        /// Range-profile data file.
        #[arg(long)]
        data: PathBuf,
        /// Optional truth labels CSV for side-by-side output.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Override the initialization seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a seeded Monte Carlo benchmark of one scenario and method.
    Benchmark {
        /// Benchmark config JSON (scenario + fit method).
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trials: usize,
        /// Master seed for the trial substreams.
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Benchmark a scenario x method grid and tabulate RMSCE per cell.
    Tables {
        /// Grid config JSON.
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let default_level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(default_level))
        .init();

    let manifest = match cli.command {
        CliCommand::Simulate { config, out, seed } => RunManifest {
            command: Command::Simulate,
            config_path: config,
            output_dir: out,
            seed_override: seed,
            verbosity: cli.verbose,
        },
        CliCommand::Fit { config, data, truth, out, seed } => RunManifest {
            command: Command::Fit { data, truth },
            config_path: config,
            output_dir: out,
            seed_override: seed,
            verbosity: cli.verbose,
        },
        CliCommand::Benchmark { config, trials, seed, out } => RunManifest {
            command: Command::Benchmark { trials, master_seed: seed },
            config_path: config,
            output_dir: out,
            seed_override: None,
            verbosity: cli.verbose,
        },
        CliCommand::Tables { config, out } => RunManifest {
            command: Command::Tables,
            config_path: config,
            output_dir: out,
            seed_override: None,
            verbosity: cli.verbose,
        },
    };

    match run(&manifest) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("{}", error_json(err.kind(), &err.to_string()));
            ExitCode::FAILURE
        }
    }
}
