use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use trispin_cli::config::{RunConfig, EXPERIMENTS};
use trispin_cli::{output, run};

#[derive(Parser)]
#[command(name = "trispin", version, about = "Virtual experiments on a three-spin exchange-only qubit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write <experiment>.csv and <experiment>.meta
    Run {
        experiment: String,
        #[arg(long)]
        config: PathBuf,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: all cores). Results do not depend on it.
        #[arg(long)]
        threads: Option<usize>,
        /// Overrides the output directory in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List experiments with one-line descriptions
    List,
}

const SCHEMA_ERROR: u8 = 2;
const EXPERIMENT_ERROR: u8 = 1;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::List => {
            for (name, about) in EXPERIMENTS {
                println!("{name:<22}{about}");
            }
            ExitCode::SUCCESS
        }
        Command::Run {
            experiment,
            config,
            seed,
            threads,
            out,
        } => {
            if !EXPERIMENTS.iter().any(|(n, _)| *n == experiment) {
                let names: Vec<&str> = EXPERIMENTS.iter().map(|(n, _)| *n).collect();
                eprintln!("error: unknown experiment `{experiment}`; valid names: {}", names.join(", "));
                return ExitCode::from(SCHEMA_ERROR);
            }
            let mut cfg = match RunConfig::load(&config) {
                Ok(c) => c,
                Err(e) => {
                    eprintln!("error: {}: {e}", config.display());
                    return ExitCode::from(SCHEMA_ERROR);
                }
            };
            // the command line wins over the file
            *cfg.experiment.get_mut() = experiment;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(o) = out {
                cfg.out = o;
            }
            if let Err(e) = cfg.validate(None) {
                eprintln!("error: {}: {e}", config.display());
                return ExitCode::from(SCHEMA_ERROR);
            }
            if let Some(n) = threads {
                if n == 0 {
                    eprintln!("error: --threads must be >= 1");
                    return ExitCode::from(SCHEMA_ERROR);
                }
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()
                    .expect("global thread pool is configured once");
            }
            let result = match run::execute(&cfg) {
                Ok(r) => r,
                Err(e) => {
                    eprintln!("error: {} failed: {e}", cfg.experiment());
                    return ExitCode::from(EXPERIMENT_ERROR);
                }
            };
            match output::write_outputs(&cfg, &result, &cfg.out) {
                Ok(paths) => {
                    for p in paths {
                        println!("{}", p.display());
                    }
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("error: writing {}: {e}", cfg.out.display());
                    ExitCode::from(EXPERIMENT_ERROR)
                }
            }
        }
    }
}
