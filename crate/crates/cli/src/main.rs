use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qwg_cli::{apply_overrides, exit_code, load_scenario, run_scenario, Overrides};

#[derive(Parser)]
#[command(name = "qwg", version, about = "Coupled-mode solver for curved, twisted and deformed quantum waveguides")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (or a preset name) and write the result tables.
    Run {
        config: String,
        #[arg(long)]
        output_dir: Option<PathBuf>,
        /// Tier to run; repeat to run several. Replaces the configured list.
        #[arg(long = "tier")]
        tiers: Vec<String>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Parse and check a scenario without solving it.
    Validate { config: String },
    /// Print the built-in presets.
    ListPresets,
}

fn init_logging(level: &str) {
    let env = env_logger::Env::default().default_filter_or(level);
    let _ = env_logger::Builder::from_env(env).format_timestamp(None).try_init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot configure {n} threads: {e}");
            return ExitCode::from(qwg_cli::EXIT_VALIDATION as u8);
        }
    }
    let outcome = match cli.command {
        Command::ListPresets => {
            for (name, about) in qwg_core::PRESETS {
                println!("{name:<22} {about}");
            }
            Ok(())
        }
        Command::Validate { config } => load_scenario(&config).map(|s| {
            println!("{}: ok ({} tiers, config sha256 {})", s.name, s.solver.tiers.len(), s.hash());
        }),
        Command::Run { config, output_dir, tiers, seed } => {
            let overrides = Overrides { output_dir, tiers, seed };
            load_scenario(&config).and_then(|s| apply_overrides(s, &overrides)).and_then(|s| {
                init_logging(&s.output.verbosity);
                let files = run_scenario(&s)?;
                for f in files {
                    println!("{}", f.display());
                }
                Ok(())
            })
        }
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
