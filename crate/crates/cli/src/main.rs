use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use gaprisk::{run_file, validate_file, CliError, Overrides};

#[derive(Parser)]
#[command(name = "gaprisk", version, about = "Repo haircut and capital scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its tables and manifest.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the configured number of paths.
        #[arg(long)]
        paths: Option<usize>,
        /// Output directory (default: the config's `output`, else out/<name>).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a configuration without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn init_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("GAPRISK_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::config(format!("GAPRISK_THREADS must be a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::config(format!("thread pool: {e}")))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Run {
            config,
            seed,
            paths,
            out,
        } => run_file(&config, &Overrides { seed, paths }, out.as_deref()).map(|dir| {
            println!("{}", serde_json::json!({"status": "ok", "output": dir}));
        }),
        Command::Validate { config } => validate_file(&config).map(|c| {
            println!("{}", serde_json::json!({"status": "ok", "name": c.name, "run_kind": c.run.kind()}));
        }),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
