use std::io;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use si_cli::commands::{self, error_line};
use si_cli::server::{self, AppState};
use si_core::io::ArtifactStore;

#[derive(Parser)]
#[command(name = "si", version, about = "Counterfactual trajectories under every intervention")]
struct Cli {
    /// error, warn, info, debug or trace
    #[arg(long, global = true, default_value = "warn")]
    log_level: log::LevelFilter,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline described by a config file and write the artifact.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config's output path.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print per-unit validation metrics and top donors from an artifact.
    Validate { artifact: PathBuf },
    /// Project peaks under each less restrictive intervention.
    Project {
        artifact: PathBuf,
        #[arg(long, default_value_t = si_core::projection::DEFAULT_HORIZON_DAYS)]
        horizon: usize,
    },
    /// Serve artifacts over HTTP and accept what-if re-runs.
    Serve {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        bind: String,
        /// Base directory for relative input paths in posted configs.
        #[arg(long, default_value = ".")]
        data_root: PathBuf,
        #[arg(long, default_value_t = 120)]
        timeout_secs: u64,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().filter_level(cli.log_level).init();

    let mut stdout = io::stdout().lock();
    let outcome: Result<(), (&str, String)> = match cli.command {
        Command::Run { config, output } => commands::run(&config, output.as_deref(), &mut stdout)
            .map(|_| ())
            .map_err(|e| (e.stage(), e.to_string())),
        Command::Validate { artifact } => {
            commands::validate(&artifact, &mut stdout).map_err(|e| ("validate", format!("{e:#}")))
        }
        Command::Project { artifact, horizon } => commands::project(&artifact, horizon, &mut stdout, &mut io::stderr())
            .map(|_| ())
            .map_err(|e| ("project", format!("{e:#}"))),
        Command::Serve {
            dir,
            bind,
            data_root,
            timeout_secs,
        } => serve(dir, &bind, data_root, timeout_secs).map_err(|e| ("serve", format!("{e:#}"))),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err((stage, message)) => {
            eprintln!("{}", error_line(stage, &message));
            ExitCode::FAILURE
        }
    }
}

fn serve(dir: PathBuf, bind: &str, data_root: PathBuf, timeout_secs: u64) -> anyhow::Result<()> {
    let state = AppState {
        store: ArtifactStore::open(dir)?,
        data_root,
        timeout: Duration::from_secs(timeout_secs),
    };
    tokio::runtime::Runtime::new()?.block_on(server::serve(state, bind))
}
