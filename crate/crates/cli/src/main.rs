use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vesselgs::{cmd_evaluate, cmd_reconstruct, cmd_report, cmd_simulate, CliError, CliResult, InitSource, RunConfig};

#[derive(Parser, Debug)]
#[command(
    name = "vesselgs",
    version,
    about = "Sparse-view vessel reconstruction with 3D Gaussians"
)]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Training view counts, comma separated (overrides the config).
    #[arg(long, global = true, value_delimiter = ',')]
    views: Option<Vec<usize>>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate phantoms and their projections.
    Simulate {
        /// Number of cases (overrides the config).
        #[arg(long)]
        cases: Option<usize>,
    },
    /// Reconstruct every case of a dataset with FBP and 3D Gaussians.
    Reconstruct {
        #[arg(long)]
        dataset: PathBuf,
        /// `fbp`, `gt`, or a point-cloud file (or directory of per-case files).
        #[arg(long, default_value = "fbp")]
        init: String,
    },
    /// Score reconstructions on held-out projections and volumes.
    Evaluate {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Held-out angles in radians; midpoints between training views when omitted.
        #[arg(long, value_delimiter = ',')]
        angles: Option<Vec<f64>>,
    },
    /// Summarize a metrics directory into a markdown report.
    Report {
        /// Directory holding metrics.csv (defaults to --out).
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p).map_err(|e| CliError::Usage(e.to_string()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.recon.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    if let Some(views) = &cli.views {
        cfg.views = views.clone();
    }
    if let Command::Simulate { cases: Some(n) } = cli.command {
        cfg.cases = n;
    }
    cfg.validate()
        .map_err(|e| CliError::Usage(format!("invalid config: {e}")))?;
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = load_config(&cli)?;
    match &cli.command {
        Command::Simulate { .. } => {
            let dir = cmd_simulate(&cfg, &cfg.out)?;
            println!("dataset written to {}", dir.display());
        }
        Command::Reconstruct { dataset, init } => {
            let dir = cmd_reconstruct(&cfg, dataset, &InitSource::parse(init), &cfg.out)?;
            println!("results written to {}", dir.display());
        }
        Command::Evaluate {
            results,
            dataset,
            angles,
        } => {
            let out = cli.out.clone().unwrap_or_else(|| results.clone());
            let rows = cmd_evaluate(&cfg, results, dataset, angles.as_deref(), &out)?;
            println!("{} metric rows written to {}", rows.len(), out.display());
        }
        Command::Report { metrics } => {
            let dir = metrics.clone().unwrap_or_else(|| cfg.out.clone());
            cmd_report(&cfg, &dir)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
