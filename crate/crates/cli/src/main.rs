use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mgipm_cli::{run, CliError, Experiment, ExperimentConfig};

#[derive(Parser)]
#[command(name = "mgipm", version, about = "Multigrid-preconditioned interior point experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a control problem (parabolic-1d or elliptic-2d).
    Run(Overrides),
    /// Compute the two-grid spectral distance table.
    Spectral(Overrides),
}

#[derive(Args)]
struct Overrides {
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    finest_n: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
}

fn load(o: &Overrides) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::from_file(&o.config)?;
    if let Some(d) = &o.output_dir {
        cfg.output_dir = d.clone();
    }
    if let Some(l) = o.levels {
        cfg.levels = l;
    }
    if let Some(n) = o.finest_n {
        cfg.finest_n = n;
    }
    if let Some(b) = o.beta {
        cfg.beta = b;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn main_inner(cli: Cli) -> Result<bool, CliError> {
    let (o, spectral) = match &cli.command {
        Command::Run(o) => (o, false),
        Command::Spectral(o) => (o, true),
    };
    let cfg = load(o)?;
    if spectral != (cfg.experiment == Experiment::SpectralTable) {
        return Err(CliError::Config(format!(
            "experiment '{}' does not belong to this subcommand",
            cfg.experiment.name()
        )));
    }
    let art = run(&cfg)?;
    if let Some(s) = &art.summary_row {
        println!(
            "{} n={} levels={} outer={} fine_matvecs={} converged={}",
            s.experiment, s.finest_n, s.levels, s.outer_iterations, s.total_fine_matvecs, s.converged
        );
    }
    for r in &art.spectral_rows {
        match r.rate {
            Some(rate) => println!("h=1/{:.0} beta={} d_h={:.4e} rate={:.3}", 1.0 / r.h, r.beta, r.d_h, rate),
            None => println!("h=1/{:.0} beta={} d_h={:.4e}", 1.0 / r.h, r.beta, r.d_h),
        }
    }
    Ok(art.converged)
}

fn main() -> ExitCode {
    match main_inner(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("mgipm: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
