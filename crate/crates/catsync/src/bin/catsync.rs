use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Coupled cat-map suspension / clock flow: simulation, invariant-manifold
/// series, tree certification and Lyapunov spectra.
#[derive(Parser)]
#[command(name = "catsync", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Iterate the Poincaré map and export the attractor point cloud.
    Simulate(CommonArgs),
    /// Lyapunov spectrum: single record or ε sweep with transition detection.
    Spectrum(CommonArgs),
    /// Build the manifold series and tangent frame; write norms and residuals.
    Series(CommonArgs),
    /// Enumerate decorated trees and certify the internal-U bound.
    Trees(CommonArgs),
}

#[derive(clap::Args)]
struct CommonArgs {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides output.dir from the config).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps.
    #[arg(long)]
    jobs: Option<usize>,
    /// Override dynamics.seed.
    #[arg(long)]
    seed: Option<u64>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Simulate(a) => ("simulate", a),
        Command::Spectrum(a) => ("spectrum", a),
        Command::Series(a) => ("series", a),
        Command::Trees(a) => ("trees", a),
    };
    if let Some(jobs) = args.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            eprintln!("catsync: cannot configure {jobs} worker threads: {e}");
            return ExitCode::from(4);
        }
    }
    match catsync::cli::run_command(name, &args.config, args.out.clone(), args.seed) {
        Ok(manifest) => {
            println!(
                "catsync {name}: {} file(s) written in {:.2}s",
                manifest.files.len(),
                manifest.wall_clock_s
            );
            ExitCode::SUCCESS
        }
        Err(err) => {
            eprintln!("catsync {name}: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
