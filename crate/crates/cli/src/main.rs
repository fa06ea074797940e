use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod artifact;
mod commands;
mod config;
mod error;
mod plot;

use artifact::Artifacts;
use error::CliError;

/// Point-vortex experiments on a conformally deformed sphere.
#[derive(Parser)]
#[command(name = "nvortex", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(short, long)]
    config: PathBuf,
    /// Directory for the artifacts; created if missing.
    #[arg(short, long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the flow and write the trajectory as CSV.
    Simulate(Common),
    /// Multistart search for critical points of the energy.
    FixedPoints(Common),
    /// Cluster sums, commensurability, thinness and the spectral check.
    VorticityReport(Common),
    /// Band of the inner minimum of the energy over one vortex position.
    EnergyBand(Common),
    /// Refine a periodic orbit by shooting.
    Orbit(Common),
    /// Contact-type checks for the identical dipole.
    Contact(Common),
    /// Smallest eigenvalues of the Laplacian of the metric.
    Spectrum(Common),
    /// Orthographic SVG of a trajectory CSV.
    Plot {
        #[command(flatten)]
        common: Common,
        /// Trajectory CSV; overrides `plot.input` from the config.
        #[arg(short, long)]
        input: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<Vec<PathBuf>, CliError> {
    let (name, common, input) = match &cli.command {
        Command::Simulate(c) => ("simulate", c, None),
        Command::FixedPoints(c) => ("fixed-points", c, None),
        Command::VorticityReport(c) => ("vorticity-report", c, None),
        Command::EnergyBand(c) => ("energy-band", c, None),
        Command::Orbit(c) => ("orbit", c, None),
        Command::Contact(c) => ("contact", c, None),
        Command::Spectrum(c) => ("spectrum", c, None),
        Command::Plot { common, input } => ("plot", common, input.clone()),
    };
    let cfg = config::load(&common.config)?;
    let mut out = Artifacts::new(&common.out_dir, &cfg.sha256, name)?;
    let result = match cli.command {
        Command::Simulate(_) => commands::simulate(&cfg, &mut out),
        Command::FixedPoints(_) => commands::fixed_points(&cfg, &mut out),
        Command::VorticityReport(_) => commands::vorticity_report(&cfg, &mut out),
        Command::EnergyBand(_) => commands::energy_band(&cfg, &mut out),
        Command::Orbit(_) => commands::orbit(&cfg, &mut out),
        Command::Contact(_) => commands::contact(&cfg, &mut out),
        Command::Spectrum(_) => commands::spectrum(&cfg, &mut out),
        Command::Plot { .. } => {
            let path = match input {
                Some(p) => p,
                None => cfg
                    .config
                    .plot
                    .input
                    .as_ref()
                    .map(|p| cfg.base_dir.join(p))
                    .ok_or_else(|| {
                        CliError::Config("plot.input: required unless --input is given".into())
                    })?,
            };
            let tracks = plot::read_tracks(&path)?;
            let p = &cfg.config.plot;
            if p.size < 16 {
                return Err(CliError::Config("plot.size: must be at least 16".into()));
            }
            let svg = plot::render(&tracks, p.size, p.view, &out.header, &path)?;
            out.text("plot.svg", &svg)
        }
    };
    for path in &out.written {
        eprintln!("wrote {}", path.display());
    }
    result.map(|_| out.written)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
