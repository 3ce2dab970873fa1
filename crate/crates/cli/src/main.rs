use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

mod commands;

use commands::Failure;

/// Typical cells of 3D Poisson-Voronoi tessellations.
#[derive(Debug, Parser)]
#[command(name = "pvcell", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate independent typical cells and write their measurements.
    Simulate(SimulateArgs),
    /// Fit parametric families to a dataset column.
    Fit(FitArgs),
    /// Rescale a dataset or fit report to another intensity.
    Scale(ScaleArgs),
    /// Write plot data (density, ECDF, face PMF, QQ points) as CSV.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeatureArg {
    Volume,
    Surface,
    Faces,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FamilyArg {
    Gamma,
    Gengamma,
    Lognormal,
    All,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum What {
    Kde,
    Ecdf,
    Pmf,
    Qq,
}

#[derive(Debug, clap::Args)]
pub struct SimulateArgs {
    /// Intensity of the Poisson process.
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    /// Number of cells.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Output format; defaults to the file extension, else CSV.
    #[arg(long, value_enum)]
    pub format: Option<Format>,
    /// Worker threads (default: all cores).
    #[arg(long, env = "VORONOI_THREADS")]
    pub threads: Option<usize>,
}

#[derive(Debug, clap::Args)]
pub struct FitArgs {
    /// Dataset written by `simulate`.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub feature: FeatureArg,
    #[arg(long, value_enum, default_value = "all")]
    pub family: FamilyArg,
    /// KDE bandwidth for the distance comparison (default 0.05 for volume and
    /// 0.25 for surface at unit intensity, rescaled to the data's intensity).
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Rescale the data to this intensity before fitting.
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// With `--family all`, also write the comparison table as CSV.
    #[arg(long)]
    pub table: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
pub struct ScaleArgs {
    /// Dataset or JSON fit report.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Target intensity.
    #[arg(long)]
    pub lambda: f64,
    /// Intensity a fit report refers to (datasets carry their own).
    #[arg(long, default_value_t = 1.0)]
    pub from_lambda: f64,
    /// Feature a fit report describes.
    #[arg(long, value_enum)]
    pub feature: Option<FeatureArg>,
    /// Output path (default stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, clap::Args)]
pub struct ExportArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum)]
    pub what: What,
    #[arg(long, value_enum, default_value = "volume")]
    pub feature: FeatureArg,
    #[arg(long, default_value_t = 512)]
    pub grid_points: usize,
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Family for QQ points.
    #[arg(long, value_enum, default_value = "gengamma")]
    pub family: FamilyArg,
    /// Rescale the data to this intensity first.
    #[arg(long)]
    pub lambda: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(args) => commands::simulate(args),
        Command::Fit(args) => commands::fit(args),
        Command::Scale(args) => commands::scale(args),
        Command::Export(args) => commands::export(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        // a closed pipe (`pvcell ... | head`) is not worth reporting
        Err(Failure { error, .. }) if broken_pipe(&error) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => {
            eprintln!("error: {error:#}");
            ExitCode::from(code)
        }
    }
}

fn broken_pipe(error: &anyhow::Error) -> bool {
    use pvcell::io::IoError;
    use std::io::ErrorKind;
    error.chain().any(|e| {
        let kind = if let Some(e) = e.downcast_ref::<std::io::Error>() {
            Some(e.kind())
        } else {
            match e.downcast_ref::<IoError>() {
                Some(IoError::Io(e)) => Some(e.kind()),
                Some(IoError::Csv(e)) => match e.kind() {
                    csv::ErrorKind::Io(e) => Some(e.kind()),
                    _ => None,
                },
                Some(IoError::Json(e)) => e.io_error_kind(),
                _ => None,
            }
        };
        kind == Some(ErrorKind::BrokenPipe)
    })
}
