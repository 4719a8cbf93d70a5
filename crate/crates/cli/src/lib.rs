//! Command-line front end: configuration, provenance and artifact output.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

pub mod check;
pub mod commands;
pub mod config;
pub mod error;
pub mod provenance;

pub use commands::{run, Outcome};
pub use config::RunConfig;
pub use error::CliError;

use config::parse_real;

#[derive(Debug, Parser)]
#[command(name = "dcone", version, about = "Energy scaling of thin sheets with conical boundary data")]
pub struct Cli {
    #[command(flatten)]
    pub opts: GlobalOpts,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CurveArg {
    Equator,
    LatitudeWave,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GradingArg {
    Geometric,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ContinuationArg {
    Profile,
    Warm,
}

/// Flags shared by every subcommand; they override the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct GlobalOpts {
    /// JSON run configuration
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub curve: Option<CurveArg>,
    #[arg(long, global = true)]
    pub amplitude: Option<f64>,
    #[arg(long, global = true)]
    pub wavenumber: Option<u32>,
    /// Curve sample count
    #[arg(long, global = true)]
    pub resolution: Option<usize>,
    #[arg(long, global = true)]
    pub n_r: Option<usize>,
    #[arg(long, global = true)]
    pub n_theta: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub grading: Option<GradingArg>,
    #[arg(long, global = true)]
    pub gradient_tolerance: Option<f64>,
    #[arg(long, global = true)]
    pub max_iterations: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub continuation: Option<ContinuationArg>,
    /// Comma-separated, e.g. `2^-4,2^-5`
    #[arg(long, global = true, value_delimiter = ',', value_parser = parse_real)]
    pub h_list: Option<Vec<f64>>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Boundary curves
    Curve {
        #[command(subcommand)]
        action: CurveCmd,
    },
    /// Cone constants
    Cone {
        #[command(subcommand)]
        action: ConeCmd,
    },
    Mesh {
        #[command(subcommand)]
        action: MeshCmd,
    },
    Energy {
        #[command(subcommand)]
        action: EnergyCmd,
    },
    /// Minimize at one thickness and write a field snapshot
    Solve {
        #[arg(long, value_parser = parse_real)]
        h: f64,
    },
    /// Minimize over a geometric sequence of thicknesses
    Sweep {
        #[arg(long, value_parser = parse_real)]
        h_from: Option<f64>,
        #[arg(long, value_parser = parse_real)]
        h_to: Option<f64>,
        #[arg(long, default_value_t = 2.0)]
        factor: f64,
        /// Also re-solve one thickness on a doubled mesh
        #[arg(long)]
        gate: bool,
        /// Write a field snapshot per thickness
        #[arg(long)]
        snapshots: bool,
    },
    /// Least-squares fit of E/h² against ln(1/h) from a table with columns h,e_over_h2
    Fit {
        #[arg(long)]
        table: PathBuf,
        /// Reference constant; computed from the curve when omitted
        #[arg(long)]
        c1: Option<f64>,
    },
    /// Plot-ready columns for a sweep table
    Report {
        #[arg(long)]
        table: PathBuf,
        #[arg(long)]
        c1: Option<f64>,
    },
    Probe {
        #[command(subcommand)]
        action: ProbeCmd,
    },
}

#[derive(Debug, Clone, Subcommand)]
pub enum CurveCmd {
    /// Build the configured curve
    Gen {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Check a curve file (or the configured curve)
    Validate {
        #[arg(long)]
        file: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Subcommand)]
pub enum ConeCmd {
    C1,
}

#[derive(Debug, Clone, Subcommand)]
pub enum MeshCmd {
    Info {
        #[arg(long, value_parser = parse_real)]
        h: f64,
    },
}

#[derive(Debug, Clone, Subcommand)]
pub enum EnergyCmd {
    /// Energy of a stored field snapshot
    Eval {
        #[arg(long)]
        field: PathBuf,
        /// Defaults to the snapshot's mesh thickness
        #[arg(long, value_parser = parse_real)]
        h: Option<f64>,
    },
    /// Energy of the smoothed cone profile
    Profile {
        #[arg(long, value_parser = parse_real)]
        h: f64,
    },
    /// Analytic gradient against central differences along random directions
    Check {
        #[arg(long, value_parser = parse_real, default_value = "2^-4")]
        h: f64,
        #[arg(long, default_value_t = 5)]
        fields: usize,
        #[arg(long, default_value_t = 20)]
        directions: usize,
    },
}

#[derive(Debug, Clone, Subcommand)]
pub enum ProbeCmd {
    /// Disk-average drift of the saturated logarithm and controls
    Drift {
        #[arg(long, value_delimiter = ',', value_parser = parse_real, default_value = "2^-4,2^-5,2^-6,2^-7,2^-8")]
        eps: Vec<f64>,
        #[arg(long, default_value_t = 1e-3)]
        delta: f64,
    },
    /// Trace and gradient interpolation ratios for sin(k x₁)
    Trace {
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
        k: Vec<f64>,
        #[arg(long, value_enum, default_value = "disk")]
        region: RegionArg,
    },
    /// Sup of the affine remainder on small balls
    CoreSup {
        #[arg(long = "h", value_delimiter = ',', value_parser = parse_real, default_value = "2^-3,2^-4,2^-5,2^-6")]
        h_values: Vec<f64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum RegionArg {
    /// Unit disk
    Disk,
    /// Annulus 1/2 < r < 1
    Annulus,
}
