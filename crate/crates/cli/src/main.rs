//! `biot-split`: runs, compares and audits the Biot splitting schemes.
//!
//! Exit codes: 0 success, 1 usage or input error, 2 numerical failure,
//! 3 acceptance violation (energy or consolidation checks).

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use biot_core::problems::{TestCase, COARSE_CELLS, FINE_CELLS};
use biot_core::schemes::{SchemeConfig, SchemeKind};
use clap::{ArgAction, Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "biot-split",
    version,
    about = "Splitting schemes for quasi-static Biot poroelasticity"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
struct Global {
    /// Directory for CSV, JSON and VTK output.
    #[arg(long, global = true, default_value = "biot-out")]
    output_dir: PathBuf,
    /// Time step in days.
    #[arg(long, global = true, default_value_t = 0.1)]
    tau_days: f64,
    /// Final time in days.
    #[arg(long, global = true, default_value_t = 3.0)]
    t_max_days: f64,
    /// coupled, D, L, U, RL or RU.
    #[arg(long, global = true, default_value = "coupled")]
    scheme: SchemeKind,
    /// θ of the coupled scheme.
    #[arg(long, global = true)]
    theta: Option<f64>,
    /// Weight of the new pressure in the additive schemes.
    #[arg(long, global = true)]
    theta1: Option<f64>,
    /// Weight of the old pressure in the additive schemes.
    #[arg(long, global = true)]
    theta2: Option<f64>,
    /// Regularization strength of RL and RU (default α_grad · α_div).
    #[arg(long, global = true)]
    beta: Option<f64>,
    /// Relative tolerance of the linear solves.
    #[arg(long, global = true, default_value_t = 1e-8)]
    tolerance: f64,
    /// test1 or test2.
    #[arg(long, global = true, default_value = "test2")]
    case: TestCase,
    /// Comma-separated scheme list.
    #[arg(long, global = true, value_delimiter = ',')]
    schemes: Vec<SchemeKind>,
    /// Target cell count of the generated reservoir mesh.
    #[arg(long, global = true)]
    cells: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,
}

impl Global {
    fn template(&self, kind: SchemeKind) -> SchemeConfig {
        let mut cfg = SchemeConfig::from_days(kind, self.tau_days, self.t_max_days).with_tolerance(self.tolerance);
        if let Some(t) = self.theta {
            cfg.theta = t;
        }
        if let Some(t) = self.theta1 {
            cfg.theta1 = t;
        }
        if let Some(t) = self.theta2 {
            cfg.theta2 = t;
        }
        cfg.beta_reg = self.beta;
        cfg
    }

    fn coarse_cells(&self) -> usize {
        self.cells.unwrap_or(COARSE_CELLS)
    }

    fn scheme_list(&self, default: &[SchemeKind]) -> Vec<SchemeKind> {
        if self.schemes.is_empty() {
            default.to_vec()
        } else {
            self.schemes.clone()
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one scheme and write per-step records and the final fields.
    Run {
        /// Problem description as JSON; defaults to the reservoir of --case.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Also write the fields every this many steps.
        #[arg(long)]
        vtk_every: Option<usize>,
    },
    /// Run several schemes against a fine-mesh coupled benchmark.
    Compare {
        #[arg(long, default_value_t = FINE_CELLS)]
        fine_cells: usize,
        /// Write measured wall times instead of 0 (the CSV is then no longer reproducible).
        #[arg(long)]
        wall_times: bool,
    },
    /// Convergence orders on the manufactured solution.
    Converge {
        #[arg(long, value_delimiter = ',', default_value = "4,8,16,32")]
        levels: Vec<usize>,
        #[arg(long, default_value_t = 1.0)]
        space_theta: f64,
        /// Time step of the coarsest level; finer levels scale it with h².
        #[arg(long, default_value_t = 0.05)]
        space_tau: f64,
        #[arg(long, default_value_t = 0.5)]
        space_t_max: f64,
        #[arg(long, default_value_t = 8)]
        time_mesh: usize,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.025,0.0125")]
        taus: Vec<f64>,
        #[arg(long, default_value_t = 0.5)]
        time_theta: f64,
        #[arg(long, default_value_t = 1.0)]
        time_t_max: f64,
        /// The temporal reference uses the smallest τ divided by this.
        #[arg(long, default_value_t = 8)]
        refine: usize,
        #[arg(long)]
        no_space: bool,
        #[arg(long)]
        no_time: bool,
    },
    /// Energy history of the coupled scheme; exit 3 if it grows.
    Energy {
        #[arg(long, value_delimiter = ',', default_value = "0.5,0.75,1")]
        thetas: Vec<f64>,
        /// Allowed relative increase per step.
        #[arg(long, default_value_t = 1e-9)]
        slack: f64,
    },
    /// Consolidation column against the series solution; exit 3 above --max-error.
    Terzaghi {
        #[arg(long, default_value_t = 2)]
        nx: usize,
        #[arg(long, default_value_t = 40)]
        ny: usize,
        #[arg(long, default_value_t = 10.0)]
        permeability: f64,
        /// Dimensionless sample times c_v t / L².
        #[arg(long, value_delimiter = ',', default_value = "0.02,0.1,0.5")]
        samples: Vec<f64>,
        /// Steps per first sample time.
        #[arg(long, default_value_t = 20)]
        steps_per_sample: usize,
        #[arg(long, default_value_t = 0.02)]
        max_error: f64,
    },
    /// Median step time of each scheme.
    Timing,
    /// Summary of a Gmsh mesh or the generated reservoir mesh.
    MeshInfo {
        /// Gmsh ASCII 2.2 file.
        path: Option<PathBuf>,
        /// Write the mesh as Gmsh 2.2.
        #[arg(long)]
        write: Option<PathBuf>,
        /// Write a Gmsh geometry script of the reservoir.
        #[arg(long)]
        geo: Option<PathBuf>,
    },
}

/// Why a command stopped.
#[derive(Debug)]
enum Failure {
    Input(String),
    Numerical(String),
    Violation(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Input(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Violation(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Numerical(m) | Failure::Violation(m) => m,
        }
    }
}

impl From<biot_core::Error> for Failure {
    fn from(e: biot_core::Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Input(e.to_string())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.global.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();
    match commands::dispatch(&cli.global, &cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}
