//! Command-line front end.
//!
//! Three surfaces: `model build|validate` for producing and checking model
//! files, `plan` for a single multi-step solve with a trajectory dump, and
//! `sweep` for tracing the boundary over a multiplier grid into CSV. Summary
//! lines go to standard output, diagnostics to standard error, and the
//! `SEQRD_LOG` variable selects the log level. Exit codes: 0 success, 1
//! usage or input error, 2 validation failure.

use std::f64::consts::LN_2;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::boundary::{sweep, BoundaryPoint, SweepOptions};
use crate::model::{
    build_kelly, build_symmetric_channel, fmt_f64, load_model, save_model, ModelSpec, Multipliers,
};
use crate::onestep::{PolicyInit, SolveOptions};
use crate::planner::{plan, trajectory_to_json, PlanOptions};
use crate::{Error, Result};

/// Default log-spaced range for a grid axis given without bounds: from 1
/// down to 1e-3, 20 points.
const DEFAULT_AXIS_LO: f64 = 1.0;
const DEFAULT_AXIS_HI: f64 = 1e-3;
const DEFAULT_AXIS_COUNT: usize = 20;

#[derive(Parser)]
#[command(
    name = "seqrd",
    about = "Bounded planning under information-rate constraints",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build or validate model files.
    Model {
        #[command(subcommand)]
        action: ModelAction,
    },
    /// Solve one multiplier point and write the trajectory.
    Plan(PlanArgs),
    /// Trace the boundary over a multiplier grid and write CSV.
    Sweep(SweepArgs),
}

#[derive(Subcommand)]
enum ModelAction {
    /// Write a built-in model to a JSON file.
    Build {
        /// Which built-in model to write.
        builtin: Builtin,
        /// Output path.
        #[arg(short, long, default_value = "model.json")]
        out: PathBuf,
    },
    /// Check a model file and report PASS or FAIL.
    Validate {
        /// Model file to check.
        path: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Builtin {
    /// Two-state drifting world observed through a binary symmetric channel.
    SymmetricChannel,
    /// Three-horse betting chain with noisy fitness readouts.
    Kelly,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Units {
    /// Natural log units, the internal representation.
    Nats,
    /// Rates and informations divided by ln 2 on output.
    Bits,
}

#[derive(clap::Args)]
struct PlanArgs {
    /// Model file path, or a built-in name (symmetric-channel, kelly).
    #[arg(long)]
    model: String,
    /// Price of the combined update rate.
    #[arg(long, default_value_t = 0.0)]
    gamma_c: f64,
    /// Price of the memory rate.
    #[arg(long, default_value_t = 0.0)]
    gamma_m: f64,
    /// Price of the sensing rate.
    #[arg(long, default_value_t = 0.0)]
    gamma_s: f64,
    /// Seed for the random policy initialization.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Inner (per-step) convergence tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol_inner: f64,
    /// Outer (per-round) convergence tolerance.
    #[arg(long, default_value_t = 1e-7)]
    tol_outer: f64,
    /// Units for rates in the summary line.
    #[arg(long, value_enum, default_value_t = Units::Nats)]
    units: Units,
    /// Trajectory output path.
    #[arg(long, default_value = "trajectory.json")]
    out: PathBuf,
}

#[derive(clap::Args)]
struct SweepArgs {
    /// Model file path, or a built-in name (symmetric-channel, kelly).
    #[arg(long)]
    model: String,
    /// Grid axis as `axis:lo:hi:count` with axis in {c, m, s}, log-spaced;
    /// a bare axis letter uses the default range 1 down to 1e-3, 20 points.
    /// Repeat for multiple axes; axes not given stay at their --gamma value.
    #[arg(long)]
    grid: Vec<String>,
    /// Fixed value for the combined-rate axis when not swept.
    #[arg(long, default_value_t = 0.0)]
    gamma_c: f64,
    /// Fixed value for the memory axis when not swept.
    #[arg(long, default_value_t = 0.0)]
    gamma_m: f64,
    /// Fixed value for the sensing axis when not swept.
    #[arg(long, default_value_t = 0.0)]
    gamma_s: f64,
    /// Seed for the random policy initialization of chain heads.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Inner (per-step) convergence tolerance.
    #[arg(long, default_value_t = 1e-9)]
    tol_inner: f64,
    /// Outer (per-round) convergence tolerance.
    #[arg(long, default_value_t = 1e-7)]
    tol_outer: f64,
    /// Units for rate and information columns in the CSV.
    #[arg(long, value_enum, default_value_t = Units::Nats)]
    units: Units,
    /// CSV output path.
    #[arg(long, default_value = "boundary.csv")]
    out: PathBuf,
    /// Number of parallel warm-start chains.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

/// Parse arguments from the process environment and run.
pub fn run() -> i32 {
    run_with_args(std::env::args_os())
}

/// Run with explicit arguments; returns the process exit code.
pub fn run_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(
        env_logger::Env::new().filter_or("SEQRD_LOG", "error"),
    )
    .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let outcome = match cli.command {
        Command::Model { action } => cmd_model(action),
        Command::Plan(args) => cmd_plan(args),
        Command::Sweep(args) => cmd_sweep(args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

fn cmd_model(action: ModelAction) -> Result<i32> {
    match action {
        ModelAction::Build { builtin, out } => {
            let spec = match builtin {
                Builtin::SymmetricChannel => build_symmetric_channel(),
                Builtin::Kelly => build_kelly(),
            };
            save_model(&spec, &out)?;
            println!(
                "wrote {} ({} world / {} obs / {} mem, horizon {})",
                out.display(),
                spec.num_world,
                spec.num_obs,
                spec.num_mem,
                spec.horizon
            );
            Ok(0)
        }
        ModelAction::Validate { path } => match load_model(&path) {
            Ok(spec) => {
                println!(
                    "PASS {} ({} world / {} obs / {} mem, horizon {})",
                    path.display(),
                    spec.num_world,
                    spec.num_obs,
                    spec.num_mem,
                    spec.horizon
                );
                Ok(0)
            }
            // File-level problems are input errors; content problems are
            // what validation exists to report.
            Err(e @ (Error::Io { .. } | Error::Parse { .. })) => Err(e),
            Err(e) => {
                println!("FAIL {}: {e}", path.display());
                Ok(2)
            }
        },
    }
}

/// Accept a built-in name or fall back to loading a file.
fn resolve_model(name: &str) -> Result<ModelSpec> {
    match name {
        "symmetric-channel" => Ok(build_symmetric_channel()),
        "kelly" => Ok(build_kelly()),
        path => load_model(Path::new(path)),
    }
}

/// Multiplicative factor taking internal nat-valued rates to output units.
fn rate_scale(units: Units) -> f64 {
    match units {
        Units::Nats => 1.0,
        Units::Bits => 1.0 / LN_2,
    }
}

fn plan_options(tol_inner: f64, tol_outer: f64, seed: u64) -> PlanOptions {
    PlanOptions {
        inner: SolveOptions {
            tol: tol_inner,
            init: PolicyInit::RandomDirichlet { seed },
            ..SolveOptions::default()
        },
        outer_tol: tol_outer,
        ..PlanOptions::default()
    }
}

fn cmd_plan(args: PlanArgs) -> Result<i32> {
    let spec = resolve_model(&args.model)?;
    let mult = Multipliers::new(args.gamma_c, args.gamma_m, args.gamma_s)?;
    mult.require_positive_gamma()?;
    let opts = plan_options(args.tol_inner, args.tol_outer, args.seed);
    log::info!(
        "planning {} steps at gamma=({}, {}, {})",
        spec.horizon,
        args.gamma_c,
        args.gamma_m,
        args.gamma_s
    );
    let outcome = plan(&spec, &mult, &opts, None)?;
    let traj = &outcome.trajectory;
    std::fs::write(&args.out, trajectory_to_json(traj)).map_err(|e| Error::Io {
        path: args.out.display().to_string(),
        source: e,
    })?;
    log::info!("trajectory written to {}", args.out.display());
    let s = rate_scale(args.units);
    let (_, i_m, i_s) = traj.avg_rates();
    println!(
        "L={} D={} Rm={} Rs={} iters={} converged={}",
        fmt_f64(traj.total_cost),
        fmt_f64(traj.avg_distortion()),
        fmt_f64(i_m * s),
        fmt_f64(i_s * s),
        outcome.outer_iterations,
        outcome.converged
    );
    Ok(0)
}

/// One grid axis with its swept values.
#[derive(Debug, Clone, PartialEq)]
pub struct GridAxis {
    pub axis: char,
    pub values: Vec<f64>,
}

/// Geometric progression from `lo` to `hi` inclusive.
fn log_spaced(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    (0..count)
        .map(|i| {
            if i == 0 {
                lo
            } else if i == count - 1 {
                hi
            } else {
                let t = i as f64 / (count - 1) as f64;
                (llo + t * (lhi - llo)).exp()
            }
        })
        .collect()
}

/// Parse one `--grid` occurrence: `axis` or `axis:lo:hi:count`.
pub fn parse_grid_axis(text: &str) -> Result<GridAxis> {
    let parts: Vec<&str> = text.split(':').collect();
    let bad = |detail: String| Error::InvalidArgument(format!("grid '{text}': {detail}"));
    let axis = {
        let head = parts[0];
        if head.len() != 1 || !"cms".contains(head) {
            return Err(bad(format!("axis must be one of c, m, s, got '{head}'")));
        }
        head.chars().next().unwrap()
    };
    let (lo, hi, count) = match parts.len() {
        1 => (DEFAULT_AXIS_LO, DEFAULT_AXIS_HI, DEFAULT_AXIS_COUNT),
        4 => {
            let lo: f64 = parts[1]
                .parse()
                .map_err(|_| bad(format!("bad lower bound '{}'", parts[1])))?;
            let hi: f64 = parts[2]
                .parse()
                .map_err(|_| bad(format!("bad upper bound '{}'", parts[2])))?;
            let count: usize = parts[3]
                .parse()
                .map_err(|_| bad(format!("bad count '{}'", parts[3])))?;
            (lo, hi, count)
        }
        _ => return Err(bad("expected axis or axis:lo:hi:count".into())),
    };
    if !(lo.is_finite() && hi.is_finite()) || lo <= 0.0 || hi <= 0.0 {
        return Err(bad("bounds must be positive (log-spaced axis)".into()));
    }
    if count == 0 {
        return Err(bad("count must be at least 1".into()));
    }
    Ok(GridAxis {
        axis,
        values: log_spaced(lo, hi, count),
    })
}

/// Cross the swept axes with the fixed values into a full multiplier grid.
pub fn build_grid(
    axes: &[GridAxis],
    fixed: (f64, f64, f64),
) -> Result<Vec<Multipliers>> {
    let mut per_axis: [Option<&[f64]>; 3] = [None, None, None];
    for a in axes {
        let slot = match a.axis {
            'c' => 0,
            'm' => 1,
            's' => 2,
            _ => unreachable!("axis validated at parse"),
        };
        if per_axis[slot].is_some() {
            return Err(Error::InvalidArgument(format!(
                "axis '{}' given more than once",
                a.axis
            )));
        }
        per_axis[slot] = Some(&a.values);
    }
    let fixed = [vec![fixed.0], vec![fixed.1], vec![fixed.2]];
    let vals = |i: usize| per_axis[i].unwrap_or(&fixed[i]);
    let mut grid = Vec::new();
    for &gc in vals(0) {
        for &gm in vals(1) {
            for &gs in vals(2) {
                grid.push(Multipliers::new(gc, gm, gs)?);
            }
        }
    }
    Ok(grid)
}

fn cmd_sweep(args: SweepArgs) -> Result<i32> {
    let spec = resolve_model(&args.model)?;
    let axes = args
        .grid
        .iter()
        .map(|g| parse_grid_axis(g))
        .collect::<Result<Vec<_>>>()?;
    let grid = build_grid(&axes, (args.gamma_c, args.gamma_m, args.gamma_s))?;
    let opts = SweepOptions {
        plan: plan_options(args.tol_inner, args.tol_outer, args.seed),
        jobs: args.jobs,
    };
    log::info!("sweeping {} grid points with {} jobs", grid.len(), opts.jobs);
    let outcome = sweep(&spec, &grid, &opts)?;
    write_boundary_csv(&outcome.points, args.units, &args.out)?;
    log::info!("boundary written to {}", args.out.display());
    println!(
        "points={} infeasible={} gamma_c_zero_feasible_fraction={:.3}",
        outcome.points.len(),
        outcome.num_infeasible,
        outcome.frac_combined_loose
    );
    Ok(0)
}

/// Write boundary points to CSV. Column order is fixed; floats carry 17
/// significant digits; only rate and information columns are converted when
/// bit units are selected (multiplier prices stay per-nat).
pub fn write_boundary_csv(points: &[BoundaryPoint], units: Units, path: &Path) -> Result<()> {
    let mut out = String::from(
        "gamma_c,gamma_m,gamma_s,r_m,r_s,i_c,i_m,i_s,distortion,lagrangian,regime,converged,iterations\n",
    );
    let s = rate_scale(units);
    for p in points {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            fmt_f64(p.mult.gamma_c()),
            fmt_f64(p.mult.gamma_m()),
            fmt_f64(p.mult.gamma_s()),
            fmt_f64(p.r_m * s),
            fmt_f64(p.r_s * s),
            fmt_f64(p.i_c * s),
            fmt_f64(p.i_m * s),
            fmt_f64(p.i_s * s),
            fmt_f64(p.distortion),
            fmt_f64(p.lagrangian),
            p.regime_label(),
            p.converged,
            p.iterations
        );
    }
    std::fs::write(path, out).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })
}

/// One parsed boundary CSV row, exactly as written.
#[derive(Debug, Clone, PartialEq, serde::Deserialize)]
pub struct SweepRow {
    pub gamma_c: f64,
    pub gamma_m: f64,
    pub gamma_s: f64,
    pub r_m: f64,
    pub r_s: f64,
    pub i_c: f64,
    pub i_m: f64,
    pub i_s: f64,
    pub distortion: f64,
    pub lagrangian: f64,
    pub regime: String,
    pub converged: bool,
    pub iterations: u64,
}

/// Read a boundary CSV back; numeric values round-trip exactly.
pub fn read_boundary_csv(path: &Path) -> Result<Vec<SweepRow>> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        path: path.display().to_string(),
        detail: e.to_string(),
    })?;
    reader
        .deserialize()
        .map(|row| {
            row.map_err(|e| Error::Parse {
                path: path.display().to_string(),
                detail: e.to_string(),
            })
        })
        .collect()
}
