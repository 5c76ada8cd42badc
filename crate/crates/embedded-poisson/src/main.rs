use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use embedded_poisson::error::Error;
use embedded_poisson::experiment::{
    run_contours, run_convergence, run_decompose1d, run_solve, run_sweep, run_theta_map,
    validate, CommandKind, ExperimentConfig,
};

/// Batch experiment runner for the embedded-boundary Poisson solver.
#[derive(Parser)]
#[command(name = "embedded-poisson", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct CommonArgs {
    /// JSON config file; explicit flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// case1d | case2d | case2d-uniform | case3d
    #[arg(long)]
    case: Option<String>,
    /// linear | quadratic
    #[arg(long)]
    scheme: Option<String>,
    /// Quadratic-scheme fallback at trapped nodes (default true).
    #[arg(long)]
    fallback: Option<bool>,
    /// exact | sampled | calibrated | scaled1d
    #[arg(long)]
    rhs: Option<String>,
    /// Particle partition level for sampled/calibrated modes.
    #[arg(long)]
    level: Option<u32>,
    /// Nodes per axis; repeat for a refinement list.
    #[arg(long)]
    nodes: Vec<usize>,
    /// dense | banded | cg | bicgstab (default picks by dimension)
    #[arg(long)]
    solver: Option<String>,
    /// Relative residual tolerance (default 1e-13).
    #[arg(long)]
    tol: Option<f64>,
    /// Interface half-width for case1d (default 0.3156).
    #[arg(long)]
    boundary_1d: Option<f64>,
    /// θ-grid resolution for contours.
    #[arg(long)]
    resolution: Option<usize>,
    /// Output directory (default ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv | json
    #[arg(long)]
    format: Option<String>,
}

impl CommonArgs {
    fn into_config(self) -> Result<ExperimentConfig, Error> {
        let flags = ExperimentConfig {
            case: self.case,
            scheme: self.scheme,
            fallback: self.fallback,
            rhs: self.rhs,
            level: self.level,
            nodes: if self.nodes.is_empty() {
                None
            } else {
                Some(self.nodes)
            },
            solver: self.solver,
            tol: self.tol,
            max_iterations: None,
            boundary_1d: self.boundary_1d,
            resolution: self.resolution,
            out: self.out,
            format: self.format,
        };
        Ok(match &self.config {
            Some(path) => flags.over(ExperimentConfig::from_json_file(path)?),
            None => flags,
        })
    }
}

#[derive(Subcommand)]
enum Command {
    /// Solve one mesh; writes the ξ/τ field and a summary JSON.
    Solve(CommonArgs),
    /// Refinement study; writes (n, L1, order, Linf, order) rows.
    Convergence(CommonArgs),
    /// Leading-coefficient comparison contours over (θx, θy).
    Contours(CommonArgs),
    /// θ sweep of the left-boundary error component.
    Sweep(CommonArgs),
    /// 1-D error decomposition ξ ≈ ξL + ξR + ξin.
    Decompose1d(CommonArgs),
    /// Near-boundary θ scatter data.
    #[command(name = "theta-map")]
    ThetaMap(CommonArgs),
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Solve(args) => {
            let plan = validate(&args.into_config()?, CommandKind::Solve)?;
            let s = run_solve(&plan)?;
            println!(
                "interior={} near_boundary={} fallbacks={} L1={:.6e} Linf={:.6e} residual={:.3e}",
                s.n_interior, s.n_near_boundary, s.fallback_count, s.l1, s.linf, s.residual
            );
        }
        Command::Convergence(args) => {
            let plan = validate(&args.into_config()?, CommandKind::Convergence)?;
            for r in run_convergence(&plan)? {
                let fmt = |o: Option<f64>| o.map_or("  -- ".into(), |v| format!("{v:5.2}"));
                println!(
                    "n={:<5} L1={:.6e} order={} Linf={:.6e} order={}",
                    r.n,
                    r.l1,
                    fmt(r.l1_order),
                    r.linf,
                    fmt(r.linf_order)
                );
            }
        }
        Command::Contours(args) => {
            let plan = validate(&args.into_config()?, CommandKind::Contours)?;
            let rows = run_contours(&plan)?;
            println!("contours: {rows} rows");
        }
        Command::Sweep(args) => {
            let plan = validate(&args.into_config()?, CommandKind::Sweep)?;
            let argmax = run_sweep(&plan)?;
            println!("argmax_theta={argmax:.4}");
        }
        Command::Decompose1d(args) => {
            let plan = validate(&args.into_config()?, CommandKind::Decompose1d)?;
            let max_resid = run_decompose1d(&plan)?;
            println!("max|xi - (xi_L+xi_R+xi_in)| = {max_resid:.6e}");
        }
        Command::ThetaMap(args) => {
            let plan = validate(&args.into_config()?, CommandKind::ThetaMap)?;
            let rows = run_theta_map(&plan)?;
            println!("theta-map: {rows} rows");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::NonConvergence { .. } | Error::Singular(_) => ExitCode::from(3),
                _ => ExitCode::from(2),
            }
        }
    }
}
