use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use anisostokes::config::{ConfigError, ExperimentConfig, ProblemKind};
use anisostokes::experiments::{run, Experiment, ExperimentError};
use anisostokes::fem::PressureMode;

#[derive(Parser)]
#[command(name = "anisostokes", version, about = "Anisotropic Stokes and Navier-Stokes experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// JSON report path; tables go next to it as CSV.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Single-threaded, reproducible reductions.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Number of uniform refinements (overrides mesh.refinements).
    #[arg(long, global = true)]
    refine: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pressure_mode: Option<Mode>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Continuous,
    Broken,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    Transmission,
    Dirichlet,
    Neumann,
    Mixed,
}

#[derive(Subcommand)]
enum Command {
    /// Symmetry, ellipticity, principal-symbol and Korn checks of the tensor.
    TensorCheck,
    /// Jump, duality, kernel and Green identities of the layer potentials.
    Identities,
    /// Boundary-value problems, cross-checked between solution paths.
    Bvp {
        #[arg(long, value_enum)]
        kind: Option<Kind>,
    },
    /// Picard iteration for the Navier-Stokes system.
    Ns {
        #[arg(long)]
        tol: Option<f64>,
        #[arg(long)]
        maxit: Option<usize>,
        #[arg(long)]
        theta: Option<f64>,
    },
    /// Discrete inf-sup constant on every refinement level.
    Infsup,
    /// Manufactured-solution convergence table.
    Converge,
    /// Self-convergence of the potentials under growing truncation radius.
    Truncation,
}

fn exit_for(err: &anyhow::Error) -> u8 {
    let config = err.chain().any(|e| {
        e.downcast_ref::<ConfigError>().is_some()
            || matches!(e.downcast_ref::<ExperimentError>(), Some(ExperimentError::Config(_) | ExperimentError::Usage(_)))
    });
    if config {
        2
    } else {
        1
    }
}

fn configure(cli: &Cli) -> anyhow::Result<(Experiment, ExperimentConfig)> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p).with_context(|| format!("configuration {}", p.display()))?,
        None => ExperimentConfig::default(),
    };
    if let Some(k) = cli.refine {
        cfg.mesh.refinements = k;
    }
    if let Some(m) = cli.pressure_mode {
        cfg.solver.pressure_mode = match m {
            Mode::Continuous => PressureMode::Continuous,
            Mode::Broken => PressureMode::Broken,
        };
    }
    let exp = match &cli.command {
        Command::TensorCheck => Experiment::TensorCheck,
        Command::Identities => Experiment::Identities,
        Command::Bvp { kind } => Experiment::Bvp(match kind {
            None => cfg.problem.kind,
            Some(Kind::Transmission) => ProblemKind::Transmission,
            Some(Kind::Dirichlet) => ProblemKind::Dirichlet,
            Some(Kind::Neumann) => ProblemKind::Neumann,
            Some(Kind::Mixed) => ProblemKind::Mixed,
        }),
        Command::Ns { tol, maxit, theta } => {
            cfg.solver.tol = tol.unwrap_or(cfg.solver.tol);
            cfg.solver.maxit = maxit.unwrap_or(cfg.solver.maxit);
            cfg.solver.theta = theta.unwrap_or(cfg.solver.theta);
            Experiment::NavierStokes
        }
        Command::Infsup => Experiment::InfSup,
        Command::Converge => Experiment::Converge,
        Command::Truncation => Experiment::Truncation,
    };
    cfg.validate()?;
    Ok((exp, cfg))
}

fn main_inner(cli: Cli) -> anyhow::Result<bool> {
    let (exp, cfg) = configure(&cli)?;
    if cli.deterministic {
        rayon::ThreadPoolBuilder::new().num_threads(1).build_global().context("single-threaded pool")?;
    }
    log::info!("running {}", exp.name());
    let report = run(exp, &cfg, cli.deterministic)?;
    if let Some(path) = cli.out.as_ref().or(cfg.output.report.as_ref()) {
        print!("{}", report.summary());
        for p in report.write(path)? {
            log::info!("wrote {}", p.display());
        }
    } else {
        // Keep stdout pure JSON.
        eprint!("{}", report.summary());
        println!("{}", report.to_json()?);
    }
    Ok(report.passed())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_for(&e))
        }
    }
}
