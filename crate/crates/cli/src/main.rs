use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sobomos::commands::{parse_sweep, DEFAULT_SAMPLES, DEFAULT_SEED};
use sobomos::{run, Command, RunConfig};

#[derive(Parser)]
#[command(
    name = "sobomos",
    version,
    about = "Moment-SOS bounds for polynomial problems on periodic Sobolev balls"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Lower bound from the outer hierarchy, with minimizer extraction.
    SolveOuter(Common),
    /// Upper bound from the inner hierarchy.
    SolveInner(Common),
    /// Point-evaluation problem through the reproducing kernel.
    SolveKernel(Common),
    /// Test a moment vector against the outer and inner approximations.
    Certify(Common),
    /// Estimate reference moments and write them out.
    SampleReference(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    problem: PathBuf,
    #[arg(long, default_value_t = 2)]
    r: usize,
    #[arg(long)]
    rho: Option<u32>,
    #[arg(long, default_value_t = 1e-8)]
    tol: f64,
    #[arg(long, default_value_t = DEFAULT_SEED)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_SAMPLES)]
    samples: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = "SOBOMOS_REF_CACHE")]
    ref_cache: Option<PathBuf>,
    /// Inclusive range of orders, e.g. `2..4`.
    #[arg(long, value_parser = parse_sweep)]
    r_sweep: Option<(usize, usize)>,
    #[arg(long)]
    dump_sdp: Option<PathBuf>,
    /// Grid points per axis for sampling extracted functions.
    #[arg(long)]
    grid: Option<usize>,
    /// Use every coordinate with |a| <= rho instead of the objective's support.
    #[arg(long)]
    full_lattice: bool,
    /// Compute both the outer and the inner bound.
    #[arg(long)]
    both: bool,
    #[arg(long, default_value_t = sobomos_core::kernel::DEFAULT_KERNEL_TOL)]
    kernel_tol: f64,
    /// Moment vector for `certify`.
    #[arg(long)]
    moments: Option<PathBuf>,
    #[arg(long)]
    max_degree: Option<usize>,
    /// CSV destination for degree sweeps.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (command, c) = match cli.command {
        Cmd::SolveOuter(c) => (Command::SolveOuter, c),
        Cmd::SolveInner(c) => (Command::SolveInner, c),
        Cmd::SolveKernel(c) => (Command::SolveKernel, c),
        Cmd::Certify(c) => (Command::Certify, c),
        Cmd::SampleReference(c) => (Command::SampleReference, c),
    };
    let cfg = RunConfig {
        command,
        problem: c.problem,
        r: c.r,
        rho: c.rho,
        tol: c.tol,
        seed: c.seed,
        samples: c.samples,
        out: c.out,
        ref_cache: c.ref_cache,
        r_sweep: c.r_sweep,
        dump_sdp: c.dump_sdp,
        grid: c.grid,
        full_lattice: c.full_lattice,
        both: c.both,
        kernel_tol: c.kernel_tol,
        moments: c.moments,
        max_degree: c.max_degree,
        csv: c.csv,
    };
    match run(&cfg) {
        Ok(()) => ExitCode::from(sobomos::EXIT_OK as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
