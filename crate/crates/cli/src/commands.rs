use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde::{Deserialize, Serialize};
use sobomos_core::extract::require_in_ellipsoid;
use sobomos_core::inner::required_degree;
use sobomos_core::kernel::{compile_kernel_pop, solve_kernel_pop, KernelPop, PeriodicKernel};
use sobomos_core::sdp::SolverOptions;
use sobomos_core::{
    atoms_to_functions, build_inner, build_outer_with, extract_atoms_over, inner_membership,
    lattice, outer_membership, reference_moments_cached, solve_inner, solve_outer_with,
    Coordinates, ExtractOptions, FourierPolynomial, FreqIndex, MomentVector, Monomial,
    RelaxationOptions, SobolevSpace,
};

use crate::problem::ProblemFile;
use crate::report::{
    atoms_out, extraction_out, moments_out, sig, solver_stats, write_function_csv, write_json,
    write_levels_csv, Level, RunResult,
};
use crate::CliError;

pub const DEFAULT_SEED: u64 = 0x5eed;
pub const DEFAULT_SAMPLES: u64 = 100_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Command {
    SolveOuter,
    SolveInner,
    SolveKernel,
    Certify,
    SampleReference,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::SolveOuter => "solve-outer",
            Command::SolveInner => "solve-inner",
            Command::SolveKernel => "solve-kernel",
            Command::Certify => "certify",
            Command::SampleReference => "sample-reference",
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: Command,
    pub problem: PathBuf,
    pub r: usize,
    pub rho: Option<u32>,
    pub tol: f64,
    pub seed: u64,
    pub samples: u64,
    pub out: Option<PathBuf>,
    pub ref_cache: Option<PathBuf>,
    pub r_sweep: Option<(usize, usize)>,
    pub dump_sdp: Option<PathBuf>,
    pub grid: Option<usize>,
    pub full_lattice: bool,
    /// Also compute the other bound (inner for solve-outer, outer for solve-inner).
    pub both: bool,
    pub kernel_tol: f64,
    pub moments: Option<PathBuf>,
    pub max_degree: Option<usize>,
    pub csv: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(command: Command, problem: impl Into<PathBuf>) -> Self {
        RunConfig {
            command,
            problem: problem.into(),
            r: 2,
            rho: None,
            tol: 1e-8,
            seed: DEFAULT_SEED,
            samples: DEFAULT_SAMPLES,
            out: None,
            ref_cache: None,
            r_sweep: None,
            dump_sdp: None,
            grid: None,
            full_lattice: false,
            both: false,
            kernel_tol: sobomos_core::kernel::DEFAULT_KERNEL_TOL,
            moments: None,
            max_degree: None,
            csv: None,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.r < 1 {
            return Err(CliError::Input("r must be at least 1".into()));
        }
        if !(self.tol > 0.0 && self.tol <= 1e-2) {
            return Err(CliError::Input(format!(
                "tol must lie in (0, 1e-2], got {}",
                self.tol
            )));
        }
        if let Some((a, b)) = self.r_sweep {
            if a < 1 || a > b {
                return Err(CliError::Input(format!("invalid sweep {a}..{b}")));
            }
        }
        if let Some(0) = self.grid {
            return Err(CliError::Input(
                "grid needs at least one point per axis".into(),
            ));
        }
        Ok(())
    }

    fn levels(&self) -> Vec<usize> {
        match self.r_sweep {
            Some((a, b)) => (a..=b).collect(),
            None => vec![self.r],
        }
    }

    fn final_r(&self) -> usize {
        self.r_sweep.map_or(self.r, |(_, b)| b)
    }

    fn solver(&self) -> SolverOptions {
        SolverOptions::with_tol(self.tol)
    }
}

/// Parses `a..b` (inclusive).
pub fn parse_sweep(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once("..")
        .ok_or_else(|| format!("expected a..b, got {s}"))?;
    let a = a.trim().parse().map_err(|e| format!("{s}: {e}"))?;
    let b = b
        .trim()
        .trim_start_matches('=')
        .parse()
        .map_err(|e| format!("{s}: {e}"))?;
    Ok((a, b))
}

/// Runs one command and writes its outputs.
pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    cfg.validate()?;
    let problem = ProblemFile::load(&cfg.problem)?;
    match cfg.command {
        Command::SolveOuter | Command::SolveInner => {
            let res = solve_hierarchy(cfg, &problem)?;
            emit(cfg, &res)
        }
        Command::SolveKernel => {
            let res = solve_kernel(cfg, &problem)?;
            emit(cfg, &res)
        }
        Command::Certify => {
            let report = certify(cfg, &problem)?;
            write_json(&report, cfg.out.as_deref())
        }
        Command::SampleReference => {
            let refm = sample_reference(cfg, &problem)?;
            write_json(&refm, cfg.out.as_deref())
        }
    }
}

fn emit(cfg: &RunConfig, res: &RunResult) -> Result<(), CliError> {
    write_json(res, cfg.out.as_deref())?;
    if cfg.r_sweep.is_some() {
        let path = cfg
            .csv
            .clone()
            .or_else(|| cfg.out.as_ref().map(|o| o.with_extension("csv")));
        match path {
            Some(p) => write_levels_csv(&res.levels, &p)?,
            None => warn!("degree sweep without --out or --csv: CSV not written"),
        }
    }
    Ok(())
}

fn coordinates(cfg: &RunConfig, obj: &FourierPolynomial<f64>, rho: u32) -> Vec<FreqIndex> {
    let support = obj.poly.variables();
    if cfg.full_lattice || support.is_empty() {
        lattice(obj.space.n(), rho)
    } else {
        support
    }
}

fn ref_cache_dir(cfg: &RunConfig) -> Option<PathBuf> {
    cfg.ref_cache
        .clone()
        .or_else(|| std::env::var_os("SOBOMOS_REF_CACHE").map(PathBuf::from))
}

fn uniform_grid(n: usize, per_axis: usize) -> Vec<Vec<f64>> {
    let mut out = vec![vec![]];
    for _ in 0..n {
        let mut next = Vec::with_capacity(out.len() * per_axis);
        for p in &out {
            for k in 0..per_axis {
                let mut q = p.clone();
                q.push(k as f64 / per_axis as f64);
                next.push(q);
            }
        }
        out = next;
    }
    out
}

fn atom_csv_path(out: &Path, k: usize) -> PathBuf {
    let stem = out.file_stem().and_then(|s| s.to_str()).unwrap_or("result");
    out.with_file_name(format!("{stem}_atom{k}.csv"))
}

fn sdp_dump_path(base: &Path, r: usize, sweep: bool) -> PathBuf {
    if !sweep {
        return base.to_path_buf();
    }
    let stem = base.file_stem().and_then(|s| s.to_str()).unwrap_or("sdp");
    base.with_file_name(format!("{stem}_r{r}.json"))
}

/// `solve-outer` and `solve-inner`, including degree sweeps.
pub fn solve_hierarchy(cfg: &RunConfig, problem: &ProblemFile) -> Result<RunResult, CliError> {
    let start = Instant::now();
    let space = problem.space()?;
    let rho = match cfg.rho {
        Some(r) => r,
        None => problem.default_rho()?,
    };
    let obj = problem.fourier_objective(rho)?;
    let vars = coordinates(cfg, &obj, rho);
    let want_outer = cfg.command == Command::SolveOuter || cfg.both;
    let want_inner = cfg.command == Command::SolveInner || cfg.both;
    let final_r = cfg.final_r();

    let reference = if want_inner {
        let degree = cfg
            .max_degree
            .unwrap_or(required_degree(obj.degree(), final_r));
        Some(reference_moments_cached(
            ref_cache_dir(cfg).as_deref(),
            &space,
            rho,
            &vars,
            degree,
            cfg.samples,
            cfg.seed,
        )?)
    } else {
        None
    };

    let mut res = RunResult::new(cfg.command.name(), problem.kind(), final_r, rho);
    let opts = RelaxationOptions {
        coordinates: Coordinates::Explicit(vars.clone()),
        ..Default::default()
    };
    for r in cfg.levels() {
        let mut level = Level {
            r,
            outer: None,
            inner: None,
            inner_stderr: None,
            flat: None,
        };
        if want_outer {
            let rel = build_outer_with(&obj, r, rho, &opts)?;
            if let Some(base) = &cfg.dump_sdp {
                rel.sdp
                    .dump(&sdp_dump_path(base, r, cfg.r_sweep.is_some()))?;
            }
            let sol = solve_outer_with(&rel, &cfg.solver())?;
            info!(
                "r={r}: outer {:.6e} in {} iterations",
                sol.value, sol.certificate.iterations
            );
            level.outer = Some(sig(sol.value));
            if r == final_r {
                let mut rep = extract_atoms_over(
                    &sol.y,
                    &rel.variables,
                    r,
                    &ExtractOptions::for_solver_tol(cfg.tol),
                )?;
                require_in_ellipsoid(&mut rep, &space)?;
                level.flat = Some(rep.flat);
                res.extraction = Some(extraction_out(&rep));
                if rep.flat {
                    res.outcome = "minimizers".into();
                    res.atoms = atoms_out(&rep, &rel.variables, |a| a.to_string());
                    if let (Some(per_axis), Some(out)) = (cfg.grid, &cfg.out) {
                        let grid = uniform_grid(space.n(), per_axis);
                        for (k, f) in atoms_to_functions(&rep.atoms, &grid).iter().enumerate() {
                            write_function_csv(&grid, f, &atom_csv_path(out, k))?;
                        }
                    }
                }
                res.moments = moments_out(&sol.y);
                res.solver = Some(solver_stats(&sol.certificate));
                res.value = Some(sig(sol.value));
                res.bounds.outer = Some(sig(sol.value));
            }
        }
        if let Some(refm) = &reference {
            let rel = build_inner(&obj, r, rho, refm)?;
            if cfg.dump_sdp.is_some() && !want_outer {
                let base = cfg.dump_sdp.as_ref().unwrap();
                rel.sdp
                    .dump(&sdp_dump_path(base, r, cfg.r_sweep.is_some()))?;
            }
            let sol = solve_inner(&rel, cfg.tol)?;
            info!("r={r}: inner {:.6e} (stderr {:.2e})", sol.value, sol.stderr);
            level.inner = Some(sig(sol.value));
            level.inner_stderr = Some(sig(sol.stderr));
            if r == final_r {
                res.bounds.inner = Some(sig(sol.value));
                res.bounds.inner_stderr = Some(sig(sol.stderr));
                if !want_outer {
                    res.value = Some(sig(sol.value));
                    res.solver = Some(solver_stats(&sol.certificate));
                }
            }
        }
        res.levels.push(level);
    }
    res.timings.total_seconds = start.elapsed().as_secs_f64();
    Ok(res)
}

pub fn solve_kernel(cfg: &RunConfig, problem: &ProblemFile) -> Result<RunResult, CliError> {
    let start = Instant::now();
    let kprob = problem.kernel_problem()?;
    let kernel = PeriodicKernel::new(kprob.space, cfg.kernel_tol)?;
    info!(
        "kernel cutoff R = {}, tail bound {:.2e}",
        kernel.lattice_cutoff, kernel.tail_bound
    );
    let pop: KernelPop<f64> = compile_kernel_pop(&kprob, &kernel)?;
    let final_r = cfg.final_r();
    let mut res = RunResult::new(cfg.command.name(), problem.kind(), final_r, 0);
    for r in cfg.levels() {
        let mut level = Level {
            r,
            outer: None,
            inner: None,
            inner_stderr: None,
            flat: None,
        };
        if r != final_r {
            let sol = solve_outer_with(&pop.relaxation(r)?, &cfg.solver())?;
            level.outer = Some(sig(sol.value));
            res.levels.push(level);
            continue;
        }
        if let Some(base) = &cfg.dump_sdp {
            pop.relaxation(r)?
                .sdp
                .dump(&sdp_dump_path(base, r, cfg.r_sweep.is_some()))?;
        }
        let grid = cfg
            .grid
            .map(|g| uniform_grid(kprob.space.n(), g))
            .unwrap_or_default();
        let sol = solve_kernel_pop(
            &pop,
            r,
            &cfg.solver(),
            &ExtractOptions::for_solver_tol(cfg.tol),
            &grid,
        )?;
        level.outer = Some(sig(sol.value));
        level.flat = Some(sol.extraction.flat);
        res.value = Some(sig(sol.value));
        res.bounds.outer = Some(sig(sol.value));
        res.extraction = Some(extraction_out(&sol.extraction));
        res.moments = moments_out(&sol.outer.y);
        res.solver = Some(solver_stats(&sol.outer.certificate));
        if sol.extraction.flat {
            res.outcome = "minimizers".into();
            res.atoms = atoms_out(&sol.extraction, &pop.variables, |a| {
                format!("w{}", a.coords()[0] + 1)
            });
            for (atom, w) in res.atoms.iter_mut().zip(&sol.coefficients) {
                atom.values_at_points = kprob
                    .points
                    .iter()
                    .map(|x| pop.representer(w, x).map(sig))
                    .collect::<Result<_, _>>()?;
            }
            if let Some(out) = &cfg.out {
                for (k, f) in sol.functions.iter().enumerate() {
                    write_function_csv(&grid, f, &atom_csv_path(out, k))?;
                }
            }
        }
        res.levels.push(level);
    }
    res.timings.total_seconds = start.elapsed().as_secs_f64();
    Ok(res)
}

/// Reads a moment vector from a plain map, a list of pairs, or any object
/// with a `moments` field (such as a results file).
pub fn load_moments(path: &Path) -> Result<MomentVector<f64>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let value = match value.get("moments") {
        Some(v) => v.clone(),
        None => value,
    };
    let pairs: Vec<(String, f64)> = match value {
        serde_json::Value::Object(map) => map
            .into_iter()
            .map(|(k, v)| {
                v.as_f64()
                    .map(|x| (k.clone(), x))
                    .ok_or_else(|| CliError::Input(format!("moment {k} is not a number")))
            })
            .collect::<Result<_, _>>()?,
        other => serde_json::from_value(other)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?,
    };
    let mut entries = Vec::with_capacity(pairs.len());
    for (k, v) in pairs {
        let m: Monomial = k.parse()?;
        entries.push((m, v));
    }
    Ok(MomentVector::from_entries(entries))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OuterVerdict {
    /// `pass` or `fail`.
    pub verdict: String,
    pub min_eigenvalue_moment: f64,
    pub min_eigenvalue_localizing: f64,
    /// `moment` or `localizing` for a failing test.
    pub violated_block: Option<String>,
    /// Coefficients of a linear functional negative at `y` and nonnegative
    /// on the outer cone.
    pub separating_functional: Vec<(String, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InnerVerdict {
    /// `pass` or `inconclusive`.
    pub verdict: String,
    pub residual: Option<f64>,
    pub allowance: Option<f64>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub r: usize,
    pub rho: u32,
    pub outer: OuterVerdict,
    pub inner: InnerVerdict,
}

/// The PSD test for `C^out_{r,ρ}` over the full `|a|_∞ ≤ ρ` lattice.
pub fn certify_outer(
    y: &MomentVector<f64>,
    space: SobolevSpace,
    r: usize,
    rho: u32,
) -> Result<OuterVerdict, CliError> {
    let vars = lattice(space.n(), rho);
    let scale = y.entries().values().fold(1.0f64, |m, v| m.max(v.abs()));
    let res = outer_membership(y, space, &vars, r, 1e-9 * scale)?;
    let (violated_block, separating_functional) = match &res.separating {
        Some((b, ell)) => (
            Some(if *b == 0 { "moment" } else { "localizing" }.to_string()),
            ell.terms()
                .iter()
                .map(|(m, c)| (m.to_string(), sig(*c)))
                .collect(),
        ),
        None => (None, vec![]),
    };
    Ok(OuterVerdict {
        verdict: if res.pass { "pass" } else { "fail" }.into(),
        min_eigenvalue_moment: sig(res.min_eigenvalues[0]),
        min_eigenvalue_localizing: sig(res.min_eigenvalues[1]),
        violated_block,
        separating_functional,
    })
}

pub fn certify(cfg: &RunConfig, problem: &ProblemFile) -> Result<CertifyReport, CliError> {
    let path = cfg
        .moments
        .as_ref()
        .ok_or_else(|| CliError::Input("certify needs --moments".into()))?;
    let y = load_moments(path)?;
    let space = problem.space()?;
    let rho = match cfg.rho {
        Some(r) => r,
        None => problem.default_rho()?,
    };
    let outer = certify_outer(&y, space, cfg.r, rho)?;
    let vars = lattice(space.n(), rho);
    let inner = match reference_moments_cached(
        ref_cache_dir(cfg).as_deref(),
        &space,
        rho,
        &vars,
        4 * cfg.r,
        cfg.samples,
        cfg.seed,
    )
    .and_then(|refm| inner_membership(&y, &refm, cfg.r, cfg.tol))
    {
        Ok(m) => InnerVerdict {
            verdict: if m.pass { "pass" } else { "inconclusive" }.into(),
            residual: Some(sig(m.residual)),
            allowance: Some(sig(m.allowance)),
            note: None,
        },
        Err(e @ sobomos_core::Error::MissingMoments(_)) => return Err(e.into()),
        Err(e) => InnerVerdict {
            verdict: "inconclusive".into(),
            residual: None,
            allowance: None,
            note: Some(e.to_string()),
        },
    };
    Ok(CertifyReport {
        r: cfg.r,
        rho,
        outer,
        inner,
    })
}

pub fn sample_reference(
    cfg: &RunConfig,
    problem: &ProblemFile,
) -> Result<sobomos_core::ReferenceMoments, CliError> {
    let space = problem.space()?;
    let rho = match cfg.rho {
        Some(r) => r,
        None => problem.default_rho()?,
    };
    let degree = match cfg.max_degree {
        Some(d) => d,
        None => {
            let d = problem
                .fourier_objective(rho)
                .map(|p| p.degree())
                .unwrap_or(2);
            required_degree(d, cfg.final_r())
        }
    };
    Ok(reference_moments_cached(
        ref_cache_dir(cfg).as_deref(),
        &space,
        rho,
        &lattice(space.n(), rho),
        degree,
        cfg.samples,
        cfg.seed,
    )?)
}
