use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sobomos_core::{ExtractionReport, FreqIndex, MomentVector, SdpSolution};

use crate::CliError;

/// Rounds to 12 significant digits.
pub fn sig(v: f64) -> f64 {
    if !v.is_finite() || v == 0.0 {
        return v;
    }
    format!("{v:.11e}").parse().unwrap_or(v)
}

/// Text form for CSV cells: 12 significant digits, exponent form for tiny
/// or huge magnitudes.
pub fn fmt_sig(v: f64) -> String {
    let x = sig(v);
    if x != 0.0 && !(1e-4..1e12).contains(&x.abs()) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub outer: Option<f64>,
    pub inner: Option<f64>,
    pub inner_stderr: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomOut {
    pub weight: f64,
    pub coefficients: Vec<(String, f64)>,
    /// `f(x_j)` at the problem's evaluation points (kernel problems).
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub values_at_points: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractionOut {
    pub flat: bool,
    pub rank: usize,
    pub rank_lower: usize,
    pub residual: f64,
    pub diagnostics: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub status: String,
    pub iterations: usize,
    pub objective: f64,
    pub dual_objective: f64,
    pub gap: f64,
    pub primal_residual: f64,
    pub dual_residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub r: usize,
    pub outer: Option<f64>,
    pub inner: Option<f64>,
    pub inner_stderr: Option<f64>,
    pub flat: Option<bool>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub total_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub command: String,
    pub problem: String,
    pub r: usize,
    pub rho: u32,
    pub status: String,
    pub value: Option<f64>,
    /// `minimizers` when atoms were extracted, `bound_only` otherwise.
    pub outcome: String,
    pub bounds: Bounds,
    pub extraction: Option<ExtractionOut>,
    pub atoms: Vec<AtomOut>,
    pub moments: Vec<(String, f64)>,
    pub levels: Vec<Level>,
    pub solver: Option<SolverStats>,
    pub timings: Timings,
}

impl RunResult {
    pub fn new(command: &str, problem: &str, r: usize, rho: u32) -> Self {
        RunResult {
            command: command.into(),
            problem: problem.into(),
            r,
            rho,
            status: "optimal".into(),
            value: None,
            outcome: "bound_only".into(),
            bounds: Bounds::default(),
            extraction: None,
            atoms: vec![],
            moments: vec![],
            levels: vec![],
            solver: None,
            timings: Timings::default(),
        }
    }
}

pub fn solver_stats(s: &SdpSolution<f64>) -> SolverStats {
    SolverStats {
        status: serde_json::to_value(s.status)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default(),
        iterations: s.iterations,
        objective: sig(s.objective),
        dual_objective: sig(s.dual_objective),
        gap: sig(s.gap),
        primal_residual: sig(s.primal_residual),
        dual_residual: sig(s.dual_residual),
    }
}

pub fn moments_out(y: &MomentVector<f64>) -> Vec<(String, f64)> {
    y.entries()
        .iter()
        .map(|(m, v)| (m.to_string(), sig(*v)))
        .collect()
}

pub fn extraction_out(rep: &ExtractionReport<f64>) -> ExtractionOut {
    ExtractionOut {
        flat: rep.flat,
        rank: rep.rank,
        rank_lower: rep.rank_lower,
        residual: sig(rep.residual),
        diagnostics: rep.diagnostics.clone(),
    }
}

/// Atoms listed over `vars`, with `label` naming each coordinate.
pub fn atoms_out(
    rep: &ExtractionReport<f64>,
    vars: &[FreqIndex],
    label: impl Fn(&FreqIndex) -> String,
) -> Vec<AtomOut> {
    rep.atoms
        .iter()
        .map(|a| AtomOut {
            weight: sig(a.weight),
            coefficients: vars
                .iter()
                .map(|v| (label(v), sig(a.point.get(v))))
                .collect(),
            values_at_points: vec![],
        })
        .collect()
}

pub fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Input(e.to_string()))?;
    match out {
        Some(p) => std::fs::write(p, text + "\n")
            .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?,
        None => {
            let mut out = std::io::stdout().lock();
            match writeln!(out, "{text}") {
                Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => {
                    return Err(CliError::Input(e.to_string()))
                }
                _ => {}
            }
        }
    }
    Ok(())
}

pub fn write_levels_csv(levels: &[Level], path: &Path) -> Result<(), CliError> {
    let opt = |v: Option<f64>| v.map(fmt_sig).unwrap_or_default();
    let mut f = std::fs::File::create(path)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    let mut text = String::from("r,outer,inner,inner_stderr,flat\n");
    for l in levels {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            l.r,
            opt(l.outer),
            opt(l.inner),
            opt(l.inner_stderr),
            l.flat.map(|b| b.to_string()).unwrap_or_default()
        ));
    }
    f.write_all(text.as_bytes())
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

/// One `x,f` table per atom (`x1,...,xn,f` when `n > 1`).
pub fn write_function_csv(grid: &[Vec<f64>], values: &[f64], path: &Path) -> Result<(), CliError> {
    let n = grid.first().map_or(1, Vec::len);
    let mut text = if n == 1 {
        String::from("x,f\n")
    } else {
        let cols: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        format!("{},f\n", cols.join(","))
    };
    for (x, v) in grid.iter().zip(values) {
        let xs: Vec<String> = x.iter().map(|c| fmt_sig(*c)).collect();
        text.push_str(&format!("{},{}\n", xs.join(","), fmt_sig(*v)));
    }
    std::fs::write(path, text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}
