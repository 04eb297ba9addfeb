//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;
use sobomos::commands::certify_outer;
use sobomos_core::extract::{check_flat, extract_atoms, ExtractOptions};
use sobomos_core::inner::required_degree;
use sobomos_core::linalg::min_eigenvalue;
use sobomos_core::sdp::{Block, SolveStatus, SolverOptions, Triplet};
use sobomos_core::{
    build_inner, build_outer, enumerate_monomials, estimate_reference_moments, lattice,
    localizing_matrix, moment_matrix, moments, solve, solve_inner, solve_outer, weight, Atom,
    AtomicMeasure, CoefficientPoint, FourierPolynomial, FreqIndex, IndexSet, Monomial, Polynomial,
    SdpProblem, SobolevSpace,
};

const PI: f64 = std::f64::consts::PI;

// pinned tolerances
const VALUE_TOL: f64 = 1e-6;
const ATOM_TOL: f64 = 1e-4;
const KERNEL_TOL: f64 = 1e-6;
const FSTAR_TOL: f64 = 1e-3;
const SOLVER_TOL: f64 = 1e-8;
const PSD_TOL: f64 = 1e-9;
const ROUND_TRIP_TOL: f64 = 1e-6;
const ORACLE_TOL: f64 = 1e-4;

type Outcome = Result<String, String>;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sobomos"))
}

fn problems() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../problems")
}

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn run_cli(args: &[&str]) -> Result<(Value, Duration), String> {
    let start = Instant::now();
    let out = bin().args(args).output().map_err(|e| e.to_string())?;
    let took = start.elapsed();
    if !out.status.success() {
        return Err(format!(
            "exit {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    let v = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
    Ok((v, took))
}

fn coefficient(atom: &Value, key: &str) -> f64 {
    atom["coefficients"]
        .as_array()
        .into_iter()
        .flatten()
        .find(|p| p[0] == key)
        .and_then(|p| p[1].as_f64())
        .unwrap_or(0.0)
}

fn sorted_coefficients(v: &Value, key: &str) -> Vec<f64> {
    let mut c: Vec<f64> = v["atoms"]
        .as_array()
        .into_iter()
        .flatten()
        .map(|a| coefficient(a, key))
        .collect();
    c.sort_by(f64::total_cmp);
    c
}

fn harmonic() -> FourierPolynomial<f64> {
    let m = |s: &str| s.parse::<Monomial>().unwrap();
    let p = Polynomial::from_terms([
        (m("[(0);(0);(0);(0)]"), 1.0),
        (m("[(1);(1);(1);(1)]"), 1.0),
        (m("[(1);(1)]"), -0.5),
        (Monomial::one(), 1.0 / 16.0),
    ]);
    FourierPolynomial::new(SobolevSpace::new(1, 0).unwrap(), p).unwrap()
}

fn harmonic_example() -> Outcome {
    let p = problems().join("hspop1.json");
    let (v, took) = run_cli(&[
        "solve-outer",
        "--problem",
        p.to_str().unwrap(),
        "--r",
        "2",
        "--rho",
        "1",
    ])?;
    let value = v["value"].as_f64().ok_or("no value")?;
    check(value.abs() <= VALUE_TOL, format!("value {value:e}"))?;
    let c1 = sorted_coefficients(&v, "(1)");
    check(c1.len() == 2, format!("{} atoms", c1.len()))?;
    check(
        (c1[0] + 0.5).abs() <= ATOM_TOL && (c1[1] - 0.5).abs() <= ATOM_TOL,
        format!("c_1 = {c1:?}"),
    )?;
    for a in v["atoms"].as_array().unwrap() {
        for pair in a["coefficients"].as_array().unwrap() {
            if pair[0] != "(1)" {
                let x = pair[1].as_f64().unwrap();
                check(x.abs() <= ATOM_TOL, format!("{} = {x:e}", pair[0]))?;
            }
        }
    }
    check(took < Duration::from_secs(5), format!("{took:?}"))?;
    Ok(format!(
        "value {value:.2e}, c_1 = {:.6}/{:.6}, {took:.2?}",
        c1[0], c1[1]
    ))
}

fn algebraic_example() -> Outcome {
    let p = problems().join("aspop1.json");
    let (v, took) = run_cli(&[
        "solve-outer",
        "--problem",
        p.to_str().unwrap(),
        "--r",
        "2",
        "--rho",
        "0",
    ])?;
    let value = v["value"].as_f64().ok_or("no value")?;
    check(value.abs() <= VALUE_TOL, format!("value {value:e}"))?;
    let c0 = sorted_coefficients(&v, "(0)");
    let h = 0.5f64.sqrt();
    check(c0.len() == 2, format!("{} atoms", c0.len()))?;
    check(
        (c0[0] + h).abs() <= ATOM_TOL && (c0[1] - h).abs() <= ATOM_TOL,
        format!("c_0 = {c0:?}"),
    )?;
    check(took < Duration::from_secs(5), format!("{took:?}"))?;
    Ok(format!(
        "value {value:.2e}, c_0 = {:.6}/{:.6}, {took:.2?}",
        c0[0], c0[1]
    ))
}

/// `Σ_{|a| ≤ R} 1/(1+a^2)` plus the midpoint tail `2 (π/2 - atan(R + 1/2))`.
fn kernel_diagonal_oracle() -> f64 {
    let r = 1_000_000i64;
    let head: f64 = (1..=r).rev().map(|a| 1.0 / (1.0 + (a * a) as f64)).sum();
    1.0 + 2.0 * head + 2.0 * (PI / 2.0 - (r as f64 + 0.5).atan())
}

fn kernel_example() -> Outcome {
    let oracle = kernel_diagonal_oracle();
    let closed = PI / PI.tanh();
    check(
        (oracle - closed).abs() < 1e-9,
        format!("oracle {oracle} vs closed form {closed}"),
    )?;
    let space = SobolevSpace::new(1, 1).unwrap();
    let kernel = sobomos_core::PeriodicKernel::new(space, sobomos_core::kernel::DEFAULT_KERNEL_TOL)
        .map_err(|e| e.to_string())?;
    let k00 = kernel.eval(&[0.0], &[0.0]).map_err(|e| e.to_string())?;
    check(
        (k00 - oracle).abs() <= KERNEL_TOL,
        format!("k(0,0) {k00} vs oracle {oracle}"),
    )?;

    let p = problems().join("kpop1.json");
    let (v, took) = run_cli(&["solve-kernel", "--problem", p.to_str().unwrap(), "--r", "2"])?;
    let value = v["value"].as_f64().ok_or("no value")?;
    check(value.abs() <= VALUE_TOL, format!("value {value:e}"))?;
    let w = sorted_coefficients(&v, "w1");
    let expected = 2f64.sqrt() / (2.0 * oracle);
    check(w.len() == 2, format!("{} atoms", w.len()))?;
    check(
        (w[0] + expected).abs() <= ATOM_TOL && (w[1] - expected).abs() <= ATOM_TOL,
        format!("w_1 = {w:?}, expected ±{expected}"),
    )?;
    for a in v["atoms"].as_array().unwrap() {
        let f0 = a["values_at_points"][0].as_f64().ok_or("no f*(0)")?;
        check(
            (f0.abs() - 0.5f64.sqrt()).abs() <= FSTAR_TOL,
            format!("f*(0) = {f0}"),
        )?;
    }
    check(took < Duration::from_secs(5), format!("{took:?}"))?;
    Ok(format!("k(0,0) = {k00:.9}, w_1 = ±{:.6}, {took:.2?}", w[1]))
}

fn sandwich() -> Outcome {
    let start = Instant::now();
    let p = harmonic();
    let refm = estimate_reference_moments(
        &p.space,
        1,
        required_degree(p.degree(), 4),
        1_000_000,
        0x5eed,
    )
    .map_err(|e| e.to_string())?;
    let mut rows = Vec::new();
    for r in 2..=4 {
        let o = solve_outer(
            &build_outer(&p, r, 1).map_err(|e| e.to_string())?,
            SOLVER_TOL,
        )
        .map_err(|e| e.to_string())?;
        let i = solve_inner(
            &build_inner(&p, r, 1, &refm).map_err(|e| e.to_string())?,
            SOLVER_TOL,
        )
        .map_err(|e| e.to_string())?;
        rows.push((o.value, i.value, i.stderr));
    }
    let band = |s: f64| 2.0 * SOLVER_TOL + 3.0 * s;
    for k in 0..3 {
        let (o, i, s) = rows[k];
        check(
            o <= i + band(s),
            format!("r={}: outer {o} above inner {i}", k + 2),
        )?;
        if k > 0 {
            let (o0, i0, _) = rows[k - 1];
            check(
                o >= o0 - 2.0 * SOLVER_TOL,
                format!("outer decreased at r={}", k + 2),
            )?;
            check(i <= i0 + band(s), format!("inner increased at r={}", k + 2))?;
        }
    }
    check(
        (0.0..=0.2).contains(&rows[2].1),
        format!("inner at r=4 is {}", rows[2].1),
    )?;
    let took = start.elapsed();
    check(took < Duration::from_secs(120), format!("{took:?}"))?;
    let inner: Vec<String> = rows
        .iter()
        .map(|r| format!("{:.4}±{:.0e}", r.1, r.2))
        .collect();
    Ok(format!(
        "inner {} over r=2..4, outer max {:.1e}, {took:.2?}",
        inner.join(" "),
        rows.iter().map(|r| r.0.abs()).fold(0.0, f64::max)
    ))
}

/// Uniform point of the ellipsoid `Σ w_a c_a^2 ≤ 1`.
fn point_in_ellipsoid(
    rng: &mut ChaCha8Rng,
    space: &SobolevSpace,
    coords: &[FreqIndex],
) -> CoefficientPoint<f64> {
    let z: Vec<f64> = coords
        .iter()
        .map(|_| rng.sample(rand_distr::StandardNormal))
        .collect();
    let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
    let radius = rng.random::<f64>().powf(1.0 / coords.len() as f64);
    CoefficientPoint::from_pairs(coords.iter().zip(&z).map(|(a, v)| {
        let w: f64 = weight(space, a).unwrap();
        (a.clone(), radius * v / norm / w.sqrt())
    }))
}

fn outer_soundness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let mut worst = f64::INFINITY;
    let mut count = 0;
    for n in [1usize, 2] {
        for m in [0u32, 1] {
            for rho in [0u32, 1] {
                for r in [1usize, 2] {
                    let space = SobolevSpace::new(n, m).unwrap();
                    let coords = lattice(n, rho);
                    let set = IndexSet::new(enumerate_monomials(n, 2 * r, rho).unwrap()).unwrap();
                    for _ in 0..7 {
                        let k = rng.random_range(1..=4);
                        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.1..1.0)).collect();
                        let total: f64 = raw.iter().sum();
                        let atoms = raw
                            .iter()
                            .map(|w| Atom {
                                weight: w / total,
                                point: point_in_ellipsoid(&mut rng, &space, &coords),
                            })
                            .collect();
                        let mu = AtomicMeasure::new(atoms).map_err(|e| e.to_string())?;
                        let y = moments(&mu, &set);
                        let mm = moment_matrix(&y, n, r, rho).map_err(|e| e.to_string())?;
                        let lm =
                            localizing_matrix(&y, &space, r, rho).map_err(|e| e.to_string())?;
                        let lo = min_eigenvalue(&mm).min(min_eigenvalue(&lm));
                        worst = worst.min(lo);
                        check(
                            lo >= -PSD_TOL,
                            format!("n={n} m={m} rho={rho} r={r}: min eigenvalue {lo:e}"),
                        )?;
                        let verdict =
                            certify_outer(&y, space, r, rho).map_err(|e| e.to_string())?;
                        check(
                            verdict.verdict == "pass",
                            format!("certify says {}", verdict.verdict),
                        )?;
                        count += 1;
                    }
                }
            }
        }
    }
    check(count >= 100, format!("only {count} measures"))?;
    let took = start.elapsed();
    check(took < Duration::from_secs(60), format!("{took:?}"))?;
    Ok(format!(
        "{count} measures, smallest eigenvalue {worst:.1e}, {took:.2?}"
    ))
}

fn extraction_round_trip() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    let (n, rho, r) = (1usize, 1u32, 2usize);
    let coords = lattice(n, rho);
    let mut count = 0;
    let mut worst = 0.0f64;
    while count < 60 {
        let space = SobolevSpace::new(n, (count % 2) as u32).unwrap();
        let k = rng.random_range(1..=3);
        let mut points: Vec<CoefficientPoint<f64>> = Vec::new();
        while points.len() < k {
            let c = point_in_ellipsoid(&mut rng, &space, &coords);
            let separated = points.iter().all(|q| {
                coords
                    .iter()
                    .map(|a| (q.get(a) - c.get(a)).powi(2))
                    .sum::<f64>()
                    .sqrt()
                    >= 0.2
            });
            if separated {
                points.push(c);
            }
        }
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let atoms: Vec<Atom<f64>> = raw
            .iter()
            .zip(&points)
            .map(|(w, p)| Atom {
                weight: w / total,
                point: p.clone(),
            })
            .collect();
        let mu = AtomicMeasure::new(atoms.clone()).map_err(|e| e.to_string())?;
        let set = IndexSet::new(enumerate_monomials(n, 2 * r, rho).unwrap()).unwrap();
        let y = moments(&mu, &set);
        let opts = ExtractOptions::default();
        let (flat, rank) = check_flat(&y, n, r, rho, opts.rank_tol).map_err(|e| e.to_string())?;
        check(
            flat && rank == k,
            format!("measure {count}: flat {flat}, rank {rank}, atoms {k}"),
        )?;
        let rep = extract_atoms(&y, &space, r, rho, &opts).map_err(|e| e.to_string())?;
        check(
            rep.atoms.len() == k,
            format!(
                "measure {count}: {} atoms recovered of {k}",
                rep.atoms.len()
            ),
        )?;
        for a in &atoms {
            let best = rep
                .atoms
                .iter()
                .map(|b| {
                    let d = coords
                        .iter()
                        .map(|i| (a.point.get(i) - b.point.get(i)).abs())
                        .fold(0.0, f64::max);
                    (d, (a.weight - b.weight).abs())
                })
                .min_by(|x, y| x.0.total_cmp(&y.0))
                .unwrap();
            worst = worst.max(best.0).max(best.1);
            check(
                best.0 <= ROUND_TRIP_TOL && best.1 <= ROUND_TRIP_TOL,
                format!(
                    "measure {count}: point error {:e}, weight error {:e}",
                    best.0, best.1
                ),
            )?;
        }
        count += 1;
    }
    let took = start.elapsed();
    check(took < Duration::from_secs(60), format!("{took:?}"))?;
    Ok(format!(
        "{count} measures, worst error {worst:.1e}, {took:.2?}"
    ))
}

fn tri(var: Option<usize>, row: usize, col: usize, value: f64) -> Triplet<f64> {
    Triplet {
        var,
        row,
        col,
        value,
    }
}

/// `I + Σ x_i A_i ⪰ 0` and `I + Σ x_i B_i ⪰ 0` with traceless `B_i`:
/// strictly feasible at the origin and bounded.
fn random_sdp(rng: &mut ChaCha8Rng) -> SdpProblem<f64> {
    let mut blocks = Vec::new();
    for traceless in [false, true] {
        let mut triplets: Vec<Triplet<f64>> = (0..3).map(|d| tri(None, d, d, 1.0)).collect();
        for v in 0..3 {
            let mut diag = [0.0; 3];
            for r in 0..3 {
                for c in r..3 {
                    let val: f64 = rng.random_range(-1.0..1.0);
                    if r == c {
                        diag[r] = val;
                    } else {
                        triplets.push(tri(Some(v), r, c, val));
                    }
                }
            }
            if traceless {
                let mean = diag.iter().sum::<f64>() / 3.0;
                diag.iter_mut().for_each(|d| *d -= mean);
            }
            for (r, d) in diag.iter().enumerate() {
                triplets.push(tri(Some(v), r, r, *d));
            }
        }
        blocks.push(Block { size: 3, triplets });
    }
    SdpProblem {
        variable_count: 3,
        objective: (0..3).map(|_| rng.random_range(-1.0..1.0)).collect(),
        blocks,
        equalities: vec![],
    }
}

/// Best objective over boundary points `t(d) d`, with `t(d)` the exact
/// distance to the boundary along direction `d`, over a refined angle grid.
fn grid_oracle(p: &SdpProblem<f64>) -> f64 {
    let eval = |th: f64, ph: f64| {
        let d = [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
        let mut t = f64::INFINITY;
        for b in 0..p.blocks.len() {
            let lam = min_eigenvalue(&(p.block_matrix(b, &d) - DMatrix::identity(3, 3)));
            if lam < 0.0 {
                t = t.min(-1.0 / lam);
            }
        }
        t * p.objective_value(&d)
    };
    let (mut best, mut th0, mut ph0) = (f64::INFINITY, 0.0, 0.0);
    for i in 0..=180 {
        for j in 0..360 {
            let (th, ph) = (PI * i as f64 / 180.0, 2.0 * PI * j as f64 / 360.0);
            let v = eval(th, ph);
            if v < best {
                (best, th0, ph0) = (v, th, ph);
            }
        }
    }
    let mut half = 2.0 * PI / 360.0;
    for _ in 0..40 {
        let (c0, c1) = (th0, ph0);
        for i in -10..=10 {
            for j in -10..=10 {
                let (th, ph) = (c0 + half * i as f64 / 10.0, c1 + half * j as f64 / 10.0);
                let v = eval(th, ph);
                if v < best {
                    (best, th0, ph0) = (v, th, ph);
                }
            }
        }
        half *= 0.6;
    }
    best
}

fn sdp_suite() -> Outcome {
    let start = Instant::now();
    let opts = SolverOptions::default();
    let two = SdpProblem {
        variable_count: 1,
        objective: vec![1.0],
        blocks: vec![Block {
            size: 2,
            triplets: vec![
                tri(Some(0), 0, 0, 1.0),
                tri(Some(0), 1, 1, 1.0),
                tri(None, 0, 1, 1.0),
            ],
        }],
        equalities: vec![],
    };
    let s = solve(&two, &opts).map_err(|e| e.to_string())?;
    check(
        s.status == SolveStatus::Optimal && (s.variables[0] - 1.0).abs() < 1e-6,
        format!("2x2: {}", s.variables[0]),
    )?;
    let one = SdpProblem {
        variable_count: 1,
        objective: vec![1.0],
        blocks: vec![Block {
            size: 1,
            triplets: vec![tri(Some(0), 0, 0, 1.0)],
        }],
        equalities: vec![],
    };
    let s = solve(&one, &opts).map_err(|e| e.to_string())?;
    check(
        s.variables[0].abs() < 1e-6,
        format!("1x1: {}", s.variables[0]),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    for k in 0..20 {
        let p = random_sdp(&mut rng);
        let s = solve(&p, &opts).map_err(|e| e.to_string())?;
        check(
            s.status == SolveStatus::Optimal,
            format!("instance {k}: {:?}", s.status),
        )?;
        let o = grid_oracle(&p);
        worst = worst.max((s.objective - o).abs());
        check(
            (s.objective - o).abs() < ORACLE_TOL,
            format!("instance {k}: sdp {} vs grid {o}", s.objective),
        )?;
        let again = solve(&p, &opts).map_err(|e| e.to_string())?;
        check(
            again.variables == s.variables && again.block_duals == s.block_duals,
            format!("instance {k}: rerun differs"),
        )?;
    }
    let took = start.elapsed();
    check(took < Duration::from_secs(60), format!("{took:?}"))?;
    Ok(format!(
        "3 examples, 20 random instances within {worst:.1e} of the grid oracle, {took:.2?}"
    ))
}

fn outer_gap_monotone() -> Outcome {
    let p = harmonic();
    let mut gaps = Vec::new();
    for r in 2..=4 {
        let o = solve_outer(
            &build_outer(&p, r, 1).map_err(|e| e.to_string())?,
            SOLVER_TOL,
        )
        .map_err(|e| e.to_string())?;
        gaps.push(o.value.abs());
    }
    for k in 1..gaps.len() {
        check(
            gaps[k] <= gaps[k - 1] + 2.0 * SOLVER_TOL,
            format!("gaps {gaps:?}"),
        )?;
    }
    Ok(format!(
        "|p_r - p*| = {:.1e}, {:.1e}, {:.1e}",
        gaps[0], gaps[1], gaps[2]
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("harmonic example minimizers", harmonic_example),
        ("algebraic example minimizers", algebraic_example),
        ("kernel example and kernel oracle", kernel_example),
        ("outer/inner sandwich over r=2..4", sandwich),
        ("outer cone soundness on random measures", outer_soundness),
        ("extraction round trip", extraction_round_trip),
        ("sdp solver suite", sdp_suite),
        ("outer gap nonincreasing in r", outer_gap_monotone),
    ];
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("criterion {}: PASS | {name} | {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL | {name} | {detail}", k + 1);
            }
        }
    }
    println!(
        "acceptance: {} of {} criteria pass",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
