//! Reproducing kernel of `H^m(T^n)` and the reduction of point-evaluation
//! problems to polynomial problems over representer coefficients.
//!
//! `k(x, y) = Σ_{|a|_∞ ≤ R} w_a^{-1} cos(2π <a, x - y>)`, with `R` chosen from
//! the tail estimate
//! `Σ_{|a|_∞ > R} w_a^{-1} ≤ 2n 3^{n-1} R^{n-2m} / (2m - n)`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::extract::{extract_atoms_over, ExtractOptions, ExtractionReport};
use crate::index::{FreqIndex, Monomial, DEFAULT_MONOMIAL_CAP};
use crate::model::{IntegrandTerm, Polynomial, SobolevSpace};
use crate::moment::{assemble, solve_outer_with, OuterRelaxation, OuterSolution};
use crate::scalar::{lit, to_f64, Real};
use crate::sdp::SolverOptions;

pub const DEFAULT_KERNEL_TOL: f64 = 1e-7;

/// Steps between exact re-evaluations of the rotating phasor.
const RESYNC: usize = 4096;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicKernel {
    pub space: SobolevSpace,
    pub lattice_cutoff: u64,
    pub tail_bound: f64,
}

impl PeriodicKernel {
    /// Smallest cutoff whose tail estimate is at most `tol`.
    pub fn new(space: SobolevSpace, tol: f64) -> Result<Self> {
        Self::check(&space)?;
        if !(tol > 0.0) {
            return Err(Error::Invalid("kernel tolerance must be positive".into()));
        }
        let (n, s) = Self::exponents(&space);
        let c = 2.0 * n * 3f64.powf(n - 1.0) / s;
        // c R^{-s} ≤ tol
        let mut cutoff = ((c / tol).powf(1.0 / s)).ceil().max(1.0) as u64;
        while cutoff > 1 && Self::tail(&space, cutoff - 1) <= tol {
            cutoff -= 1;
        }
        while Self::tail(&space, cutoff) > tol {
            cutoff += 1;
        }
        Ok(PeriodicKernel {
            space,
            lattice_cutoff: cutoff,
            tail_bound: Self::tail(&space, cutoff),
        })
    }

    pub fn with_cutoff(space: SobolevSpace, cutoff: u64) -> Result<Self> {
        Self::check(&space)?;
        if cutoff == 0 {
            return Err(Error::Invalid("lattice cutoff must be at least 1".into()));
        }
        Ok(PeriodicKernel {
            space,
            lattice_cutoff: cutoff,
            tail_bound: Self::tail(&space, cutoff),
        })
    }

    fn check(space: &SobolevSpace) -> Result<()> {
        if 2 * space.m() as usize <= space.n() {
            return Err(Error::KernelPrecondition {
                n: space.n(),
                m: space.m(),
            });
        }
        Ok(())
    }

    fn exponents(space: &SobolevSpace) -> (f64, f64) {
        let n = space.n() as f64;
        (n, 2.0 * space.m() as f64 - n)
    }

    pub fn tail(space: &SobolevSpace, cutoff: u64) -> f64 {
        let (n, s) = Self::exponents(space);
        2.0 * n * 3f64.powf(n - 1.0) * (cutoff as f64).powf(-s) / s
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let n = self.space.n();
        if x.len() != n || y.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: if x.len() != n { x.len() } else { y.len() },
            });
        }
        let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        Ok(self.eval_diff(&d))
    }

    /// `k` as a function of `x - y`.
    pub fn eval_diff(&self, d: &[f64]) -> f64 {
        let r = self.lattice_cutoff as usize;
        let m = self.space.m() as i32;
        if d.len() == 1 {
            return self.eval_1d(d[0]);
        }
        // per-axis phasors e^{2πi a d_i}, a = -R..=R
        let tables: Vec<Vec<(f64, f64)>> = d.iter().map(|&di| phasors(di, r)).collect();
        let n = d.len();
        let side = 2 * r + 1;
        let mut idx = vec![0usize; n];
        let mut total = 0.0;
        loop {
            let mut norm = 0u64;
            let (mut re, mut im) = (1.0, 0.0);
            for (k, &i) in idx.iter().enumerate() {
                let a = i as i64 - r as i64;
                norm += (a * a) as u64;
                let (c, s) = tables[k][i];
                (re, im) = (re * c - im * s, re * s + im * c);
            }
            total += re / (1.0 + norm as f64).powi(m);
            let mut k = 0;
            loop {
                if k == n {
                    return total;
                }
                idx[k] += 1;
                if idx[k] < side {
                    break;
                }
                idx[k] = 0;
                k += 1;
            }
        }
    }

    fn eval_1d(&self, d: f64) -> f64 {
        let m = self.space.m() as i32;
        let r = self.lattice_cutoff as usize;
        let theta = 2.0 * std::f64::consts::PI * d;
        let (s1, c1) = theta.sin_cos();
        // summed from the small tail terms upward
        let mut total = 0.0;
        let mut a = r;
        while a >= 1 {
            let lo = a.saturating_sub(RESYNC - 1).max(1);
            let (mut s, mut c) = (theta * lo as f64).sin_cos();
            let mut chunk = 0.0;
            for b in lo..=a {
                chunk += c / (1.0 + (b * b) as f64).powi(m);
                (c, s) = (c * c1 - s * s1, s * c1 + c * s1);
            }
            total += chunk;
            a = lo - 1;
        }
        1.0 + 2.0 * total
    }
}

fn phasors(d: f64, r: usize) -> Vec<(f64, f64)> {
    let theta = 2.0 * std::f64::consts::PI * d;
    (0..=2 * r)
        .map(|i| {
            let (s, c) = (theta * (i as f64 - r as f64)).sin_cos();
            (c, s)
        })
        .collect()
}

/// `K_ij = k(x_i, x_j)`. Duplicate points are rejected.
pub fn gram(kernel: &PeriodicKernel, points: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    check_points(kernel, points)?;
    let l = points.len();
    let pairs: Vec<(usize, usize)> = (0..l).flat_map(|i| (i..l).map(move |j| (i, j))).collect();
    let vals: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| kernel.eval(&points[i], &points[j]))
        .collect::<Result<_>>()?;
    let mut k = DMatrix::zeros(l, l);
    for (&(i, j), v) in pairs.iter().zip(vals) {
        k[(i, j)] = v;
        k[(j, i)] = v;
    }
    Ok(k)
}

fn check_points(kernel: &PeriodicKernel, points: &[Vec<f64>]) -> Result<()> {
    if points.is_empty() {
        return Err(Error::Invalid(
            "at least one evaluation point is required".into(),
        ));
    }
    for p in points {
        if p.len() != kernel.space.n() {
            return Err(Error::DimensionMismatch {
                expected: kernel.space.n(),
                found: p.len(),
            });
        }
    }
    for i in 0..points.len() {
        for j in 0..i {
            let same = points[i]
                .iter()
                .zip(&points[j])
                .all(|(a, b)| (a - b).rem_euclid(1.0).min((b - a).rem_euclid(1.0)) < 1e-12);
            if same {
                return Err(Error::Invalid(format!(
                    "evaluation points {j} and {i} coincide on the torus"
                )));
            }
        }
    }
    Ok(())
}

/// `min p(f(x_1), ..., f(x_l))` over `‖f‖_{H^m} ≤ radius`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelProblem {
    pub space: SobolevSpace,
    pub points: Vec<Vec<f64>>,
    /// Terms `coeff · Π_j t_j^{powers_j}` with `t_j = f(x_j)`.
    pub objective: Vec<IntegrandTerm>,
    #[serde(default)]
    pub radius: Option<f64>,
}

impl KernelProblem {
    pub fn radius(&self) -> f64 {
        self.radius.unwrap_or(1.0)
    }
}

/// Coordinate standing for the representer coefficient `w_j`.
pub fn coefficient_var(j: usize) -> FreqIndex {
    FreqIndex::new(vec![j as i32])
}

/// The finite problem in `w ∈ R^l`: objective `p(Kw)` and ball
/// `radius^2 - w^T K w ≥ 0`.
#[derive(Clone, Debug)]
pub struct KernelPop<T> {
    pub kernel: PeriodicKernel,
    pub points: Vec<Vec<f64>>,
    pub gram: DMatrix<f64>,
    pub variables: Vec<FreqIndex>,
    pub objective: Polynomial<T>,
    pub slack: Polynomial<T>,
}

pub fn compile_kernel_pop<T: Real>(
    prob: &KernelProblem,
    kernel: &PeriodicKernel,
) -> Result<KernelPop<T>> {
    if prob.space != kernel.space {
        return Err(Error::Invalid(
            "kernel and problem use different spaces".into(),
        ));
    }
    if !(prob.radius() > 0.0) {
        return Err(Error::Invalid("radius must be positive".into()));
    }
    let k = gram(kernel, &prob.points)?;
    let l = prob.points.len();
    let vars: Vec<FreqIndex> = (0..l).map(coefficient_var).collect();
    let evals: Vec<Polynomial<T>> = (0..l)
        .map(|j| {
            Polynomial::from_terms(
                (0..l).map(|i| (Monomial::var(vars[i].clone()), lit::<T>(k[(i, j)]))),
            )
        })
        .collect();
    let mut objective = Polynomial::zero();
    for term in &prob.objective {
        if term.powers.len() != l {
            return Err(Error::DimensionMismatch {
                expected: l,
                found: term.powers.len(),
            });
        }
        let mut t = Polynomial::constant(lit::<T>(term.coeff));
        for (j, &e) in term.powers.iter().enumerate() {
            if e > 0 {
                t = t.try_mul(&evals[j].pow(e))?;
            }
        }
        objective = &objective + &t;
    }
    let mut slack = Polynomial::constant(lit::<T>(prob.radius() * prob.radius()));
    for i in 0..l {
        for j in 0..l {
            let m = Monomial::var(vars[i].clone()).union(&Monomial::var(vars[j].clone()))?;
            slack.add_term(m, lit::<T>(-k[(i, j)]));
        }
    }
    Ok(KernelPop {
        kernel: kernel.clone(),
        points: prob.points.clone(),
        gram: k,
        variables: vars,
        objective,
        slack,
    })
}

impl<T: Real> KernelPop<T> {
    pub fn relaxation(&self, r: usize) -> Result<OuterRelaxation<T>> {
        assemble(
            &self.variables,
            &self.objective,
            &self.slack,
            r,
            0,
            DEFAULT_MONOMIAL_CAP,
        )
    }

    /// `f(x) = Σ_j w_j k(x, x_j)`.
    pub fn representer(&self, w: &[T], x: &[f64]) -> Result<f64> {
        let mut acc = 0.0;
        for (wj, xj) in w.iter().zip(&self.points) {
            acc += to_f64(*wj) * self.kernel.eval(x, xj)?;
        }
        Ok(acc)
    }
}

#[derive(Clone, Debug)]
pub struct KernelSolution<T: Real> {
    pub value: T,
    pub outer: OuterSolution<T>,
    pub extraction: ExtractionReport<T>,
    /// `w` for each extracted atom.
    pub coefficients: Vec<Vec<T>>,
    /// Representers sampled on the grid, one row per atom.
    pub functions: Vec<Vec<f64>>,
}

pub fn solve_kernel_pop<T: Real>(
    pop: &KernelPop<T>,
    r: usize,
    solver: &SolverOptions,
    extract: &ExtractOptions,
    grid: &[Vec<f64>],
) -> Result<KernelSolution<T>> {
    let rel = pop.relaxation(r)?;
    let outer = solve_outer_with(&rel, solver)?;
    let extraction = extract_atoms_over(&outer.y, &pop.variables, r, extract)?;
    let coefficients: Vec<Vec<T>> = extraction
        .atoms
        .iter()
        .map(|a| pop.variables.iter().map(|v| a.point.get(v)).collect())
        .collect();
    let functions = coefficients
        .par_iter()
        .map(|w| {
            grid.iter()
                .map(|x| pop.representer(w, x))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    Ok(KernelSolution {
        value: outer.value,
        outer,
        extraction,
        coefficients,
        functions,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;

    const PI: f64 = std::f64::consts::PI;

    fn h1() -> SobolevSpace {
        SobolevSpace::new(1, 1).unwrap()
    }

    /// Plain truncated sum, one term at a time.
    fn naive_1d(m: u32, d: f64, r: i64) -> f64 {
        (-r..=r)
            .map(|a| (2.0 * PI * a as f64 * d).cos() / (1.0 + (a * a) as f64).powi(m as i32))
            .sum()
    }

    #[test]
    fn diagonal_matches_closed_form() {
        let k = PeriodicKernel::new(h1(), DEFAULT_KERNEL_TOL).unwrap();
        let v = k.eval(&[0.0], &[0.0]).unwrap();
        let closed = PI / PI.tanh();
        assert!((v - closed).abs() <= k.tail_bound, "{v} vs {closed}");
        assert!((v - 3.153348).abs() < 1e-6);
        let big = naive_1d(1, 0.0, 1_000_000);
        assert!((big - closed).abs() < 3e-6);
    }

    #[test]
    fn antipodal_entry() {
        let k = PeriodicKernel::new(h1(), DEFAULT_KERNEL_TOL).unwrap();
        let g = gram(&k, &[vec![0.0], vec![0.5]]).unwrap();
        // Σ (-1)^a / (1 + a^2) = π / sinh π
        assert!((g[(0, 1)] - PI / PI.sinh()).abs() < 1e-6);
        assert_eq!(g[(0, 1)], g[(1, 0)]);
    }

    #[test]
    fn recurrence_matches_direct_sum() {
        let k = PeriodicKernel::with_cutoff(SobolevSpace::new(1, 2).unwrap(), 5000).unwrap();
        for d in [0.0, 0.013, 0.25, 0.377, 0.9] {
            assert!((k.eval_diff(&[d]) - naive_1d(2, d, 5000)).abs() < 1e-11);
        }
    }

    #[test]
    fn translation_and_symmetry() {
        let k = PeriodicKernel::new(SobolevSpace::new(2, 2).unwrap(), 1e-3).unwrap();
        let pts = vec![vec![0.1, 0.2], vec![0.4, 0.9], vec![0.75, 0.3]];
        let g = gram(&k, &pts).unwrap();
        let shifted: Vec<Vec<f64>> = pts.iter().map(|p| vec![p[0] + 0.31, p[1] - 0.17]).collect();
        let gs = gram(&k, &shifted).unwrap();
        assert!((&g - &gs).amax() < 1e-9);
        assert!((g[(0, 0)] - g[(2, 2)]).abs() < 1e-12);
        assert!(min_eigenvalue(&g) > -1e-9);
        assert_eq!(
            k.eval(&pts[0], &pts[1]).unwrap(),
            k.eval(&pts[1], &pts[0]).unwrap()
        );
    }

    #[test]
    fn tail_bound_covers_doubling() {
        for space in [
            h1(),
            SobolevSpace::new(1, 2).unwrap(),
            SobolevSpace::new(2, 2).unwrap(),
        ] {
            let k = PeriodicKernel::with_cutoff(space, 20).unwrap();
            let k2 = PeriodicKernel::with_cutoff(space, 40).unwrap();
            let d = vec![0.3; space.n()];
            assert!((k.eval_diff(&d) - k2.eval_diff(&d)).abs() <= k.tail_bound);
            let z = vec![0.0; space.n()];
            assert!((k.eval_diff(&z) - k2.eval_diff(&z)).abs() <= k.tail_bound);
        }
    }

    #[test]
    fn cutoff_is_minimal() {
        let k = PeriodicKernel::new(h1(), 1e-3).unwrap();
        assert!(k.tail_bound <= 1e-3);
        assert!(PeriodicKernel::tail(&k.space, k.lattice_cutoff - 1) > 1e-3);
    }

    #[test]
    fn precondition_and_duplicates() {
        let bad = SobolevSpace::new(2, 1).unwrap();
        assert!(matches!(
            PeriodicKernel::new(bad, 1e-3),
            Err(Error::KernelPrecondition { .. })
        ));
        let k = PeriodicKernel::new(h1(), 1e-3).unwrap();
        assert!(gram(&k, &[vec![0.2], vec![1.2]]).is_err());
        assert_eq!(gram(&k, &[vec![0.0]]).unwrap().nrows(), 1);
    }

    #[test]
    fn compiled_single_point_problem() {
        let k = PeriodicKernel::new(h1(), DEFAULT_KERNEL_TOL).unwrap();
        let prob = KernelProblem {
            space: h1(),
            points: vec![vec![0.0]],
            objective: vec![
                IntegrandTerm {
                    powers: vec![4],
                    coeff: 1.0,
                },
                IntegrandTerm {
                    powers: vec![2],
                    coeff: -1.0,
                },
                IntegrandTerm {
                    powers: vec![0],
                    coeff: 0.25,
                },
            ],
            radius: None,
        };
        let pop: KernelPop<f64> = compile_kernel_pop(&prob, &k).unwrap();
        let k00 = pop.gram[(0, 0)];
        let w = Monomial::var(coefficient_var(0));
        assert!(
            (pop.objective
                .coeff(&Monomial::power(&coefficient_var(0), 4))
                - k00.powi(4))
            .abs()
                < 1e-9
        );
        assert!((pop.objective.coeff(&w.union(&w).unwrap()) + k00 * k00).abs() < 1e-12);
        assert!((pop.slack.coeff(&Monomial::one()) - 1.0).abs() < 1e-15);

        let sol = solve_kernel_pop(
            &pop,
            2,
            &SolverOptions::with_tol(1e-9),
            &ExtractOptions::for_solver_tol(1e-9),
            &[vec![0.0], vec![0.25]],
        )
        .unwrap();
        assert!(sol.value.abs() < 1e-6);
        assert!(sol.extraction.flat);
        assert_eq!(sol.coefficients.len(), 2);
        let expected = 2f64.sqrt() / (2.0 * k00);
        for (w, f) in sol.coefficients.iter().zip(&sol.functions) {
            assert!((w[0].abs() - expected).abs() < 1e-4);
            assert!((w[0].abs() - 0.22425).abs() < 1e-4);
            assert!((f[0].abs() - 0.5f64.sqrt()).abs() < 1e-4);
        }
    }

    #[test]
    fn constant_objective() {
        let k = PeriodicKernel::new(h1(), 1e-5).unwrap();
        let prob = KernelProblem {
            space: h1(),
            points: vec![vec![0.0], vec![0.5]],
            objective: vec![IntegrandTerm {
                powers: vec![0, 0],
                coeff: 2.5,
            }],
            radius: Some(2.0),
        };
        let pop: KernelPop<f64> = compile_kernel_pop(&prob, &k).unwrap();
        let rel = pop.relaxation(1).unwrap();
        let sol = crate::moment::solve_outer(&rel, 1e-9).unwrap();
        assert!((sol.value - 2.5).abs() < 1e-7);
    }
}
