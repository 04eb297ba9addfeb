//! Inner relaxation: densities `p = s_0 + s_1 g` against a Gaussian
//! reference measure restricted to the ellipsoid.
//!
//! The reference `γ` is the product Gaussian with variance `1 / w_a` on every
//! coordinate `|a|_∞ ≤ ρ`, conditioned on `E` and normalized. Samples are
//! drawn in antithetic pairs `±c`, so odd moments vanish exactly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use log::{debug, info};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{lattice, monomials_over, FreqIndex, Monomial, DEFAULT_MONOMIAL_CAP};
use crate::model::{slack_over, weight, FourierPolynomial, Polynomial, SobolevSpace};
use crate::scalar::{lit, to_f64, Real};
use crate::sdp::{self, Block, SdpProblem, SdpSolution, SolveStatus, SolverOptions, Triplet};

/// Proposal draws per deterministic substream.
const CHUNK: u64 = 1 << 16;

pub const MIN_SAMPLES: u64 = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub estimate: f64,
    pub stderr: f64,
}

/// Monte Carlo estimates of `∫_E c^ba dγ(c)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceMoments {
    pub space: SobolevSpace,
    pub rho: u32,
    pub max_degree: usize,
    /// Proposal draws (each yields the pair `±c`).
    pub samples: u64,
    pub accepted: u64,
    pub seed: u64,
    pub variables: Vec<FreqIndex>,
    pub entries: BTreeMap<Monomial, Estimate>,
}

impl ReferenceMoments {
    pub fn get(&self, m: &Monomial) -> Option<Estimate> {
        self.entries.get(m).copied()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accepted as f64 / self.samples as f64
    }

    /// File name under which this estimate is cached.
    pub fn cache_name(
        space: &SobolevSpace,
        rho: u32,
        max_degree: usize,
        samples: u64,
        seed: u64,
    ) -> String {
        format!(
            "ref_n{}_m{}_rho{}_deg{}_s{}_seed{}.json",
            space.n(),
            space.m(),
            rho,
            max_degree,
            samples,
            seed
        )
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

/// Monomials over `vars` in graded order with, for each, the index of the
/// monomial obtained by dropping its last factor and that factor's position.
struct Recurrence {
    monomials: Vec<Monomial>,
    parent: Vec<(usize, usize)>,
}

impl Recurrence {
    fn new(vars: &[FreqIndex], degree: usize) -> Result<Self> {
        let monomials = monomials_over(vars, degree, DEFAULT_MONOMIAL_CAP)?;
        let index: BTreeMap<&Monomial, usize> =
            monomials.iter().enumerate().map(|(k, m)| (m, k)).collect();
        let mut parent = vec![(0, 0); monomials.len()];
        for (k, m) in monomials.iter().enumerate().skip(1) {
            let e = m.entries();
            let head = Monomial::canonicalize(e[..e.len() - 1].to_vec())?;
            let last = vars
                .binary_search(&e[e.len() - 1])
                .expect("factor is a tracked variable");
            parent[k] = (index[&head], last);
        }
        Ok(Recurrence { monomials, parent })
    }

    fn eval(&self, c: &[f64], out: &mut [f64]) {
        out[0] = 1.0;
        for k in 1..out.len() {
            let (p, v) = self.parent[k];
            out[k] = out[p] * c[v];
        }
    }
}

/// Reference moments over every coordinate with `|a|_∞ ≤ ρ`.
pub fn estimate_reference_moments(
    space: &SobolevSpace,
    rho: u32,
    max_degree: usize,
    samples: u64,
    seed: u64,
) -> Result<ReferenceMoments> {
    estimate_reference_moments_over(
        space,
        rho,
        &lattice(space.n(), rho),
        max_degree,
        samples,
        seed,
    )
}

/// Deterministic draws from `γ`, reported on the tracked coordinates.
struct Sampler {
    dim: usize,
    inv_sd: Vec<f64>,
    slots: Vec<usize>,
    samples: u64,
    seed: u64,
}

impl Sampler {
    fn new(
        space: &SobolevSpace,
        rho: u32,
        track: &[FreqIndex],
        samples: u64,
        seed: u64,
    ) -> Result<Self> {
        let coords = lattice(space.n(), rho);
        let slots = track
            .iter()
            .map(|a| {
                coords.binary_search(a).map_err(|_| {
                    Error::Degree(format!("tracked coordinate {a} lies outside |a| <= {rho}"))
                })
            })
            .collect::<Result<_>>()?;
        let inv_sd = coords
            .iter()
            .map(|a| weight::<f64>(space, a).map(|w| 1.0 / w.sqrt()))
            .collect::<Result<_>>()?;
        Ok(Sampler {
            dim: coords.len(),
            inv_sd,
            slots,
            samples,
            seed,
        })
    }

    /// One partial result per substream, in substream order.
    fn run<P: Send>(
        &self,
        init: impl Fn() -> P + Sync,
        visit: impl Fn(&mut P, &[f64]) + Sync,
    ) -> Vec<(u64, P)> {
        let chunks = self.samples.div_ceil(CHUNK);
        (0..chunks)
            .into_par_iter()
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                rng.set_stream(k);
                let draws = CHUNK.min(self.samples - k * CHUNK);
                let mut part = init();
                let mut accepted = 0;
                let mut z = vec![0.0; self.dim];
                let mut c = vec![0.0; self.slots.len()];
                for _ in 0..draws {
                    let mut norm = 0.0;
                    for zi in z.iter_mut() {
                        *zi = rng.sample::<f64, _>(StandardNormal);
                        norm += *zi * *zi;
                    }
                    // Σ w_a c_a^2 = Σ z^2 when c_a = z / sqrt(w_a)
                    if norm > 1.0 {
                        continue;
                    }
                    accepted += 1;
                    for (ci, &s) in c.iter_mut().zip(&self.slots) {
                        *ci = z[s] * self.inv_sd[s];
                    }
                    visit(&mut part, &c);
                }
                (accepted, part)
            })
            .collect()
    }
}

/// Samples `γ` on the full `|a|_∞ ≤ ρ` lattice but records only monomials in
/// the `track` coordinates.
pub fn estimate_reference_moments_over(
    space: &SobolevSpace,
    rho: u32,
    track: &[FreqIndex],
    max_degree: usize,
    samples: u64,
    seed: u64,
) -> Result<ReferenceMoments> {
    if samples < MIN_SAMPLES {
        return Err(Error::Invalid(format!(
            "need at least {MIN_SAMPLES} reference samples"
        )));
    }
    let mut track = track.to_vec();
    track.sort();
    track.dedup();
    let sampler = Sampler::new(space, rho, &track, samples, seed)?;
    let rec = Recurrence::new(&track, max_degree)?;
    let even: Vec<bool> = rec.monomials.iter().map(|m| m.degree() % 2 == 0).collect();
    let nm = rec.monomials.len();

    let partials = sampler.run(
        || (vec![0.0; nm], vec![0.0; nm], vec![0.0; nm]),
        |(sum, sumsq, vals), c| {
            rec.eval(c, vals);
            for k in 0..nm {
                if even[k] {
                    sum[k] += vals[k];
                    sumsq[k] += vals[k] * vals[k];
                }
            }
        },
    );
    let mut accepted = 0;
    let mut sum = vec![0.0; nm];
    let mut sumsq = vec![0.0; nm];
    for (a, (s, s2, _)) in &partials {
        accepted += a;
        for k in 0..nm {
            sum[k] += s[k];
            sumsq[k] += s2[k];
        }
    }
    let rate = accepted as f64 / samples as f64;
    if rate < 1e-4 || accepted == 0 {
        return Err(Error::LowAcceptance { rate });
    }
    info!("reference: {accepted} of {samples} draws accepted ({rate:.4}), {nm} monomials");
    let acc = accepted as f64;
    let mut entries = BTreeMap::new();
    for (k, m) in rec.monomials.iter().enumerate() {
        let e = if k == 0 {
            Estimate {
                estimate: 1.0,
                stderr: 0.0,
            }
        } else if !even[k] {
            Estimate {
                estimate: 0.0,
                stderr: 0.0,
            }
        } else {
            let mean = sum[k] / acc;
            let var = (sumsq[k] / acc - mean * mean).max(0.0);
            Estimate {
                estimate: mean,
                stderr: (var / acc).sqrt(),
            }
        };
        entries.insert(m.clone(), e);
    }
    Ok(ReferenceMoments {
        space: *space,
        rho,
        max_degree,
        samples,
        accepted,
        seed,
        variables: track,
        entries,
    })
}

impl ReferenceMoments {
    /// Standard error of `Σ κ_ba γ(c^ba)`, from the sample deviation of
    /// `Σ κ_ba c^ba` over the same draws that produced the estimates.
    pub fn linear_stderr(&self, kappa: &BTreeMap<Monomial, f64>) -> Result<f64> {
        let degree = kappa.keys().map(Monomial::degree).max().unwrap_or(0);
        let rec = Recurrence::new(&self.variables, degree)?;
        let coef: Vec<f64> = rec
            .monomials
            .iter()
            .map(|m| {
                if m.degree() % 2 == 0 {
                    kappa.get(m).copied().unwrap_or(0.0)
                } else {
                    0.0
                }
            })
            .collect();
        let nm = coef.len();
        let sampler = Sampler::new(
            &self.space,
            self.rho,
            &self.variables,
            self.samples,
            self.seed,
        )?;
        let partials = sampler.run(
            || (0.0, 0.0, vec![0.0; nm]),
            |(s, s2, vals), c| {
                rec.eval(c, vals);
                let q: f64 = coef.iter().zip(vals.iter()).map(|(a, b)| a * b).sum();
                *s += q;
                *s2 += q * q;
            },
        );
        let (mut acc, mut s, mut s2) = (0u64, 0.0, 0.0);
        for (a, (ps, ps2, _)) in &partials {
            acc += a;
            s += ps;
            s2 += ps2;
        }
        let n = acc as f64;
        let mean = s / n;
        Ok(((s2 / n - mean * mean).max(0.0) / n).sqrt())
    }
}

/// Cached variant: reads `dir/<cache name>` when present, writes it otherwise.
pub fn reference_moments_cached(
    dir: Option<&Path>,
    space: &SobolevSpace,
    rho: u32,
    track: &[FreqIndex],
    max_degree: usize,
    samples: u64,
    seed: u64,
) -> Result<ReferenceMoments> {
    let full = lattice(space.n(), rho);
    let mut sorted = track.to_vec();
    sorted.sort();
    sorted.dedup();
    let path: Option<PathBuf> = dir.map(|d| {
        let mut name = ReferenceMoments::cache_name(space, rho, max_degree, samples, seed);
        if sorted != full {
            let tag: Vec<String> = sorted.iter().map(|a| a.to_string()).collect();
            name = name.replace(
                ".json",
                &format!("_{}.json", tag.join("").replace(['(', ')', ','], "_")),
            );
        }
        d.join(name)
    });
    if let Some(p) = &path {
        if p.exists() {
            debug!("reference cache hit: {}", p.display());
            let cached = ReferenceMoments::load(p)?;
            if cached.variables == sorted && cached.space == *space && cached.rho == rho {
                return Ok(cached);
            }
        }
    }
    let est = estimate_reference_moments_over(space, rho, &sorted, max_degree, samples, seed)?;
    if let Some(p) = &path {
        if let Some(parent) = p.parent() {
            std::fs::create_dir_all(parent)?;
        }
        est.save(p)?;
    }
    Ok(est)
}

/// `min ∫ p_obj · p dγ  s.t.  ∫ p dγ = 1`, `p = b_0^T G_0 b_0 + g · b_1^T G_1 b_1`.
///
/// Posed as the one-variable LMI `max t  s.t.  C_k - t R_k ⪰ 0`; its dual
/// variables are the density Gram matrices and its dual equality is the
/// normalization.
#[derive(Clone, Debug)]
pub struct InnerRelaxation<T> {
    pub r: usize,
    pub rho: u32,
    pub variables: Vec<FreqIndex>,
    pub gram_basis: Vec<Monomial>,
    pub gram_basis_loc: Vec<Monomial>,
    pub objective: Polynomial<T>,
    pub slack: Polynomial<T>,
    pub reference: ReferenceMoments,
    /// `(C_0, R_0)` and `(C_1, R_1)`.
    pub blocks: [(DMatrix<T>, DMatrix<T>); 2],
    pub sdp: SdpProblem<T>,
}

/// Highest monomial degree of the reference needed at order `r`.
pub fn required_degree(objective_degree: usize, r: usize) -> usize {
    2 * r + objective_degree.max(2)
}

fn contract<T: Real>(
    reference: &ReferenceMoments,
    basis: &[Monomial],
    weight: &Polynomial<T>,
    missing: &mut Vec<Monomial>,
) -> DMatrix<T> {
    let k = basis.len();
    let mut out = DMatrix::<T>::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let base = basis[i].union_unchecked(&basis[j]);
            let mut acc = T::zero();
            for (t, c) in weight.terms() {
                let key = base.union_unchecked(t);
                match reference.get(&key) {
                    Some(e) => acc += *c * lit::<T>(e.estimate),
                    None => missing.push(key),
                }
            }
            out[(i, j)] = acc;
            out[(j, i)] = acc;
        }
    }
    out
}

pub fn build_inner<T: Real>(
    objective: &FourierPolynomial<T>,
    r: usize,
    rho: u32,
    reference: &ReferenceMoments,
) -> Result<InnerRelaxation<T>> {
    if r == 0 {
        return Err(Error::Degree(
            "relaxation order r must be at least 1".into(),
        ));
    }
    if objective.harmonic_degree() > rho {
        return Err(Error::Degree(format!(
            "objective has harmonic degree {} above rho = {rho}",
            objective.harmonic_degree()
        )));
    }
    if reference.space != objective.space || reference.rho != rho {
        return Err(Error::Invalid(
            "reference moments belong to a different space or rho".into(),
        ));
    }
    let vars = reference.variables.clone();
    for a in objective.poly.variables() {
        if vars.binary_search(&a).is_err() {
            return Err(Error::Degree(format!(
                "objective coordinate {a} is not tracked by the reference"
            )));
        }
    }
    let slack = slack_over(objective.space, &vars);
    let b0 = monomials_over(&vars, r, DEFAULT_MONOMIAL_CAP)?;
    let b1 = monomials_over(&vars, r - 1, DEFAULT_MONOMIAL_CAP)?;
    let one = Polynomial::constant(T::one());
    let obj_slack = objective.poly.try_mul(&slack)?;
    let mut missing = Vec::new();
    let c0 = contract(reference, &b0, &objective.poly, &mut missing);
    let r0 = contract(reference, &b0, &one, &mut missing);
    let c1 = contract(reference, &b1, &obj_slack, &mut missing);
    let r1 = contract(reference, &b1, &slack, &mut missing);
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(Error::MissingMoments(missing));
    }

    let mut blocks = Vec::new();
    for (c, rm) in [(&c0, &r0), (&c1, &r1)] {
        let mut triplets = Vec::new();
        for i in 0..c.nrows() {
            for j in i..c.ncols() {
                if c[(i, j)] != T::zero() {
                    triplets.push(Triplet {
                        var: None,
                        row: i,
                        col: j,
                        value: c[(i, j)],
                    });
                }
                if rm[(i, j)] != T::zero() {
                    triplets.push(Triplet {
                        var: Some(0),
                        row: i,
                        col: j,
                        value: -rm[(i, j)],
                    });
                }
            }
        }
        blocks.push(Block {
            size: c.nrows(),
            triplets,
        });
    }
    let sdp = SdpProblem {
        variable_count: 1,
        objective: vec![-T::one()],
        blocks,
        equalities: vec![],
    };
    Ok(InnerRelaxation {
        r,
        rho,
        variables: vars,
        gram_basis: b0,
        gram_basis_loc: b1,
        objective: objective.poly.clone(),
        slack,
        reference: reference.clone(),
        blocks: [(c0, r0), (c1, r1)],
        sdp,
    })
}

#[derive(Clone, Debug)]
pub struct InnerSolution<T: Real> {
    pub value: T,
    /// Gram matrices of `s_0` and `s_1`, normalized so `∫ p dγ = 1`.
    pub grams: [DMatrix<T>; 2],
    /// Delta-method standard error of `value` under the reference sampling.
    pub stderr: f64,
    /// `Σ |κ_ba| stderr_ba`, ignoring correlations between moment estimates.
    pub stderr_bound: f64,
    pub certificate: SdpSolution<T>,
}

pub fn solve_inner<T: Real>(rel: &InnerRelaxation<T>, tol: f64) -> Result<InnerSolution<T>> {
    let sol = sdp::solve(&rel.sdp, &SolverOptions::with_tol(tol))?;
    if sol.status != SolveStatus::Optimal {
        return Err(Error::NotConverged {
            status: sol.status,
            iterations: sol.iterations,
            gap: to_f64(sol.gap),
        });
    }
    let value = sol.variables[0];
    let grams = [sol.block_duals[0].clone(), sol.block_duals[1].clone()];
    let kappa = sensitivity(rel, &grams, value);
    let stderr = rel.reference.linear_stderr(&kappa)?;
    let stderr_bound = kappa
        .iter()
        .map(|(m, k)| k.abs() * rel.reference.get(m).map_or(0.0, |e| e.stderr))
        .sum();
    Ok(InnerSolution {
        value,
        grams,
        stderr,
        stderr_bound,
        certificate: sol,
    })
}

/// `κ_ba`: the coefficient of `γ(c^ba)` in `<G_0, C_0 - t R_0> + <G_1, C_1 - t R_1>`,
/// the first-order sensitivity of the optimal value to the reference data.
fn sensitivity<T: Real>(
    rel: &InnerRelaxation<T>,
    grams: &[DMatrix<T>; 2],
    t: T,
) -> BTreeMap<Monomial, f64> {
    let mut kappa: BTreeMap<Monomial, f64> = BTreeMap::new();
    let one = Polynomial::constant(T::one());
    let shifted0 = &rel.objective - &one.scale(&t);
    let shifted1 = shifted0.try_mul(&rel.slack).expect("same dimension");
    for (basis, g, w) in [
        (&rel.gram_basis, &grams[0], &shifted0),
        (&rel.gram_basis_loc, &grams[1], &shifted1),
    ] {
        for i in 0..basis.len() {
            for j in 0..basis.len() {
                let base = basis[i].union_unchecked(&basis[j]);
                for (m, c) in w.terms() {
                    *kappa.entry(base.union_unchecked(m)).or_insert(0.0) += to_f64(g[(i, j)] * *c);
                }
            }
        }
    }
    kappa
}

/// `y_ba = ∫ c^ba p(c) dγ(c)` for the density given by the Gram matrices.
pub fn density_moments<T: Real>(
    rel: &InnerRelaxation<T>,
    grams: &[DMatrix<T>; 2],
    monomials: &[Monomial],
) -> Result<crate::moment::MomentVector<T>> {
    let mut density = Polynomial::zero();
    for (basis, g, w) in [
        (&rel.gram_basis, &grams[0], &Polynomial::constant(T::one())),
        (&rel.gram_basis_loc, &grams[1], &rel.slack),
    ] {
        for i in 0..basis.len() {
            for j in 0..basis.len() {
                let sq = Polynomial::term(basis[i].union_unchecked(&basis[j]), g[(i, j)]);
                density = &density + &sq.try_mul(w)?;
            }
        }
    }
    let mut out = Vec::with_capacity(monomials.len());
    let mut missing = Vec::new();
    for m in monomials {
        let mut acc = T::zero();
        for (t, c) in density.terms() {
            let key = m.union(t)?;
            match rel.reference.get(&key) {
                Some(e) => acc += *c * lit::<T>(e.estimate),
                None => missing.push(key),
            }
        }
        out.push((m.clone(), acc));
    }
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(Error::MissingMoments(missing));
    }
    Ok(crate::moment::MomentVector::from_entries(out))
}

/// Outcome of the inner certificate search for a given moment vector.
#[derive(Clone, Debug)]
pub struct InnerMembership<T: Real> {
    /// `max_k |∫ c^{b_k} p dγ - y_k|` at the best density found.
    pub residual: T,
    /// Monte Carlo allowance: `3 · max_k stderr_k + 1e-6`.
    pub allowance: f64,
    pub pass: bool,
    pub grams: [DMatrix<T>; 2],
}

/// Searches `p ∈ Q_{r,ρ}` matching `y` on every monomial of degree `≤ 2r`
/// over the reference coordinates:
/// `min t  s.t.  |∫ c^{b_k} p dγ - y_k| ≤ t`, `G_0, G_1 ⪰ 0`.
pub fn inner_membership<T: Real>(
    y: &crate::moment::MomentVector<T>,
    reference: &ReferenceMoments,
    r: usize,
    tol: f64,
) -> Result<InnerMembership<T>> {
    if r == 0 {
        return Err(Error::Degree(
            "relaxation order r must be at least 1".into(),
        ));
    }
    let vars = &reference.variables;
    let targets = monomials_over(vars, 2 * r, DEFAULT_MONOMIAL_CAP)?;
    let missing = y.missing(&targets);
    if !missing.is_empty() {
        return Err(Error::MissingMoments(missing));
    }
    let slack = slack_over(reference.space, vars);
    let bases = [
        monomials_over(vars, r, DEFAULT_MONOMIAL_CAP)?,
        monomials_over(vars, r - 1, DEFAULT_MONOMIAL_CAP)?,
    ];
    let weights = [Polynomial::constant(T::one()), slack];

    // variable layout: vech(G_0), vech(G_1), t
    let mut offset = [0usize; 2];
    let mut nv = 0;
    for b in 0..2 {
        offset[b] = nv;
        nv += bases[b].len() * (bases[b].len() + 1) / 2;
    }
    let t_var = nv;
    let vech = |b: usize, i: usize, j: usize| {
        let k = bases[b].len();
        let (i, j) = if i <= j { (i, j) } else { (j, i) };
        offset[b] + i * k - i * i.saturating_sub(1) / 2 + j - i
    };
    let mut blocks = Vec::new();
    for b in 0..2 {
        let k = bases[b].len();
        if k == 0 {
            continue;
        }
        let mut triplets = Vec::new();
        for i in 0..k {
            for j in i..k {
                triplets.push(Triplet {
                    var: Some(vech(b, i, j)),
                    row: i,
                    col: j,
                    value: T::one(),
                });
            }
        }
        blocks.push(Block { size: k, triplets });
    }
    let mut missing = Vec::new();
    let mut rows: Vec<Vec<(usize, T)>> = Vec::with_capacity(targets.len());
    let mut kappa_rows: Vec<Vec<(usize, usize, usize, Monomial, f64)>> = Vec::new();
    for target in &targets {
        let mut row: BTreeMap<usize, T> = BTreeMap::new();
        let mut sens = Vec::new();
        for b in 0..2 {
            let basis = &bases[b];
            for i in 0..basis.len() {
                for j in i..basis.len() {
                    let base = basis[i].union_unchecked(&basis[j]).union_unchecked(target);
                    let mult = if i == j { T::one() } else { lit::<T>(2.0) };
                    for (t, g) in weights[b].terms() {
                        let key = base.union_unchecked(t);
                        match reference.get(&key) {
                            Some(e) => {
                                *row.entry(vech(b, i, j)).or_insert(T::zero()) +=
                                    mult * *g * lit::<T>(e.estimate);
                                sens.push((b, i, j, key, to_f64(mult * *g)));
                            }
                            None => missing.push(key),
                        }
                    }
                }
            }
        }
        rows.push(row.into_iter().collect());
        kappa_rows.push(sens);
    }
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(Error::MissingMoments(missing));
    }
    for (row, target) in rows.iter().zip(&targets) {
        let yk = y.get(target).expect("checked above");
        for sign in [T::one(), -T::one()] {
            // t - sign (ℓ_k(G) - y_k) ≥ 0
            let mut triplets = vec![
                Triplet {
                    var: Some(t_var),
                    row: 0,
                    col: 0,
                    value: T::one(),
                },
                Triplet {
                    var: None,
                    row: 0,
                    col: 0,
                    value: sign * yk,
                },
            ];
            for (v, c) in row {
                triplets.push(Triplet {
                    var: Some(*v),
                    row: 0,
                    col: 0,
                    value: -sign * *c,
                });
            }
            blocks.push(Block { size: 1, triplets });
        }
    }
    let mut objective = vec![T::zero(); nv + 1];
    objective[t_var] = T::one();
    let sdp = SdpProblem {
        variable_count: nv + 1,
        objective,
        blocks,
        equalities: vec![],
    };
    let sol = sdp::solve(&sdp, &SolverOptions::with_tol(tol))?;
    if sol.status != SolveStatus::Optimal {
        return Err(Error::NotConverged {
            status: sol.status,
            iterations: sol.iterations,
            gap: to_f64(sol.gap),
        });
    }
    let grams: [DMatrix<T>; 2] = [0, 1].map(|b| {
        let k = bases[b].len();
        DMatrix::from_fn(k, k, |i, j| sol.variables[vech(b, i, j)])
    });
    let mut worst = 0.0f64;
    for sens in &kappa_rows {
        let mut kappa: BTreeMap<Monomial, f64> = BTreeMap::new();
        for (b, i, j, key, c) in sens {
            *kappa.entry(key.clone()).or_insert(0.0) += c * to_f64(grams[*b][(*i, *j)]);
        }
        worst = worst.max(reference.linear_stderr(&kappa)?);
    }
    let residual = sol.variables[t_var];
    let allowance = 3.0 * worst + 1e-6;
    Ok(InnerMembership {
        residual,
        allowance,
        pass: to_f64(residual) <= allowance,
        grams,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::min_eigenvalue;
    use crate::moment::{localizing_matrix_over, moment_matrix_over};

    fn m(s: &str) -> Monomial {
        s.parse().unwrap()
    }

    fn harmonic() -> FourierPolynomial<f64> {
        let space = SobolevSpace::new(1, 0).unwrap();
        FourierPolynomial::new(
            space,
            Polynomial::from_terms([
                (m("[(0);(0);(0);(0)]"), 1.0),
                (m("[(1);(1);(1);(1)]"), 1.0),
                (m("[(1);(1)]"), -0.5),
                (Monomial::one(), 1.0 / 16.0),
            ]),
        )
        .unwrap()
    }

    /// `∫_{-1}^{1} x^2 φ(x) dx / ∫_{-1}^{1} φ(x) dx` by composite Simpson.
    fn truncated_second_moment() -> f64 {
        let n = 20_000;
        let h = 2.0 / n as f64;
        let (mut num, mut den) = (0.0, 0.0);
        for k in 0..=n {
            let x = -1.0 + h * k as f64;
            let w = if k == 0 || k == n {
                1.0
            } else if k % 2 == 1 {
                4.0
            } else {
                2.0
            };
            let phi = (-0.5 * x * x).exp();
            num += w * x * x * phi;
            den += w * phi;
        }
        num / den
    }

    #[test]
    fn quadrature_oracle_value() {
        assert!((truncated_second_moment() - 0.29112).abs() < 1e-4);
    }

    #[test]
    fn one_dimensional_reference() {
        let space = SobolevSpace::new(1, 0).unwrap();
        let refm = estimate_reference_moments(&space, 0, 4, 200_000, 1).unwrap();
        assert_eq!(refm.get(&Monomial::one()).unwrap().estimate, 1.0);
        assert_eq!(refm.get(&m("[(0)]")).unwrap().estimate, 0.0);
        assert_eq!(refm.get(&m("[(0);(0);(0)]")).unwrap().estimate, 0.0);
        let e = refm.get(&m("[(0);(0)]")).unwrap();
        let oracle = truncated_second_moment();
        assert!(
            (e.estimate - oracle).abs() < 4.0 * e.stderr,
            "{e:?} vs {oracle}"
        );
        // acceptance P(|z| <= 1)
        assert!((refm.acceptance_rate() - 0.682689).abs() < 0.01);
    }

    #[test]
    fn deterministic_given_seed() {
        let space = SobolevSpace::new(1, 1).unwrap();
        let a = estimate_reference_moments(&space, 1, 4, 150_000, 9).unwrap();
        let b = estimate_reference_moments(&space, 1, 4, 150_000, 9).unwrap();
        assert_eq!(a, b);
        let c = estimate_reference_moments(&space, 1, 4, 150_000, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn cauchy_schwarz_consistency() {
        let space = SobolevSpace::new(1, 1).unwrap();
        let refm = estimate_reference_moments(&space, 1, 4, 100_000, 3).unwrap();
        let quad = monomials_over(&refm.variables, 2, 100).unwrap();
        for a in &quad {
            for b in &quad {
                let ab = refm.get(&a.union(b).unwrap()).unwrap();
                let aa = refm.get(&a.union(a).unwrap()).unwrap();
                let bb = refm.get(&b.union(b).unwrap()).unwrap();
                assert!(
                    ab.estimate.abs()
                        <= (aa.estimate * bb.estimate).sqrt() + 3.0 * ab.stderr + 1e-15
                );
            }
        }
    }

    #[test]
    fn linear_stderr_of_single_entry() {
        let space = SobolevSpace::new(1, 1).unwrap();
        let refm = estimate_reference_moments(&space, 1, 4, 70_000, 5).unwrap();
        let key = m("[(-1);(1)]");
        let kappa: BTreeMap<Monomial, f64> = [(key.clone(), 2.0)].into();
        let e = refm.get(&key).unwrap();
        assert!(
            (refm.linear_stderr(&kappa).unwrap() - 2.0 * e.stderr).abs() < 1e-12 * (1.0 + e.stderr)
        );
    }

    #[test]
    fn inner_membership_verdicts() {
        let space = SobolevSpace::new(1, 0).unwrap();
        let refm = estimate_reference_moments(&space, 0, 4, 200_000, 8).unwrap();
        let mons = monomials_over(&refm.variables, 2, 10).unwrap();
        // the reference itself (p ≡ 1)
        let own = crate::moment::MomentVector::from_entries(
            mons.iter()
                .map(|m| (m.clone(), refm.get(m).unwrap().estimate)),
        );
        let res = inner_membership(&own, &refm, 1, 1e-9).unwrap();
        assert!(res.pass, "{} > {}", res.residual, res.allowance);
        // second moment above the ellipsoid bound
        let bad = crate::moment::MomentVector::from_entries([
            (Monomial::one(), 1.0),
            (m("[(0)]"), 0.0),
            (m("[(0);(0)]"), 2.0),
        ]);
        let res = inner_membership(&bad, &refm, 1, 1e-9).unwrap();
        assert!(!res.pass);
        assert!(res.residual > 0.5);
    }

    #[test]
    fn too_few_samples_rejected() {
        let space = SobolevSpace::new(1, 0).unwrap();
        assert!(estimate_reference_moments(&space, 0, 2, 10, 1).is_err());
    }

    #[test]
    fn low_acceptance_reported() {
        // 25 coordinates: P(chi^2_25 <= 1) is far below 1e-4
        let space = SobolevSpace::new(2, 0).unwrap();
        match estimate_reference_moments(&space, 2, 2, 5_000, 1) {
            Err(Error::LowAcceptance { rate }) => assert!(rate < 1e-4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn constant_objective_and_unit_density() {
        let space = SobolevSpace::new(1, 0).unwrap();
        let refm = estimate_reference_moments(&space, 1, 6, 50_000, 2).unwrap();
        let one = FourierPolynomial::new(space, Polynomial::constant(1.0)).unwrap();
        let rel: InnerRelaxation<f64> = build_inner(&one, 2, 1, &refm).unwrap();
        let sol = solve_inner(&rel, 1e-9).unwrap();
        assert!((sol.value - 1.0).abs() < 1e-7);

        // p ≡ 1 reproduces the reference moments
        let mut g0 = DMatrix::zeros(rel.gram_basis.len(), rel.gram_basis.len());
        g0[(0, 0)] = 1.0;
        let g1 = DMatrix::zeros(rel.gram_basis_loc.len(), rel.gram_basis_loc.len());
        let mons = monomials_over(&rel.variables, 2, 100).unwrap();
        let y = density_moments(&rel, &[g0, g1], &mons).unwrap();
        for mm in &mons {
            assert_eq!(y.get(mm).unwrap(), refm.get(mm).unwrap().estimate);
        }
    }

    /// Smallest generalized eigenvalue of `(C, R)` through `R = L L^T`.
    fn gen_min_eig(c: &DMatrix<f64>, r: &DMatrix<f64>) -> f64 {
        let l = r.clone().cholesky().unwrap().l();
        let li = l.clone().try_inverse().unwrap();
        min_eigenvalue(&(&li * c * li.transpose()))
    }

    #[test]
    fn value_matches_generalized_eigenvalue_oracle() {
        let space = SobolevSpace::new(1, 0).unwrap();
        let refm = estimate_reference_moments(&space, 1, 8, 200_000, 4).unwrap();
        let rel = build_inner(&harmonic(), 2, 1, &refm).unwrap();
        let sol = solve_inner(&rel, 1e-9).unwrap();
        let oracle = gen_min_eig(&rel.blocks[0].0, &rel.blocks[0].1)
            .min(gen_min_eig(&rel.blocks[1].0, &rel.blocks[1].1));
        assert!(
            (sol.value - oracle).abs() < 1e-6,
            "{} vs {oracle}",
            sol.value
        );
        assert!(sol.stderr > 0.0);
    }

    #[test]
    fn shift_and_inner_feasible_moments_pass_outer_test() {
        let space = SobolevSpace::new(1, 0).unwrap();
        let refm = estimate_reference_moments(&space, 1, 8, 200_000, 6).unwrap();
        let p = harmonic();
        let rel = build_inner(&p, 2, 1, &refm).unwrap();
        let sol = solve_inner(&rel, 1e-9).unwrap();
        let shifted = FourierPolynomial::new(space, &p.poly + &Polynomial::constant(0.75)).unwrap();
        let sol2 = solve_inner(&build_inner(&shifted, 2, 1, &refm).unwrap(), 1e-9).unwrap();
        assert!((sol2.value - sol.value - 0.75).abs() < 1e-6);

        // outer membership at order 1 of the optimal density's moments
        let vars = rel.variables.clone();
        let mons = monomials_over(&vars, 2, 100).unwrap();
        let y = density_moments(&rel, &sol.grams, &mons).unwrap();
        let basis = monomials_over(&vars, 1, 100).unwrap();
        let mm = moment_matrix_over(&y, &basis).unwrap();
        let loc = localizing_matrix_over(&y, &basis[..1], &slack_over(space, &vars)).unwrap();
        let stderr: f64 = mons.iter().map(|m| refm.get(m).unwrap().stderr).sum();
        assert!(min_eigenvalue(&mm) >= -(3.0 * stderr + 1e-6));
        assert!(min_eigenvalue(&loc) >= -(3.0 * stderr + 1e-6));
    }
}
