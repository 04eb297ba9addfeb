//! Infeasible-start primal-dual path following, HKM direction, Mehrotra
//! predictor-corrector.
//!
//! Equalities are eliminated first (`x = x0 + Z u`), leaving the pure LMI
//! form `min c^T u  s.t.  S = F_0 + Σ u_i F_i ⪰ 0` whose dual is
//! `max -<F_0, X>  s.t.  <F_i, X> = c_i, X ⪰ 0`.

use std::collections::BTreeMap;

use log::{debug, trace};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inner, max_step, min_eigenvalue, symmetrize};
use crate::scalar::{lit, to_f64, Real};
use crate::sdp::problem::SdpProblem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    MaxIter,
    InfeasibleSuspect,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverOptions {
    pub tol: f64,
    pub max_iter: usize,
    /// Fraction of the step to the boundary of the cone.
    pub step_factor: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 200,
            step_factor: 0.95,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        SolverOptions {
            tol,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Serialize + Real",
    deserialize = "T: Deserialize<'de> + Real"
))]
pub struct SdpSolution<T: Real> {
    pub variables: Vec<T>,
    /// Dual matrix `X` of each block.
    pub block_duals: Vec<DMatrix<T>>,
    /// One multiplier per equality.
    pub equality_duals: Vec<T>,
    pub status: SolveStatus,
    /// `c^T x`.
    pub objective: T,
    /// Dual objective; a lower bound on the optimum at dual feasibility.
    pub dual_objective: T,
    /// `|objective - dual_objective|`.
    pub gap: T,
    pub iterations: usize,
    /// Relative residual of the LMI `F(x) - S`.
    pub primal_residual: T,
    /// Relative residual of `<F_i, X> = c_i`.
    pub dual_residual: T,
}

type Entries<T> = Vec<(usize, usize, T)>;

struct ReducedBlock<T: Real> {
    size: usize,
    f0: DMatrix<T>,
    /// Reduced variable and its full (both triangles) entry list.
    vars: Vec<(usize, Entries<T>)>,
}

struct Reduced<T: Real> {
    m: usize,
    c: Vec<T>,
    c0: T,
    blocks: Vec<ReducedBlock<T>>,
    /// `x = x0 + Σ_u zcols[u] u_u` with `zcols` sparse.
    x0: Vec<T>,
    zcols: Vec<Vec<(usize, T)>>,
}

fn abs<T: Real>(x: T) -> T {
    x.abs()
}

fn reduce<T: Real>(p: &SdpProblem<T>) -> Result<Reduced<T>> {
    let nv = p.variable_count;
    let k = p.equalities.len();
    let mut e = DMatrix::<T>::zeros(k, nv);
    let mut rhs = DVector::<T>::zeros(k);
    for (i, eq) in p.equalities.iter().enumerate() {
        for (v, c) in &eq.terms {
            e[(i, *v)] += *c;
        }
        rhs[i] = eq.rhs;
    }
    let scale = e.iter().fold(T::one(), |m, v| m.max(abs(*v)));
    let rscale = rhs.iter().fold(T::one(), |m, v| m.max(abs(*v)));
    let mut pivots: Vec<(usize, usize)> = Vec::new();
    for i in 0..k {
        let (mut best, mut col) = (T::zero(), 0);
        for j in 0..nv {
            if abs(e[(i, j)]) > best {
                best = abs(e[(i, j)]);
                col = j;
            }
        }
        if best <= lit::<T>(1e-12) * scale {
            if abs(rhs[i]) > lit::<T>(1e-9) * rscale {
                return Err(Error::InconsistentEqualities);
            }
            continue;
        }
        let piv = e[(i, col)];
        for j in 0..nv {
            e[(i, j)] /= piv;
        }
        rhs[i] /= piv;
        for i2 in 0..k {
            if i2 == i {
                continue;
            }
            let f = e[(i2, col)];
            if f != T::zero() {
                for j in 0..nv {
                    let v = e[(i, j)];
                    e[(i2, j)] -= f * v;
                }
                let v = rhs[i];
                rhs[i2] -= f * v;
            }
        }
        pivots.push((i, col));
    }
    let mut is_pivot = vec![false; nv];
    for &(_, j) in &pivots {
        is_pivot[j] = true;
    }
    let free: Vec<usize> = (0..nv).filter(|j| !is_pivot[*j]).collect();

    let mut x0 = vec![T::zero(); nv];
    for &(i, j) in &pivots {
        x0[j] = rhs[i];
    }
    let mut zcols = Vec::with_capacity(free.len());
    let mut c = Vec::with_capacity(free.len());
    for &f in &free {
        let mut col = vec![(f, T::one())];
        let mut cf = p.objective[f];
        for &(i, j) in &pivots {
            let a = e[(i, f)];
            if a != T::zero() {
                col.push((j, -a));
                cf -= p.objective[j] * a;
            }
        }
        zcols.push(col);
        c.push(cf);
    }
    let c0 = pivots
        .iter()
        .fold(T::zero(), |acc, &(i, j)| acc + p.objective[j] * rhs[i]);

    let mut blocks = Vec::with_capacity(p.blocks.len());
    for b in &p.blocks {
        let mut f0 = DMatrix::<T>::zeros(b.size, b.size);
        let mut per_var: BTreeMap<usize, BTreeMap<(usize, usize), T>> = BTreeMap::new();
        for t in &b.triplets {
            let mut put = |r: usize, s: usize| match t.var {
                None => f0[(r, s)] += t.value,
                Some(v) => {
                    *per_var
                        .entry(v)
                        .or_default()
                        .entry((r, s))
                        .or_insert(T::zero()) += t.value
                }
            };
            put(t.row, t.col);
            if t.row != t.col {
                put(t.col, t.row);
            }
        }
        for (x, col) in x0.iter().enumerate() {
            if *col != T::zero() {
                if let Some(ent) = per_var.get(&x) {
                    for (&(r, s), v) in ent {
                        f0[(r, s)] += *v * *col;
                    }
                }
            }
        }
        let mut vars = Vec::new();
        for (u, col) in zcols.iter().enumerate() {
            let mut acc: BTreeMap<(usize, usize), T> = BTreeMap::new();
            for (x, coef) in col {
                if let Some(ent) = per_var.get(x) {
                    for (&rs, v) in ent {
                        *acc.entry(rs).or_insert(T::zero()) += *v * *coef;
                    }
                }
            }
            let list: Entries<T> = acc
                .into_iter()
                .filter(|(_, v)| *v != T::zero())
                .map(|((r, s), v)| (r, s, v))
                .collect();
            if !list.is_empty() {
                vars.push((u, list));
            }
        }
        blocks.push(ReducedBlock {
            size: b.size,
            f0,
            vars,
        });
    }
    Ok(Reduced {
        m: free.len(),
        c,
        c0,
        blocks,
        x0,
        zcols,
    })
}

fn apply<T: Real>(entries: &Entries<T>, k: &DMatrix<T>) -> T {
    entries
        .iter()
        .fold(T::zero(), |acc, (r, s, v)| acc + *v * k[(*s, *r)])
}

fn frob<T: Real>(a: &DMatrix<T>) -> T {
    inner(a, a).sqrt()
}

struct Iterate<T: Real> {
    u: DVector<T>,
    x: Vec<DMatrix<T>>,
    s: Vec<DMatrix<T>>,
}

struct Direction<T: Real> {
    du: DVector<T>,
    dx: Vec<DMatrix<T>>,
    ds: Vec<DMatrix<T>>,
}

enum Factor<T: Real> {
    Chol(Cholesky<T, Dyn>),
    Lu(nalgebra::LU<T, Dyn, Dyn>),
}

impl<T: Real> Factor<T> {
    fn solve(&self, b: &DVector<T>) -> Option<DVector<T>> {
        match self {
            Factor::Chol(c) => Some(c.solve(b)),
            Factor::Lu(l) => l.solve(b),
        }
    }
}

struct Workspace<'a, T: Real> {
    red: &'a Reduced<T>,
    sinv: Vec<DMatrix<T>>,
}

impl<T: Real> Workspace<'_, T> {
    fn lmi(&self, u: &DVector<T>, b: usize) -> DMatrix<T> {
        let blk = &self.red.blocks[b];
        let mut f = blk.f0.clone();
        for (v, ent) in &blk.vars {
            for (r, s, val) in ent {
                f[(*r, *s)] += *val * u[*v];
            }
        }
        f
    }

    fn schur(&self, it: &Iterate<T>) -> DMatrix<T> {
        let m = self.red.m;
        let mut mat = DMatrix::<T>::zeros(m, m);
        for (b, blk) in self.red.blocks.iter().enumerate() {
            let x = &it.x[b];
            let sinv = &self.sinv[b];
            let n = blk.size;
            for (j, ent_j) in &blk.vars {
                // W_j = X F_j S^{-1}
                let mut w = DMatrix::<T>::zeros(n, n);
                for (r, s, v) in ent_j {
                    let xc = x.column(*r);
                    let sr = sinv.row(*s);
                    for q in 0..n {
                        let sv = sr[q] * *v;
                        if sv == T::zero() {
                            continue;
                        }
                        for p in 0..n {
                            w[(p, q)] += xc[p] * sv;
                        }
                    }
                }
                for (i, ent_i) in &blk.vars {
                    mat[(*i, *j)] += apply(ent_i, &w);
                }
            }
        }
        symmetrize(&mat)
    }

    fn direction(
        &self,
        it: &Iterate<T>,
        factor: &Factor<T>,
        rd: &[DMatrix<T>],
        rp: &DVector<T>,
        rc: &[DMatrix<T>],
    ) -> Option<Direction<T>> {
        let m = self.red.m;
        let mut rhs = -rp.clone();
        let mut ks = Vec::with_capacity(rd.len());
        for (b, blk) in self.red.blocks.iter().enumerate() {
            let k = (&rc[b] - &it.x[b] * &rd[b]) * &self.sinv[b];
            for (i, ent) in &blk.vars {
                rhs[*i] += apply(ent, &k);
            }
            ks.push(k);
        }
        let du = if m > 0 {
            factor.solve(&rhs)?
        } else {
            DVector::zeros(0)
        };
        let mut dx = Vec::with_capacity(rd.len());
        let mut ds = Vec::with_capacity(rd.len());
        for (b, blk) in self.red.blocks.iter().enumerate() {
            let mut d = rd[b].clone();
            for (v, ent) in &blk.vars {
                for (r, s, val) in ent {
                    d[(*r, *s)] += *val * du[*v];
                }
            }
            let step = (&rc[b] - &it.x[b] * &d) * &self.sinv[b];
            dx.push(symmetrize(&step));
            ds.push(d);
        }
        Some(Direction { du, dx, ds })
    }
}

fn factorize<T: Real>(mat: &DMatrix<T>) -> Option<Factor<T>> {
    if let Some(c) = Cholesky::new(mat.clone()) {
        return Some(Factor::Chol(c));
    }
    let diag = (0..mat.nrows()).fold(T::zero(), |m, i| m.max(abs(mat[(i, i)])));
    let mut reg = mat.clone();
    let eps = lit::<T>(1e-13) * diag.max(T::one());
    for i in 0..mat.nrows() {
        reg[(i, i)] += eps;
    }
    if let Some(c) = Cholesky::new(reg) {
        return Some(Factor::Chol(c));
    }
    let lu = mat.clone().lu();
    if lu.is_invertible() {
        Some(Factor::Lu(lu))
    } else {
        None
    }
}

fn step_length<T: Real>(mats: &[DMatrix<T>], dirs: &[DMatrix<T>], gamma: T) -> Result<T> {
    let mut alpha = T::one();
    for (a, d) in mats.iter().zip(dirs) {
        let chol = Cholesky::new(a.clone()).ok_or_else(|| Error::SingularSystem {
            iteration: 0,
            detail: "iterate left the cone".into(),
        })?;
        if let Some(s) = max_step(&chol, d) {
            alpha = alpha.min(gamma * s);
        }
    }
    Ok(alpha)
}

/// Solve `p` to relative accuracy `opts.tol`.
pub fn solve<T: Real>(p: &SdpProblem<T>, opts: &SolverOptions) -> Result<SdpSolution<T>> {
    p.validate()?;
    let red = reduce(p)?;
    let tol = lit::<T>(opts.tol);
    let gamma = lit::<T>(opts.step_factor);
    let nb = red.blocks.len();
    let total: usize = red.blocks.iter().map(|b| b.size).sum();
    let total_t = lit::<T>(total.max(1) as f64);

    let cvec = DVector::from_vec(red.c.clone());
    let norm_c = T::one() + cvec.norm();
    let norm_f0 = T::one() + red.blocks.iter().fold(T::zero(), |m, b| m.max(frob(&b.f0)));

    let mut it = Iterate {
        u: DVector::zeros(red.m),
        x: Vec::with_capacity(nb),
        s: Vec::with_capacity(nb),
    };
    for blk in &red.blocks {
        let n = lit::<T>(blk.size as f64);
        let mut xi = lit::<T>(10.0).max(n.sqrt());
        let mut eta = xi.max(frob(&blk.f0));
        for (v, ent) in &blk.vars {
            let fn_ = ent
                .iter()
                .fold(T::zero(), |a, (_, _, x)| a + *x * *x)
                .sqrt();
            xi = xi.max(n.sqrt() * (T::one() + abs(red.c[*v])) / (T::one() + fn_));
            eta = eta.max(fn_);
        }
        it.x.push(DMatrix::identity(blk.size, blk.size) * xi);
        it.s.push(DMatrix::identity(blk.size, blk.size) * eta);
    }

    let mut ws = Workspace {
        red: &red,
        sinv: Vec::new(),
    };
    let mut status = SolveStatus::MaxIter;
    let mut iterations = 0;
    let (mut pinf, mut dinf) = (T::zero(), T::zero());
    let (mut pobj, mut dobj) = (red.c0, red.c0);

    for k in 0..=opts.max_iter {
        iterations = k;
        let rd: Vec<DMatrix<T>> = (0..nb).map(|b| ws.lmi(&it.u, b) - &it.s[b]).collect();
        let mut rp = cvec.clone();
        for (b, blk) in red.blocks.iter().enumerate() {
            for (i, ent) in &blk.vars {
                rp[*i] -= apply(ent, &it.x[b]);
            }
        }
        pobj = cvec.dot(&it.u) + red.c0;
        dobj = red.c0
            - red
                .blocks
                .iter()
                .zip(&it.x)
                .fold(T::zero(), |a, (b, x)| a + inner(&b.f0, x));
        let mu =
            it.x.iter()
                .zip(&it.s)
                .fold(T::zero(), |a, (x, s)| a + inner(x, s))
                / total_t;
        pinf = rd.iter().fold(T::zero(), |a, r| a + inner(r, r)).sqrt() / norm_f0;
        dinf = rp.norm() / norm_c;
        let relgap = abs(pobj - dobj) / (T::one() + abs(pobj) + abs(dobj));
        trace!(
            "iter {k}: pobj {:.6e} dobj {:.6e} pinf {:.2e} dinf {:.2e} mu {:.2e}",
            to_f64(pobj),
            to_f64(dobj),
            to_f64(pinf),
            to_f64(dinf),
            to_f64(mu)
        );
        if pinf <= tol && dinf <= tol && relgap <= tol {
            status = SolveStatus::Optimal;
            break;
        }
        let big = lit::<T>(1e12);
        let xnorm = it.x.iter().fold(T::zero(), |a, x| a.max(frob(x)));
        if it.u.amax() > big || xnorm > big {
            status = SolveStatus::InfeasibleSuspect;
            break;
        }
        if k == opts.max_iter {
            break;
        }

        ws.sinv.clear();
        for (b, s) in it.s.iter().enumerate() {
            let chol = Cholesky::new(s.clone()).ok_or_else(|| Error::SingularSystem {
                iteration: k,
                detail: format!("slack block {b} lost positive definiteness"),
            })?;
            ws.sinv.push(symmetrize(&chol.inverse()));
        }
        let schur = ws.schur(&it);
        let factor = if red.m > 0 {
            factorize(&schur).ok_or_else(|| Error::SingularSystem {
                iteration: k,
                detail: format!(
                    "Schur complement of order {} is singular (pinf {:.2e}, dinf {:.2e}, mu {:.2e})",
                    red.m,
                    to_f64(pinf),
                    to_f64(dinf),
                    to_f64(mu)
                ),
            })?
        } else {
            Factor::Lu(DMatrix::<T>::identity(1, 1).lu())
        };
        let singular = |what: &str| Error::SingularSystem {
            iteration: k,
            detail: format!("{what} solve failed"),
        };

        // predictor
        let rc: Vec<DMatrix<T>> = it.x.iter().zip(&it.s).map(|(x, s)| -(x * s)).collect();
        let aff = ws
            .direction(&it, &factor, &rd, &rp, &rc)
            .ok_or_else(|| singular("predictor"))?;
        let ap = step_length(&it.x, &aff.dx, T::one())?;
        let ad = step_length(&it.s, &aff.ds, T::one())?;
        let mut mu_aff = T::zero();
        for b in 0..nb {
            let x = &it.x[b] + &aff.dx[b] * ap;
            let s = &it.s[b] + &aff.ds[b] * ad;
            mu_aff += inner(&x, &s);
        }
        mu_aff /= total_t;
        let ratio = if mu > T::zero() {
            (mu_aff / mu).max(T::zero())
        } else {
            T::zero()
        };
        let sigma = (ratio * ratio * ratio).min(T::one());

        // corrector
        let rc: Vec<DMatrix<T>> = (0..nb)
            .map(|b| {
                let n = red.blocks[b].size;
                DMatrix::identity(n, n) * (sigma * mu)
                    - &it.x[b] * &it.s[b]
                    - &aff.dx[b] * &aff.ds[b]
            })
            .collect();
        let dir = ws
            .direction(&it, &factor, &rd, &rp, &rc)
            .ok_or_else(|| singular("corrector"))?;
        let ap = step_length(&it.x, &dir.dx, gamma)?;
        let ad = step_length(&it.s, &dir.ds, gamma)?;
        for b in 0..nb {
            it.x[b] += &dir.dx[b] * ap;
            it.s[b] += &dir.ds[b] * ad;
            it.x[b] = symmetrize(&it.x[b]);
            it.s[b] = symmetrize(&it.s[b]);
        }
        it.u += &dir.du * ad;
    }

    let mut variables = red.x0.clone();
    for (ui, col) in red.zcols.iter().enumerate() {
        for (x, coef) in col {
            variables[*x] += *coef * it.u[ui];
        }
    }
    let equality_duals = equality_multipliers(p, &variables, &it.x);
    let objective = p.objective_value(&variables);
    if red.m == 0 {
        let feasible = (0..nb).all(|b| min_eigenvalue(&ws.lmi(&it.u, b)) >= -tol);
        status = if feasible {
            SolveStatus::Optimal
        } else {
            SolveStatus::InfeasibleSuspect
        };
    }
    debug!(
        "sdp: {:?} after {} iterations, objective {:.10e}, gap {:.2e}",
        status,
        iterations,
        to_f64(objective),
        to_f64(abs(pobj - dobj))
    );
    Ok(SdpSolution {
        variables,
        block_duals: it.x,
        equality_duals,
        status,
        objective,
        dual_objective: dobj,
        gap: abs(pobj - dobj),
        iterations,
        primal_residual: pinf,
        dual_residual: dinf,
    })
}

/// Least-squares multipliers for `c - Σ_j <F_j, X> e_j = A^T λ`.
fn equality_multipliers<T: Real>(p: &SdpProblem<T>, _x: &[T], duals: &[DMatrix<T>]) -> Vec<T> {
    let k = p.equalities.len();
    if k == 0 {
        return Vec::new();
    }
    let nv = p.variable_count;
    let mut g = DVector::from_vec(p.objective.clone());
    for (b, blk) in p.blocks.iter().enumerate() {
        for t in &blk.triplets {
            if let Some(v) = t.var {
                let mut val = t.value * duals[b][(t.row, t.col)];
                if t.row != t.col {
                    val += t.value * duals[b][(t.col, t.row)];
                }
                g[v] -= val;
            }
        }
    }
    let mut at = DMatrix::<T>::zeros(nv, k);
    for (i, eq) in p.equalities.iter().enumerate() {
        for (v, c) in &eq.terms {
            at[(*v, i)] += *c;
        }
    }
    match at.svd(true, true).solve(&g, lit(1e-12)) {
        Ok(l) => l.iter().copied().collect(),
        Err(_) => vec![T::zero(); k],
    }
}
