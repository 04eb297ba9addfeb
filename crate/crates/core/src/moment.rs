//! Outer relaxation: truncated moment vectors, moment and localizing
//! matrices, and the SDP `min <p, y>` over them.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{lattice, monomials_over, FreqIndex, IndexSet, Monomial, DEFAULT_MONOMIAL_CAP};
use crate::model::{slack_over, FourierPolynomial, Polynomial, SobolevSpace};
use crate::scalar::{Field, Real};
use crate::sdp::{
    self, Block, Equality, SdpProblem, SdpSolution, SolveStatus, SolverOptions, Triplet,
};

/// Pseudo-moments `y_ba`, keyed by monomial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Serialize",
    deserialize = "T: Deserialize<'de> + Field"
))]
pub struct MomentVector<T> {
    entries: BTreeMap<Monomial, T>,
}

impl<T: Field> MomentVector<T> {
    pub fn from_entries(entries: impl IntoIterator<Item = (Monomial, T)>) -> Self {
        MomentVector {
            entries: entries.into_iter().collect(),
        }
    }

    pub fn entries(&self) -> &BTreeMap<Monomial, T> {
        &self.entries
    }

    pub fn get(&self, m: &Monomial) -> Option<T> {
        self.entries.get(m).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, m: Monomial, v: T) {
        self.entries.insert(m, v);
    }

    /// Every monomial of `required` that has no entry.
    pub fn missing<'a>(&self, required: impl IntoIterator<Item = &'a Monomial>) -> Vec<Monomial> {
        let mut out: Vec<Monomial> = required
            .into_iter()
            .filter(|m| !self.entries.contains_key(*m))
            .cloned()
            .collect();
        out.sort();
        out.dedup();
        out
    }

    /// `ℓ_y(p) = Σ p_ba y_ba`.
    pub fn pairing(&self, p: &Polynomial<T>) -> Result<T> {
        let missing = self.missing(p.terms().keys());
        if !missing.is_empty() {
            return Err(Error::MissingMoments(missing));
        }
        Ok(p.terms().iter().fold(T::zero(), |acc, (m, c)| {
            acc + c.clone() * self.entries[m].clone()
        }))
    }

    pub fn restrict(&self, set: &IndexSet) -> Result<Self> {
        let missing = self.missing(set.members());
        if !missing.is_empty() {
            return Err(Error::MissingMoments(missing));
        }
        Ok(Self::from_entries(
            set.members()
                .iter()
                .map(|m| (m.clone(), self.entries[m].clone())),
        ))
    }

    pub fn scale(&self, t: &T) -> Self {
        Self::from_entries(
            self.entries
                .iter()
                .map(|(m, v)| (m.clone(), v.clone() * t.clone())),
        )
    }
}

/// `M[i, j] = y_{b_i ∪ b_j}`.
pub fn moment_matrix_over<T: Field>(y: &MomentVector<T>, basis: &[Monomial]) -> Result<DMatrix<T>> {
    localizing_matrix_over(y, basis, &Polynomial::constant(T::one()))
}

/// `M_g[i, j] = Σ_t g_t y_{b_i ∪ b_j ∪ t}`.
pub fn localizing_matrix_over<T: Field>(
    y: &MomentVector<T>,
    basis: &[Monomial],
    g: &Polynomial<T>,
) -> Result<DMatrix<T>> {
    let k = basis.len();
    let mut out = DMatrix::from_element(k, k, T::zero());
    let mut missing = Vec::new();
    for i in 0..k {
        for j in i..k {
            let base = basis[i].union(&basis[j])?;
            let mut acc = T::zero();
            for (t, c) in g.terms() {
                let key = base.union(t)?;
                match y.entries.get(&key) {
                    Some(v) => acc = acc + c.clone() * v.clone(),
                    None => missing.push(key),
                }
            }
            out[(i, j)] = acc.clone();
            out[(j, i)] = acc;
        }
    }
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        return Err(Error::MissingMoments(missing));
    }
    Ok(out)
}

/// Moment matrix over all monomials of degree `≤ r` in the `|a|_∞ ≤ ρ` coordinates.
pub fn moment_matrix<T: Field>(
    y: &MomentVector<T>,
    n: usize,
    r: usize,
    rho: u32,
) -> Result<DMatrix<T>> {
    let basis = monomials_over(&lattice(n, rho), r, DEFAULT_MONOMIAL_CAP)?;
    moment_matrix_over(y, &basis)
}

/// Localizing matrix of the ellipsoid slack over the degree `r - 1` basis.
pub fn localizing_matrix<T: Field>(
    y: &MomentVector<T>,
    space: &SobolevSpace,
    r: usize,
    rho: u32,
) -> Result<DMatrix<T>> {
    if r == 0 {
        return Err(Error::Degree("localizing matrix needs r >= 1".into()));
    }
    let vars = lattice(space.n(), rho);
    let basis = monomials_over(&vars, r - 1, DEFAULT_MONOMIAL_CAP)?;
    localizing_matrix_over(y, &basis, &slack_over(*space, &vars))
}

/// Which Fourier coordinates enter the relaxation.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub enum Coordinates {
    /// Every `a` with `|a|_∞ ≤ ρ`.
    #[default]
    Lattice,
    /// Only the coordinates appearing in the objective. Exact: the projection
    /// of `E` onto a coordinate subspace is the ellipsoid in those coordinates.
    ObjectiveSupport,
    Explicit(Vec<FreqIndex>),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RelaxationOptions {
    pub coordinates: Coordinates,
    /// Upper bound on the number of moment variables.
    pub cap: usize,
}

impl Default for RelaxationOptions {
    fn default() -> Self {
        RelaxationOptions {
            coordinates: Coordinates::Lattice,
            cap: DEFAULT_MONOMIAL_CAP,
        }
    }
}

/// `min <p, y>  s.t.  y_∅ = 1, M_r(y) ⪰ 0, M_{r-1}(g y) ⪰ 0`.
#[derive(Clone, Debug)]
pub struct OuterRelaxation<T> {
    pub r: usize,
    pub rho: u32,
    pub variables: Vec<FreqIndex>,
    pub basis: Vec<Monomial>,
    pub basis_loc: Vec<Monomial>,
    /// SDP variable `k` is the moment of `monomials[k]`.
    pub monomials: Vec<Monomial>,
    pub objective: Polynomial<T>,
    pub slack: Polynomial<T>,
    pub sdp: SdpProblem<T>,
}

impl<T> OuterRelaxation<T> {
    /// Monomial sitting at entry `(i, j)` of the moment matrix.
    pub fn moment_index(&self, i: usize, j: usize) -> Monomial {
        self.basis[i].union_unchecked(&self.basis[j])
    }
}

/// Outer relaxation of `min_{c ∈ E} p(c)` at algebraic degree `r`, harmonic degree `ρ`.
pub fn build_outer<T: Real>(
    objective: &FourierPolynomial<T>,
    r: usize,
    rho: u32,
) -> Result<OuterRelaxation<T>> {
    build_outer_with(objective, r, rho, &RelaxationOptions::default())
}

pub fn build_outer_with<T: Real>(
    objective: &FourierPolynomial<T>,
    r: usize,
    rho: u32,
    opts: &RelaxationOptions,
) -> Result<OuterRelaxation<T>> {
    if objective.harmonic_degree() > rho {
        return Err(Error::Degree(format!(
            "objective has harmonic degree {} above rho = {rho}",
            objective.harmonic_degree()
        )));
    }
    let vars = match &opts.coordinates {
        Coordinates::Lattice => lattice(objective.space.n(), rho),
        Coordinates::ObjectiveSupport => objective.poly.variables(),
        Coordinates::Explicit(v) => {
            for a in v {
                a.check_dim(objective.space.n())?;
                if a.sup_norm() > rho {
                    return Err(Error::Degree(format!(
                        "coordinate {a} lies outside |a| <= {rho}"
                    )));
                }
            }
            let mut v = v.clone();
            v.sort();
            v.dedup();
            v
        }
    };
    let slack = slack_over(objective.space, &vars);
    assemble(&vars, &objective.poly, &slack, r, rho, opts.cap)
}

/// Assembles the relaxation for an arbitrary variable list and slack `g ≥ 0`.
pub fn assemble<T: Real>(
    vars: &[FreqIndex],
    objective: &Polynomial<T>,
    slack: &Polynomial<T>,
    r: usize,
    rho: u32,
    cap: usize,
) -> Result<OuterRelaxation<T>> {
    if r == 0 {
        return Err(Error::Degree(
            "relaxation order r must be at least 1".into(),
        ));
    }
    if objective.degree() > 2 * r {
        return Err(Error::Degree(format!(
            "objective degree {} exceeds 2r = {}",
            objective.degree(),
            2 * r
        )));
    }
    if slack.degree() > 2 {
        return Err(Error::Degree("slack polynomial must be quadratic".into()));
    }
    let monomials = monomials_over(vars, 2 * r, cap)?;
    let index: BTreeMap<&Monomial, usize> =
        monomials.iter().enumerate().map(|(k, m)| (m, k)).collect();
    let basis = monomials_over(vars, r, cap)?;
    let basis_loc = monomials_over(vars, r - 1, cap)?;

    let mut c = vec![T::zero(); monomials.len()];
    for (m, coef) in objective.terms() {
        let k = index.get(m).ok_or_else(|| {
            Error::Degree(format!(
                "objective monomial {m} uses a coordinate outside the relaxation"
            ))
        })?;
        c[*k] = *coef;
    }

    let mut moment = Vec::with_capacity(basis.len() * (basis.len() + 1) / 2);
    for i in 0..basis.len() {
        for j in i..basis.len() {
            let u = basis[i].union_unchecked(&basis[j]);
            moment.push(Triplet {
                var: Some(index[&u]),
                row: i,
                col: j,
                value: T::one(),
            });
        }
    }
    let mut loc = Vec::new();
    for i in 0..basis_loc.len() {
        for j in i..basis_loc.len() {
            let base = basis_loc[i].union_unchecked(&basis_loc[j]);
            let mut acc: BTreeMap<usize, T> = BTreeMap::new();
            for (t, g) in slack.terms() {
                let key = base.union_unchecked(t);
                *acc.entry(index[&key]).or_insert(T::zero()) += *g;
            }
            for (v, value) in acc {
                if value != T::zero() {
                    loc.push(Triplet {
                        var: Some(v),
                        row: i,
                        col: j,
                        value,
                    });
                }
            }
        }
    }
    let one = index[&Monomial::one()];
    let sdp = SdpProblem {
        variable_count: monomials.len(),
        objective: c,
        blocks: vec![
            Block {
                size: basis.len(),
                triplets: moment,
            },
            Block {
                size: basis_loc.len(),
                triplets: loc,
            },
        ],
        equalities: vec![Equality {
            terms: vec![(one, T::one())],
            rhs: T::one(),
        }],
    };
    Ok(OuterRelaxation {
        r,
        rho,
        variables: vars.to_vec(),
        basis,
        basis_loc,
        monomials,
        objective: objective.clone(),
        slack: slack.clone(),
        sdp,
    })
}

#[derive(Clone, Debug)]
pub struct OuterSolution<T: Real> {
    pub value: T,
    pub y: MomentVector<T>,
    pub certificate: SdpSolution<T>,
}

pub fn solve_outer<T: Real>(rel: &OuterRelaxation<T>, tol: f64) -> Result<OuterSolution<T>> {
    solve_outer_with(rel, &SolverOptions::with_tol(tol))
}

pub fn solve_outer_with<T: Real>(
    rel: &OuterRelaxation<T>,
    opts: &SolverOptions,
) -> Result<OuterSolution<T>> {
    let sol = sdp::solve(&rel.sdp, opts)?;
    if sol.status != SolveStatus::Optimal {
        return Err(Error::NotConverged {
            status: sol.status,
            iterations: sol.iterations,
            gap: crate::scalar::to_f64(sol.gap),
        });
    }
    let y = MomentVector::from_entries(
        rel.monomials
            .iter()
            .cloned()
            .zip(sol.variables.iter().copied()),
    );
    Ok(OuterSolution {
        value: sol.objective,
        y,
        certificate: sol,
    })
}

/// Outcome of the PSD membership test for `C^out_{r,ρ}`.
#[derive(Clone, Debug)]
pub struct OuterMembership<T> {
    pub pass: bool,
    /// Smallest eigenvalue of the moment and localizing matrices.
    pub min_eigenvalues: [T; 2],
    /// For a failing test: the block (0 moment, 1 localizing) and `ℓ` with
    /// `ℓ(y) < 0` while `ℓ ≥ 0` on the cone, namely `v^T M(y) v` for the
    /// eigenvector `v` of the smallest eigenvalue.
    pub separating: Option<(usize, Polynomial<T>)>,
}

pub fn outer_membership<T: Real>(
    y: &MomentVector<T>,
    space: SobolevSpace,
    vars: &[FreqIndex],
    r: usize,
    tol: T,
) -> Result<OuterMembership<T>> {
    if r == 0 {
        return Err(Error::Degree(
            "relaxation order r must be at least 1".into(),
        ));
    }
    let basis = monomials_over(vars, r, DEFAULT_MONOMIAL_CAP)?;
    let basis_loc = monomials_over(vars, r - 1, DEFAULT_MONOMIAL_CAP)?;
    let slack = slack_over(space, vars);
    let needed = monomials_over(vars, 2 * r, DEFAULT_MONOMIAL_CAP)?;
    let missing = y.missing(&needed);
    if !missing.is_empty() {
        return Err(Error::MissingMoments(missing));
    }
    let mats = [
        moment_matrix_over(y, &basis)?,
        localizing_matrix_over(y, &basis_loc, &slack)?,
    ];
    let weights = [Polynomial::constant(T::one()), slack];
    let bases = [&basis, &basis_loc];
    let mut min_eigenvalues = [T::zero(); 2];
    let mut separating = None;
    for b in 0..2 {
        let (vals, vecs) = crate::linalg::sym_eigen(&mats[b]);
        let Some(&lam) = vals.first() else { continue };
        min_eigenvalues[b] = lam;
        if lam < -tol && separating.is_none() {
            let v = vecs.column(0);
            let mut ell = Polynomial::zero();
            for i in 0..bases[b].len() {
                for j in 0..bases[b].len() {
                    let base = bases[b][i].union_unchecked(&bases[b][j]);
                    for (t, g) in weights[b].terms() {
                        ell.add_term(base.union_unchecked(t), v[i] * v[j] * *g);
                    }
                }
            }
            separating = Some((b, ell));
        }
    }
    Ok(OuterMembership {
        pass: separating.is_none(),
        min_eigenvalues,
        separating,
    })
}
