//! Minimizer recovery from flat truncated moment vectors.
//!
//! Column echelon form of a factor of the moment matrix, multiplication
//! matrices per coordinate, and a real Schur decomposition of a random
//! convex combination of them.

use log::debug;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::index::{lattice, monomials_over, FreqIndex, Monomial, DEFAULT_MONOMIAL_CAP};
use crate::linalg::sym_eigen;
use crate::model::{synthesize, Atom, AtomicMeasure, CoefficientPoint, SobolevSpace};
use crate::moment::{moment_matrix_over, MomentVector};
use crate::scalar::{lit, to_f64, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtractOptions {
    /// Singular values below `rank_tol · σ_max` count as zero.
    pub rank_tol: f64,
    /// Largest accepted moment mismatch of the extracted atoms.
    pub residual_tol: f64,
    /// Seed of the random combination of multiplication matrices.
    pub seed: u64,
}

impl ExtractOptions {
    /// Thresholds matched to moments coming out of an interior-point solve at
    /// relative accuracy `tol`. Moments that the objective pins only through a
    /// higher even power (`y_{c^2} ≤ sqrt(y_{c^4})`) carry errors of order
    /// `sqrt(tol)`, so ranks and residuals are judged at `10 sqrt(tol)`.
    pub fn for_solver_tol(tol: f64) -> Self {
        let floor = 10.0 * tol.sqrt();
        ExtractOptions {
            rank_tol: floor.max(1e-6),
            residual_tol: floor.max(1e-5),
            ..Self::default()
        }
    }
}

impl Default for ExtractOptions {
    fn default() -> Self {
        ExtractOptions {
            rank_tol: 1e-6,
            residual_tol: 1e-5,
            seed: 0x5eed,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Serialize + Real",
    deserialize = "T: Deserialize<'de> + Real"
))]
pub struct ExtractionReport<T: Real> {
    pub flat: bool,
    /// Numerical rank of `M_r`.
    pub rank: usize,
    /// Numerical rank of `M_{r-1}`.
    pub rank_lower: usize,
    pub atoms: Vec<Atom<T>>,
    /// Max deviation between the input moments and the atoms' moments.
    pub residual: T,
    pub diagnostics: Option<String>,
}

impl<T: Real> ExtractionReport<T> {
    fn failed(rank: usize, rank_lower: usize, why: String) -> Self {
        debug!("extraction: {why}");
        ExtractionReport {
            flat: false,
            rank,
            rank_lower,
            atoms: Vec::new(),
            residual: T::zero(),
            diagnostics: Some(why),
        }
    }

    pub fn measure(&self) -> Result<AtomicMeasure<T>> {
        AtomicMeasure::new(self.atoms.clone())
    }
}

fn numeric_rank<T: Real>(m: &DMatrix<T>, rank_tol: f64) -> usize {
    if m.nrows() == 0 {
        return 0;
    }
    let sv = m.clone().singular_values();
    let top = sv.iter().copied().fold(T::zero(), |a, b| a.max(b));
    if top <= T::zero() {
        return 0;
    }
    sv.iter().filter(|s| **s > lit::<T>(rank_tol) * top).count()
}

/// Ranks of `M_r` and `M_{r-1}` over the given coordinates; flat iff equal.
pub fn check_flat_over<T: Real>(
    y: &MomentVector<T>,
    vars: &[FreqIndex],
    r: usize,
    rank_tol: f64,
) -> Result<(bool, usize, usize)> {
    if r == 0 {
        return Err(Error::Degree("flatness check needs r >= 1".into()));
    }
    let basis = monomials_over(vars, r, DEFAULT_MONOMIAL_CAP)?;
    let m = moment_matrix_over(y, &basis)?;
    let lower = monomials_over(vars, r - 1, DEFAULT_MONOMIAL_CAP)?.len();
    let rk = numeric_rank(&m, rank_tol);
    let rk_lower = numeric_rank(&m.view((0, 0), (lower, lower)).into_owned(), rank_tol);
    Ok((rk == rk_lower, rk, rk_lower))
}

/// Flatness over every coordinate with `|a|_∞ ≤ ρ`.
pub fn check_flat<T: Real>(
    y: &MomentVector<T>,
    n: usize,
    r: usize,
    rho: u32,
    rank_tol: f64,
) -> Result<(bool, usize)> {
    let (flat, rk, _) = check_flat_over(y, &lattice(n, rho), r, rank_tol)?;
    Ok((flat, rk))
}

/// Reduced column echelon form of `v` (rows = basis monomials). Returns the
/// pivot rows and `U` with `U[pivot_k, :] = e_k`.
fn column_echelon<T: Real>(v: &DMatrix<T>, tol: T) -> (Vec<usize>, DMatrix<T>) {
    let mut a = v.transpose();
    let (s, n) = a.shape();
    let mut pivots = Vec::new();
    let mut row = 0;
    for j in 0..n {
        if row == s {
            break;
        }
        let (mut best, mut arg) = (T::zero(), row);
        for i in row..s {
            if a[(i, j)].abs() > best {
                best = a[(i, j)].abs();
                arg = i;
            }
        }
        if best <= tol {
            for i in row..s {
                a[(i, j)] = T::zero();
            }
            continue;
        }
        a.swap_rows(row, arg);
        let p = a[(row, j)];
        for c in 0..n {
            a[(row, c)] /= p;
        }
        for i in 0..s {
            if i != row {
                let f = a[(i, j)];
                if f != T::zero() {
                    for c in 0..n {
                        let val = a[(row, c)];
                        a[(i, c)] -= f * val;
                    }
                }
            }
        }
        pivots.push(j);
        row += 1;
    }
    (pivots, a.transpose())
}

/// Extracts atoms from a flat moment vector over the given coordinates.
pub fn extract_atoms_over<T: Real>(
    y: &MomentVector<T>,
    vars: &[FreqIndex],
    r: usize,
    opts: &ExtractOptions,
) -> Result<ExtractionReport<T>> {
    let (flat, rank, rank_lower) = check_flat_over(y, vars, r, opts.rank_tol)?;
    if !flat {
        return Ok(ExtractionReport::failed(
            rank,
            rank_lower,
            format!("rank M_r = {rank} differs from rank M_(r-1) = {rank_lower}"),
        ));
    }
    if rank == 0 {
        return Ok(ExtractionReport::failed(
            rank,
            rank_lower,
            "moment matrix is zero".into(),
        ));
    }
    let basis = monomials_over(vars, r, DEFAULT_MONOMIAL_CAP)?;
    let m = moment_matrix_over(y, &basis)?;
    let (vals, vecs) = sym_eigen(&m);
    let nb = basis.len();
    let mut v = DMatrix::<T>::zeros(nb, rank);
    for k in 0..rank {
        let idx = nb - 1 - k;
        let scale = vals[idx].max(T::zero()).sqrt();
        v.set_column(k, &(vecs.column(idx) * scale));
    }
    let vmax = v.iter().fold(T::zero(), |a, b| a.max(b.abs()));
    let (pivots, u) = column_echelon(&v, lit::<T>(opts.rank_tol.sqrt()) * vmax);
    if pivots.len() != rank {
        return Ok(ExtractionReport::failed(
            rank,
            rank_lower,
            format!("echelon form found {} pivots for rank {rank}", pivots.len()),
        ));
    }
    let generators: Vec<&Monomial> = pivots.iter().map(|&p| &basis[p]).collect();
    if generators.iter().any(|g| g.degree() >= r) {
        return Ok(ExtractionReport::failed(
            rank,
            rank_lower,
            "generating monomials exceed degree r - 1".into(),
        ));
    }
    let position = |mono: &Monomial| basis.iter().position(|b| b == mono);
    let mut mult = Vec::with_capacity(vars.len());
    for a in vars {
        let mut ni = DMatrix::<T>::zeros(rank, rank);
        for (j, g) in generators.iter().enumerate() {
            let prod = g.union_unchecked(&Monomial::var(a.clone()));
            let row =
                position(&prod).expect("product of a generator and a variable lies in the basis");
            ni.set_row(j, &u.row(row));
        }
        mult.push(ni);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut lambda: Vec<f64> = (0..vars.len())
        .map(|_| rng.random_range(0.1..1.0))
        .collect();
    let total: f64 = lambda.iter().sum();
    lambda.iter_mut().for_each(|l| *l /= total);
    let mut comb = DMatrix::<T>::zeros(rank, rank);
    for (ni, l) in mult.iter().zip(&lambda) {
        comb += ni * lit::<T>(*l);
    }
    let (q, t) = comb.clone().schur().unpack();
    let scale = t.iter().fold(T::one(), |a, b| a.max(b.abs()));
    for k in 1..rank {
        if t[(k, k - 1)].abs() > lit::<T>(1e-8) * scale {
            return Ok(ExtractionReport::failed(
                rank,
                rank_lower,
                "combined multiplication matrix has complex eigenvalues".into(),
            ));
        }
    }
    let mut points = Vec::with_capacity(rank);
    for k in 0..rank {
        let qk = q.column(k);
        let coords: Vec<(FreqIndex, T)> = vars
            .iter()
            .zip(&mult)
            .map(|(a, ni)| (a.clone(), (qk.transpose() * ni * qk)[(0, 0)]))
            .collect();
        points.push(CoefficientPoint::from_pairs(coords));
    }

    // weights from the degree <= r moments
    let mut design = DMatrix::<T>::zeros(nb, rank);
    let mut target = nalgebra::DVector::<T>::zeros(nb);
    for (i, b) in basis.iter().enumerate() {
        for (k, p) in points.iter().enumerate() {
            design[(i, k)] = p.monomial(b);
        }
        target[i] = y.get(b).unwrap_or_else(T::zero);
    }
    let weights = match design.svd(true, true).solve(&target, lit(1e-14)) {
        Ok(w) => w,
        Err(e) => {
            return Ok(ExtractionReport::failed(
                rank,
                rank_lower,
                format!("weight solve: {e}"),
            ))
        }
    };
    if weights.iter().any(|w| *w <= T::zero()) {
        return Ok(ExtractionReport::failed(
            rank,
            rank_lower,
            format!(
                "nonpositive atom weight {:?}",
                weights.iter().map(|w| to_f64(*w)).collect::<Vec<_>>()
            ),
        ));
    }
    let atoms: Vec<Atom<T>> = points
        .into_iter()
        .zip(weights.iter())
        .map(|(point, w)| Atom { weight: *w, point })
        .collect();
    let residual = moment_residual(y, vars, &atoms);
    if residual > lit::<T>(opts.residual_tol) {
        return Ok(ExtractionReport {
            flat: false,
            rank,
            rank_lower,
            atoms,
            residual,
            diagnostics: Some(format!(
                "moment residual {:.3e} above tolerance",
                to_f64(residual)
            )),
        });
    }
    Ok(ExtractionReport {
        flat: true,
        rank,
        rank_lower,
        atoms,
        residual,
        diagnostics: None,
    })
}

/// Max `|y_ba - Σ_k w_k x_k^ba|` over the entries of `y` supported on `vars`.
pub fn moment_residual<T: Real>(y: &MomentVector<T>, vars: &[FreqIndex], atoms: &[Atom<T>]) -> T {
    let mut worst = T::zero();
    for (m, v) in y.entries() {
        if !m.entries().iter().all(|a| vars.binary_search(a).is_ok()) {
            continue;
        }
        let model = atoms
            .iter()
            .fold(T::zero(), |acc, a| acc + a.weight * a.point.monomial(m));
        worst = worst.max((model - *v).abs());
    }
    worst
}

/// Extraction over the full `|a|_∞ ≤ ρ` lattice; atoms outside `E` (beyond
/// `1e-6`) turn the report non-flat.
pub fn extract_atoms<T: Real>(
    y: &MomentVector<T>,
    space: &SobolevSpace,
    r: usize,
    rho: u32,
    opts: &ExtractOptions,
) -> Result<ExtractionReport<T>> {
    let vars = lattice(space.n(), rho);
    let mut rep = extract_atoms_over(y, &vars, r, opts)?;
    require_in_ellipsoid(&mut rep, space)?;
    Ok(rep)
}

pub fn require_in_ellipsoid<T: Real>(
    rep: &mut ExtractionReport<T>,
    space: &SobolevSpace,
) -> Result<()> {
    if !rep.flat {
        return Ok(());
    }
    for (k, a) in rep.atoms.iter().enumerate() {
        if !a.point.in_ellipsoid_tol(space, 1e-6)? {
            rep.flat = false;
            rep.diagnostics = Some(format!("atom {k} lies outside the ellipsoid"));
        }
    }
    Ok(())
}

/// `f*(x)` for every atom and grid point.
pub fn atoms_to_functions<T: Real>(atoms: &[Atom<T>], grid: &[Vec<f64>]) -> Vec<Vec<T>> {
    atoms
        .iter()
        .map(|a| grid.iter().map(|x| synthesize(&a.point, x)).collect())
        .collect()
}
