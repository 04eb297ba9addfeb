//! Small dense helpers shared by the solver, the certifier and extraction.

use nalgebra::{Cholesky, DMatrix, SymmetricEigen};

use crate::scalar::{lit, Real};

/// `tr(A^T B)`.
pub fn inner<T: Real>(a: &DMatrix<T>, b: &DMatrix<T>) -> T {
    a.iter()
        .zip(b.iter())
        .fold(T::zero(), |acc, (x, y)| acc + *x * *y)
}

pub fn symmetrize<T: Real>(a: &DMatrix<T>) -> DMatrix<T> {
    (a + a.transpose()) * lit::<T>(0.5)
}

/// Eigenvalues in ascending order with matching eigenvector columns.
pub fn sym_eigen<T: Real>(a: &DMatrix<T>) -> (Vec<T>, DMatrix<T>) {
    let eig = SymmetricEigen::new(symmetrize(a));
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| {
        eig.eigenvalues[i]
            .partial_cmp(&eig.eigenvalues[j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let n = a.nrows();
    let mut vecs = DMatrix::zeros(n, n);
    let mut vals = Vec::with_capacity(n);
    for (k, &i) in order.iter().enumerate() {
        vals.push(eig.eigenvalues[i]);
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Smallest eigenvalue of a symmetric matrix, `0` for an empty one.
pub fn min_eigenvalue<T: Real>(a: &DMatrix<T>) -> T {
    if a.nrows() == 0 {
        return T::zero();
    }
    SymmetricEigen::new(symmetrize(a))
        .eigenvalues
        .iter()
        .copied()
        .fold(T::max_value().unwrap_or_else(|| lit(f64::MAX)), |m, v| {
            m.min(v)
        })
}

/// Largest `α ≥ 0` keeping `X + α dX` positive definite, given the Cholesky
/// factor of `X`. Returns `None` when every step length is admissible.
pub fn max_step<T: Real>(chol: &Cholesky<T, nalgebra::Dyn>, dx: &DMatrix<T>) -> Option<T> {
    let l = chol.l();
    let y = l.solve_lower_triangular(dx)?;
    let z = l.solve_lower_triangular(&y.transpose())?;
    let lam = min_eigenvalue(&z);
    if lam < T::zero() {
        Some(-T::one() / lam)
    } else {
        None
    }
}

/// Numerical rank of a symmetric PSD matrix: eigenvalues above `rel · λ_max`.
pub fn psd_rank<T: Real>(a: &DMatrix<T>, rel: T) -> usize {
    if a.nrows() == 0 {
        return 0;
    }
    let (vals, _) = sym_eigen(a);
    let top = vals.last().copied().unwrap_or_else(T::zero).max(T::zero());
    if top <= T::zero() {
        return 0;
    }
    vals.iter().filter(|v| **v > rel * top).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted() {
        let a = DMatrix::<f64>::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let (vals, vecs) = sym_eigen(&a);
        assert!((vals[0] - 1.0).abs() < 1e-12 && (vals[1] - 3.0).abs() < 1e-12);
        let v = vecs.column(0);
        assert!((v[0] + v[1]).abs() < 1e-12);
        assert!((min_eigenvalue(&a) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_to_boundary() {
        let x = DMatrix::<f64>::identity(2, 2);
        let dx = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![-2.0, 1.0]));
        let chol = Cholesky::new(x).unwrap();
        assert!((max_step(&chol, &dx).unwrap() - 0.5).abs() < 1e-12);
        assert!(max_step(&chol, &DMatrix::identity(2, 2)).is_none());
    }

    #[test]
    fn rank_of_outer_product() {
        let v = nalgebra::DVector::from_vec(vec![1.0, 2.0, 3.0]);
        let a = &v * v.transpose();
        assert_eq!(psd_rank(&a, 1e-9), 1);
    }
}
