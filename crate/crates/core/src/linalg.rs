//! Small dense linear-algebra helpers shared across modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default relative cutoff for pseudoinverse singular values.
pub const DEFAULT_RCOND: f64 = 1e-12;

pub fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * T::lit(0.5)
}

/// Eigendecomposition of a symmetric matrix with eigenvalues sorted in
/// descending order (eigenvector columns permuted accordingly).
pub fn sorted_symmetric_eigen<T: Scalar>(m: &DMatrix<T>) -> (DVector<T>, DMatrix<T>) {
    let n = m.nrows();
    if n == 0 {
        return (DVector::zeros(0), DMatrix::zeros(0, 0));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap_or(std::cmp::Ordering::Equal));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

/// Smallest eigenvalue of a symmetric matrix (`+inf` for an empty matrix).
pub fn min_eigenvalue<T: Scalar>(m: &DMatrix<T>) -> T {
    if m.nrows() == 0 {
        return T::max_value().unwrap_or_else(T::one);
    }
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(T::max_value().unwrap_or_else(T::one), |a, b| a.min(b))
}

/// Eigenvalues of a general real square matrix.
pub fn complex_eigenvalues<T: Scalar>(a: &DMatrix<T>) -> Vec<nalgebra::Complex<T>> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    a.clone().complex_eigenvalues().iter().copied().collect()
}

/// Largest eigenvalue modulus.
pub fn spectral_radius<T: Scalar>(a: &DMatrix<T>) -> T {
    complex_eigenvalues(a).iter().map(|z| (z.re * z.re + z.im * z.im).sqrt()).fold(T::zero(), |m, r| m.max(r))
}

/// Singular values in descending order.
pub fn singular_values<T: Scalar>(m: &DMatrix<T>) -> Vec<T> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<T> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap_or(std::cmp::Ordering::Equal));
    s
}

/// Largest singular value (matrix two-norm).
pub fn max_singular_value<T: Scalar>(m: &DMatrix<T>) -> T {
    singular_values(m).first().copied().unwrap_or_else(T::zero)
}

/// Sum of singular values.
pub fn nuclear_norm<T: Scalar>(m: &DMatrix<T>) -> T {
    singular_values(m).into_iter().fold(T::zero(), |a, b| a + b)
}

/// Moore-Penrose pseudoinverse, truncating singular values below
/// `rcond * sigma_max`. Returns the pseudoinverse and the numerical rank.
pub fn pseudo_inverse<T: Scalar>(m: &DMatrix<T>, rcond: T) -> (DMatrix<T>, usize) {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return (DMatrix::zeros(cols, rows), 0);
    }
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("left singular vectors requested");
    let v_t = svd.v_t.expect("right singular vectors requested");
    let sigma_max = svd.singular_values.iter().copied().fold(T::zero(), |a, b| a.max(b));
    let cutoff = rcond * sigma_max;
    let mut pinv = DMatrix::zeros(cols, rows);
    let mut rank = 0;
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s > cutoff && s > T::zero() {
            rank += 1;
            pinv += v_t.row(k).transpose() * u.column(k).transpose() * (T::one() / s);
        }
    }
    (pinv, rank)
}

/// Solves the discrete Lyapunov equation `Aᵀ P A − ρ² P + Q = 0` for `P`
/// through its Kronecker-product form.
pub fn discrete_lyapunov<T: Scalar>(a: &DMatrix<T>, rho: T, q: &DMatrix<T>) -> Result<DMatrix<T>> {
    let n = a.nrows();
    if a.ncols() != n || q.shape() != (n, n) {
        return Err(Error::InvalidData("Lyapunov equation needs square A and Q of equal size".into()));
    }
    let at = a.transpose();
    let nn = n * n;
    // vec(Aᵀ P A) = (Aᵀ ⊗ Aᵀ) vec(P) with column-major vec.
    let mut system = DMatrix::<T>::identity(nn, nn) * (rho * rho);
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                for l in 0..n {
                    system[(i * n + k, j * n + l)] -= at[(i, j)] * at[(k, l)];
                }
            }
        }
    }
    let rhs = DVector::from_column_slice(q.as_slice());
    let sol = system.lu().solve(&rhs).ok_or_else(|| Error::InvalidData("Lyapunov equation is singular".into()))?;
    Ok(symmetrize(&DMatrix::from_column_slice(n, n, sol.as_slice())))
}

pub fn all_finite<T: Scalar>(values: &[T]) -> bool {
    values.iter().all(|v| v.is_finite())
}
