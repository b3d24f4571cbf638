//! Dense symmetric linear-algebra helpers shared by the spectral, estimator
//! and cost modules.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

/// Eigen-decomposition of a symmetric matrix with eigenvalues ascending and a
/// fixed sign per eigenvector (largest-magnitude entry positive, first index
/// on ties).
#[derive(Debug, Clone)]
pub struct SymEigen<T: Scalar> {
    pub values: DVector<T>,
    pub vectors: DMatrix<T>,
}

pub fn max_abs<T: Scalar>(m: &DMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

pub fn is_symmetric<T: Scalar>(m: &DMatrix<T>, rel_tol: T) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = max_abs(m).max(T::one());
    let n = m.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            if (m[(i, j)] - m[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

pub fn symmetrize<T: Scalar>(m: &DMatrix<T>) -> DMatrix<T> {
    (m + m.transpose()) * lit::<T>(0.5)
}

/// Flip `v` so its largest-magnitude entry is positive.
pub fn fix_sign<T: Scalar>(mut v: nalgebra::DVectorViewMut<'_, T>) {
    let mut best = 0usize;
    let mut best_abs = T::zero();
    let slack = lit::<T>(1e-12);
    for (i, x) in v.iter().enumerate() {
        let a = x.abs();
        if a > best_abs * (T::one() + slack) {
            best = i;
            best_abs = a;
        }
    }
    if v[best] < T::zero() {
        v.neg_mut();
    }
}

pub fn sym_eigen<T: Scalar>(m: &DMatrix<T>) -> SymEigen<T> {
    let n = m.nrows();
    let eig = SymmetricEigen::new(symmetrize(m));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
        fix_sign(vectors.column_mut(dst));
    }
    SymEigen { values, vectors }
}

/// Rebuild `V diag(w) Vᵀ`.
pub fn spectral_compose<T: Scalar>(vectors: &DMatrix<T>, weights: &DVector<T>) -> DMatrix<T> {
    let mut scaled = vectors.clone();
    for (j, w) in weights.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*w);
    }
    symmetrize(&(scaled * vectors.transpose()))
}

/// Pseudo-inverse-capable factorization of a symmetric positive semi-definite
/// matrix. Eigenvalues at or below `threshold` are treated as zero.
#[derive(Debug, Clone)]
pub struct PsdFactor<T: Scalar> {
    pub eig: SymEigen<T>,
    pub threshold: T,
    pub rank: usize,
}

impl<T: Scalar> PsdFactor<T> {
    /// Relative threshold used to decide numerical singularity.
    pub const REL_THRESHOLD: f64 = 1e-10;

    pub fn new(m: &DMatrix<T>) -> Self {
        let eig = sym_eigen(m);
        let n = eig.values.len();
        let top = if n == 0 { T::zero() } else { eig.values[n - 1].abs() };
        let threshold = top * lit::<T>(Self::REL_THRESHOLD);
        let rank = eig.values.iter().filter(|&&v| v > threshold).count();
        PsdFactor { eig, threshold, rank }
    }

    pub fn dim(&self) -> usize {
        self.eig.values.len()
    }

    pub fn is_singular(&self) -> bool {
        self.rank < self.dim()
    }

    fn inv_weights(&self, power: i32) -> DVector<T> {
        self.eig.values.map(|v| {
            if v > self.threshold {
                let mut w = T::one();
                for _ in 0..power {
                    w /= v;
                }
                w
            } else {
                T::zero()
            }
        })
    }

    /// `K†` (the inverse when non-singular).
    pub fn pinv(&self) -> DMatrix<T> {
        spectral_compose(&self.eig.vectors, &self.inv_weights(1))
    }

    /// `(K†)²`.
    pub fn pinv_sq(&self) -> DMatrix<T> {
        spectral_compose(&self.eig.vectors, &self.inv_weights(2))
    }

    pub fn solve(&self, b: &DVector<T>) -> DVector<T> {
        let v = &self.eig.vectors;
        let coeffs = v.tr_mul(b).component_mul(&self.inv_weights(1));
        v * coeffs
    }

    /// Sum of reciprocal nonzero eigenvalues, i.e. `tr(K†)`.
    pub fn trace_pinv(&self) -> T {
        self.eig.values.iter().filter(|&&v| v > self.threshold).fold(T::zero(), |acc, &v| acc + T::one() / v)
    }

    /// Index of the smallest eigenvalue above the threshold.
    pub fn min_nonzero_index(&self) -> Option<usize> {
        self.eig.values.iter().position(|&v| v > self.threshold)
    }

    /// Projector onto the numerical kernel.
    pub fn kernel_projector(&self) -> DMatrix<T> {
        let w = self.eig.values.map(|v| if v > self.threshold { T::zero() } else { T::one() });
        spectral_compose(&self.eig.vectors, &w)
    }
}

/// Inverse of a symmetric positive-definite matrix, or a rank error.
pub fn spd_inverse<T: Scalar>(m: &DMatrix<T>, what: &str) -> Result<DMatrix<T>> {
    let f = PsdFactor::new(m);
    if f.is_singular() || f.dim() == 0 && m.nrows() > 0 {
        return Err(Error::Rank(format!("{what} is numerically singular (rank {} of {})", f.rank, f.dim())));
    }
    Ok(f.pinv())
}

/// Whether the top (or bottom) eigenvalue of an ascending spectrum is
/// repeated within `rel_tol`.
pub fn is_degenerate<T: Scalar>(values: &[T], idx: usize, rel_tol: T) -> bool {
    let scale = values.iter().fold(T::zero(), |a, v| a.max(v.abs()));
    let tol = rel_tol * scale;
    let v = values[idx];
    values.iter().enumerate().any(|(i, &w)| i != idx && (w - v).abs() <= tol)
}

pub fn trace<T: Scalar>(m: &DMatrix<T>) -> T {
    m.diagonal().sum()
}

/// Largest eigenvalue of a symmetric matrix and its unit eigenvector.
pub fn max_eigenpair<T: Scalar>(m: &DMatrix<T>) -> (T, DVector<T>, bool) {
    let e = sym_eigen(m);
    let n = e.values.len();
    let degenerate = n > 1 && is_degenerate(e.values.as_slice(), n - 1, lit(1e-9));
    (e.values[n - 1], e.vectors.column(n - 1).into_owned(), degenerate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_and_signed() {
        let m = DMatrix::from_row_slice(3, 3, &[2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
        let e = sym_eigen(&m);
        assert!(e.values[0] <= e.values[1] && e.values[1] <= e.values[2]);
        for j in 0..3 {
            let col = e.vectors.column(j);
            let (imax, _) =
                col.iter().enumerate().fold(
                    (0, 0.0f64),
                    |(bi, bv), (i, v): (usize, &f64)| if v.abs() > bv + 1e-12 { (i, v.abs()) } else { (bi, bv) },
                );
            assert!(col[imax] > 0.0);
        }
        let back = spectral_compose(&e.vectors, &e.values);
        assert!((back - m).norm() < 1e-12);
    }

    #[test]
    fn pinv_of_singular() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let f: PsdFactor<f64> = PsdFactor::new(&m);
        assert_eq!(f.rank, 1);
        let p = f.pinv();
        assert!((&m * &p * &m - &m).norm() < 1e-12);
        assert!((f.trace_pinv() - 0.5).abs() < 1e-12);
        assert!(spd_inverse(&m, "m").is_err());
    }
}
