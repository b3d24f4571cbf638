//! Laplacian eigendecomposition and the graph Fourier transform.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::graph::WeightedGraph;
use crate::linalg::{is_symmetric, spectral_compose, sym_eigen};
use crate::scalar::{lit, Scalar};

/// Eigenvalues sorted ascending (the graph frequencies) and the matching
/// orthonormal eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition<T: Scalar> {
    eigenvalues: DVector<T>,
    eigenvectors: DMatrix<T>,
    groups: Vec<usize>,
}

/// Relative tolerance under which two eigenvalues count as equal.
pub const EIGEN_GROUP_TOL: f64 = 1e-9;

impl<T: Scalar> SpectralDecomposition<T> {
    pub fn eigenvalues(&self) -> &DVector<T> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &DMatrix<T> {
        &self.eigenvectors
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Group id per eigenvalue index; numerically equal eigenvalues share an id.
    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    /// Mean eigenvalue of the group that index `i` belongs to.
    pub fn grouped_eigenvalue(&self, i: usize) -> T {
        let g = self.groups[i];
        let (sum, count) = self
            .groups
            .iter()
            .zip(self.eigenvalues.iter())
            .filter(|(gg, _)| **gg == g)
            .fold((T::zero(), 0usize), |(s, c), (_, &v)| (s + v, c + 1));
        sum / lit::<T>(count as f64)
    }

    /// `V diag(w) Vᵀ`.
    pub fn compose(&self, weights: &DVector<T>) -> DMatrix<T> {
        spectral_compose(&self.eigenvectors, weights)
    }

    /// Reassembled matrix `V diag(λ) Vᵀ`.
    pub fn reconstruct(&self) -> DMatrix<T> {
        self.compose(&self.eigenvalues)
    }

    /// Columns of `V` for the given frequency indices.
    pub fn basis(&self, indices: &[usize]) -> DMatrix<T> {
        self.eigenvectors.select_columns(indices)
    }
}

pub fn spectral_decompose<T: Scalar>(l: &DMatrix<T>) -> Result<SpectralDecomposition<T>> {
    if !l.is_square() {
        return Err(Error::Structural(format!("matrix must be square, got {}x{}", l.nrows(), l.ncols())));
    }
    if !is_symmetric(l, lit(1e-10)) {
        return Err(Error::Structural("matrix is not symmetric".into()));
    }
    let eig = sym_eigen(l);
    let n = eig.values.len();
    let top = if n == 0 { T::zero() } else { eig.values[n - 1].abs() };
    let tol = lit::<T>(EIGEN_GROUP_TOL) * top.max(T::one());
    let mut groups = Vec::with_capacity(n);
    let mut gid = 0usize;
    for i in 0..n {
        if i > 0 && (eig.values[i] - eig.values[i - 1]).abs() > tol {
            gid += 1;
        }
        groups.push(gid);
    }
    Ok(SpectralDecomposition { eigenvalues: eig.values, eigenvectors: eig.vectors, groups })
}

/// Decompose the Laplacian of `graph`.
pub fn decompose_graph<T: Scalar>(graph: &WeightedGraph<T>) -> SpectralDecomposition<T> {
    spectral_decompose(&graph.laplacian()).expect("graph Laplacians are symmetric")
}

fn check_len<T: Scalar>(decomp: &SpectralDecomposition<T>, a: &DVector<T>) -> Result<()> {
    if a.len() != decomp.dim() {
        return Err(Error::Structural(format!("signal length {} does not match graph size {}", a.len(), decomp.dim())));
    }
    Ok(())
}

/// Graph Fourier transform `ã = Vᵀa`.
pub fn gft<T: Scalar>(decomp: &SpectralDecomposition<T>, a: &DVector<T>) -> Result<DVector<T>> {
    check_len(decomp, a)?;
    Ok(decomp.eigenvectors.tr_mul(a))
}

/// Inverse transform `a = Vã`.
pub fn igft<T: Scalar>(decomp: &SpectralDecomposition<T>, coeffs: &DVector<T>) -> Result<DVector<T>> {
    check_len(decomp, coeffs)?;
    Ok(&decomp.eigenvectors * coeffs)
}

/// Smoothness `aᵀLa`.
pub fn total_variation<T: Scalar>(l: &DMatrix<T>, a: &DVector<T>) -> Result<T> {
    if l.nrows() != a.len() || !l.is_square() {
        return Err(Error::Structural("dimension mismatch in total_variation".into()));
    }
    Ok(a.dot(&(l * a)))
}

/// `Σ_edges w (a_k − a_l)²`.
pub fn total_variation_edges<T: Scalar>(graph: &WeightedGraph<T>, a: &DVector<T>) -> Result<T> {
    if graph.n_nodes() != a.len() {
        return Err(Error::Structural("dimension mismatch in total_variation_edges".into()));
    }
    Ok(graph.edges().iter().fold(T::zero(), |acc, e| {
        let diff = a[e.a] - a[e.b];
        acc + e.weight * diff * diff
    }))
}

/// `Σ λ_n ã_n²`.
pub fn total_variation_spectral<T: Scalar>(decomp: &SpectralDecomposition<T>, a: &DVector<T>) -> Result<T> {
    let coeffs = gft(decomp, a)?;
    Ok(coeffs.iter().zip(decomp.eigenvalues.iter()).fold(T::zero(), |acc, (&c, &l)| acc + l * c * c))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> WeightedGraph<f64> {
        WeightedGraph::from_triples(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn path_three_spectrum() {
        // 2 - 2cos(kπ/3), k = 0, 1, 2
        let d = decompose_graph(&path3());
        let expected: Vec<f64> = (0..3).map(|k| 2.0 - 2.0 * (k as f64 * std::f64::consts::PI / 3.0).cos()).collect();
        assert_eq!(expected.iter().map(|v| (v * 1e9).round() / 1e9).collect::<Vec<_>>(), vec![0.0, 1.0, 3.0]);
        for (got, want) in d.eigenvalues().iter().zip(&expected) {
            assert!((got - want).abs() < 1e-12);
        }
        assert!((d.reconstruct() - path3().laplacian()).norm() < 1e-12);
    }

    #[test]
    fn two_node_spectrum() {
        let g = WeightedGraph::<f64>::from_triples(2, &[(0, 1, 1.0)]).unwrap();
        let d = decompose_graph(&g);
        assert!(d.eigenvalues()[0].abs() < 1e-14);
        assert!((d.eigenvalues()[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn constant_eigenvector_for_connected() {
        let g = WeightedGraph::<f64>::from_triples(4, &[(0, 1, 2.0), (1, 2, 0.5), (2, 3, 3.0), (0, 3, 1.0)]).unwrap();
        let d = decompose_graph(&g);
        assert!(d.eigenvalues()[0].abs() < 1e-12);
        for v in d.eigenvectors().column(0).iter() {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_non_symmetric() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(matches!(spectral_decompose(&m), Err(Error::Structural(_))));
    }

    #[test]
    fn gft_of_eigenvector_is_unit() {
        let d = decompose_graph(&path3());
        let col = d.eigenvectors().column(1).into_owned();
        let c = gft(&d, &col).unwrap();
        assert!((c - DVector::from_vec(vec![0.0, 1.0, 0.0])).norm() < 1e-12);
        assert!(gft(&d, &DVector::zeros(2)).is_err());
    }

    #[test]
    fn tv_examples() {
        let g = path3();
        let l = g.laplacian();
        assert_eq!(total_variation(&l, &DVector::from_element(3, 4.0)).unwrap(), 0.0);
        assert_eq!(total_variation(&l, &DVector::from_vec(vec![1.0, 0.0, 0.0])).unwrap(), 1.0);
    }

    #[test]
    fn complete_graph_groups() {
        let mut t = Vec::new();
        for i in 0..4 {
            for j in (i + 1)..4 {
                t.push((i, j, 1.0));
            }
        }
        let d = decompose_graph(&WeightedGraph::<f64>::from_triples(4, &t).unwrap());
        assert_eq!(d.groups(), &[0, 1, 1, 1]);
        assert!((d.grouped_eigenvalue(2) - 4.0).abs() < 1e-12);
    }
}
