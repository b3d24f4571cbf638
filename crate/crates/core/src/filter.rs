//! Spectral graph filters `h(L) = V diag(h(λ)) Vᵀ`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{is_finite, lit, Scalar};
use crate::spectral::{gft, igft, SpectralDecomposition, EIGEN_GROUP_TOL};

/// Relative cutoff below which a response counts as zero when reciprocated.
pub const DAGGER_TOL: f64 = 1e-10;

/// A frequency response evaluated on the Laplacian spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FilterSpec {
    /// `h(λ) = 1`.
    Identity,
    /// `h(λ) = λᵏ`.
    LaplacianPower { k: u32 },
    /// `h(λ) = λ^{-1/2}` on the nonzero spectrum, 0 on the kernel, so that
    /// `h²` is the Laplacian pseudo-inverse.
    Gmrf,
    /// `h(λ) = 1 / (1 + αλ)`.
    Tikhonov { alpha: f64 },
    /// Heat kernel `h(λ) = e^{−τλ}`.
    Diffusion { tau: f64 },
    /// `h(λ) = e^{τλ}`.
    InverseDiffusion { tau: f64 },
    /// 1 on the listed frequency indices (ascending order), 0 elsewhere.
    IdealProjector { indices: Vec<usize> },
    /// Tabulated response per eigenvalue index.
    Custom { response: Vec<f64> },
    /// Integer power of another response; negative exponents reciprocate
    /// nonzero values and keep zeros at zero.
    Power { base: Box<FilterSpec>, exponent: i32 },
    /// Pseudo-inverse of another response.
    Dagger { base: Box<FilterSpec> },
}

impl FilterSpec {
    pub fn power(base: FilterSpec, exponent: i32) -> Self {
        FilterSpec::Power { base: Box::new(base), exponent }
    }

    pub fn dagger(base: FilterSpec) -> Self {
        FilterSpec::Dagger { base: Box::new(base) }
    }

    /// Response per eigenvalue index.
    pub fn response<T: Scalar>(&self, decomp: &SpectralDecomposition<T>) -> Result<DVector<T>> {
        let n = decomp.dim();
        let lam = |i: usize| decomp.grouped_eigenvalue(i);
        let lmax = decomp.eigenvalues().iter().fold(T::zero(), |a, v| a.max(v.abs()));
        let kernel_tol = lit::<T>(EIGEN_GROUP_TOL) * lmax.max(T::one());
        let r = match self {
            FilterSpec::Identity => DVector::from_element(n, T::one()),
            FilterSpec::LaplacianPower { k } => DVector::from_fn(n, |i, _| lam(i).powi(*k as i32)),
            FilterSpec::Gmrf => DVector::from_fn(n, |i, _| {
                let l = lam(i);
                if l <= kernel_tol {
                    T::zero()
                } else {
                    T::one() / l.sqrt()
                }
            }),
            FilterSpec::Tikhonov { alpha } => {
                DVector::from_fn(n, |i, _| T::one() / (T::one() + lit::<T>(*alpha) * lam(i)))
            }
            FilterSpec::Diffusion { tau } => DVector::from_fn(n, |i, _| (-lit::<T>(*tau) * lam(i)).exp()),
            FilterSpec::InverseDiffusion { tau } => DVector::from_fn(n, |i, _| (lit::<T>(*tau) * lam(i)).exp()),
            FilterSpec::IdealProjector { indices } => {
                let mut r = DVector::zeros(n);
                for &i in indices {
                    if i >= n {
                        return Err(Error::Domain(format!("projector index {i} out of range for N = {n}")));
                    }
                    r[i] = T::one();
                }
                check_grouping(decomp, &r, "ideal projector")?;
                r
            }
            FilterSpec::Custom { response } => {
                if response.len() != n {
                    return Err(Error::Domain(format!(
                        "custom response has {} entries, graph has {n} frequencies",
                        response.len()
                    )));
                }
                let r = DVector::from_iterator(n, response.iter().map(|&v| lit::<T>(v)));
                check_grouping(decomp, &r, "custom response")?;
                r
            }
            FilterSpec::Power { base, exponent } => {
                let b = base.response(decomp)?;
                if *exponent >= 0 {
                    b.map(|v| v.powi(*exponent))
                } else {
                    dagger_response(&b).map(|v| v.powi(-*exponent))
                }
            }
            FilterSpec::Dagger { base } => dagger_response(&base.response(decomp)?),
        };
        if let Some(i) = r.iter().position(|&v| !is_finite(v)) {
            return Err(Error::Domain(format!(
                "filter response is not finite at eigenvalue index {i} (λ = {})",
                decomp.eigenvalues()[i]
            )));
        }
        Ok(r)
    }

    /// Whether every response value is non-negative (up to round-off).
    pub fn is_psd<T: Scalar>(&self, decomp: &SpectralDecomposition<T>) -> Result<bool> {
        let r = self.response(decomp)?;
        let scale = r.iter().fold(T::zero(), |a, v| a.max(v.abs())).max(T::one());
        Ok(r.iter().all(|&v| v >= -lit::<T>(1e-12) * scale))
    }
}

fn check_grouping<T: Scalar>(decomp: &SpectralDecomposition<T>, r: &DVector<T>, what: &str) -> Result<()> {
    let groups = decomp.groups();
    for i in 1..r.len() {
        if groups[i] == groups[i - 1] && r[i] != r[i - 1] {
            return Err(Error::Domain(format!(
                "{what} assigns different values to the repeated eigenvalue at indices {} and {i}",
                i - 1
            )));
        }
    }
    Ok(())
}

/// Reciprocal of every entry whose magnitude exceeds `DAGGER_TOL` relative to
/// the largest entry; zero elsewhere.
pub fn dagger_response<T: Scalar>(r: &DVector<T>) -> DVector<T> {
    let scale = r.iter().fold(T::zero(), |a, v| a.max(v.abs()));
    let tol = lit::<T>(DAGGER_TOL) * scale;
    r.map(|v| if v.abs() > tol { T::one() / v } else { T::zero() })
}

pub fn filter_matrix<T: Scalar>(decomp: &SpectralDecomposition<T>, spec: &FilterSpec) -> Result<DMatrix<T>> {
    Ok(decomp.compose(&spec.response(decomp)?))
}

/// `h(L)a`, computed as transform, scale, inverse transform.
pub fn apply_filter<T: Scalar>(
    decomp: &SpectralDecomposition<T>,
    spec: &FilterSpec,
    a: &DVector<T>,
) -> Result<DVector<T>> {
    let coeffs = gft(decomp, a)?;
    let scaled = coeffs.component_mul(&spec.response(decomp)?);
    igft(decomp, &scaled)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::WeightedGraph;
    use crate::spectral::decompose_graph;

    fn decomp() -> SpectralDecomposition<f64> {
        let g =
            WeightedGraph::from_triples(5, &[(0, 1, 1.0), (1, 2, 2.0), (2, 3, 0.5), (3, 4, 1.5), (0, 4, 0.7)]).unwrap();
        decompose_graph(&g)
    }

    #[test]
    fn identity_is_identity() {
        let d = decomp();
        let m = filter_matrix(&d, &FilterSpec::Identity).unwrap();
        assert!((m - DMatrix::identity(5, 5)).norm() < 1e-12);
    }

    #[test]
    fn laplacian_power_one_rebuilds_laplacian() {
        let d = decomp();
        let m = filter_matrix(&d, &FilterSpec::LaplacianPower { k: 1 }).unwrap();
        let g =
            WeightedGraph::<f64>::from_triples(5, &[(0, 1, 1.0), (1, 2, 2.0), (2, 3, 0.5), (3, 4, 1.5), (0, 4, 0.7)])
                .unwrap();
        assert!((m - g.laplacian()).norm() < 1e-12);
    }

    #[test]
    fn diffusion_keeps_constants() {
        let d = decomp();
        let ones = DVector::from_element(5, 1.0);
        let out = apply_filter(&d, &FilterSpec::Diffusion { tau: 0.5 }, &ones).unwrap();
        assert!((out - ones).norm() < 1e-12);
    }

    #[test]
    fn gmrf_squared_is_laplacian_pinv() {
        let d = decomp();
        let h = filter_matrix(&d, &FilterSpec::Gmrf).unwrap();
        let l = filter_matrix(&d, &FilterSpec::LaplacianPower { k: 1 }).unwrap();
        let hh = &h * &h;
        assert!((&l * &hh * &l - &l).norm() < 1e-10);
    }

    #[test]
    fn tikhonov_power_matches_closed_form() {
        let d = decomp();
        let spec = FilterSpec::power(FilterSpec::Tikhonov { alpha: 0.2 }, -2);
        let r = spec.response(&d).unwrap();
        for (i, v) in r.iter().enumerate() {
            let l = d.eigenvalues()[i];
            assert!((v - (1.0 + 0.2 * l).powi(2)).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_custom_is_domain_error() {
        let d = decomp();
        let spec = FilterSpec::Custom { response: vec![1.0, f64::INFINITY, 1.0, 1.0, 1.0] };
        assert!(matches!(filter_matrix(&d, &spec), Err(Error::Domain(_))));
        let short = FilterSpec::Custom { response: vec![1.0] };
        assert!(short.response(&d).is_err());
    }

    #[test]
    fn projector_split_on_repeated_eigenvalue_is_rejected() {
        let mut t = Vec::new();
        for i in 0..4 {
            for j in (i + 1)..4 {
                t.push((i, j, 1.0));
            }
        }
        let d = decompose_graph(&WeightedGraph::<f64>::from_triples(4, &t).unwrap());
        assert!(FilterSpec::IdealProjector { indices: vec![0, 1] }.response(&d).is_err());
        assert!(FilterSpec::IdealProjector { indices: vec![1, 2, 3] }.response(&d).is_ok());
    }

    #[test]
    fn serde_shape() {
        let spec = FilterSpec::power(FilterSpec::Tikhonov { alpha: 0.2 }, -2);
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"kind":"power","base":{"kind":"tikhonov","alpha":0.2},"exponent":-2}"#);
        let back: FilterSpec = serde_json::from_str(&json).unwrap();
        assert_eq!(back, spec);
    }
}
