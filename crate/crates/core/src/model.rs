//! Measurement model `y = D(h_M(L) x + e)`, the Gaussian graph-filter prior,
//! sampling vectors, frequency bands and topology perturbation.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{dagger_response, filter_matrix, FilterSpec};
use crate::graph::{Edge, WeightedGraph};
use crate::linalg::{is_symmetric, spd_inverse};
use crate::scalar::{is_finite, lit, to_f64, Scalar};
use crate::spectral::SpectralDecomposition;

/// Everything needed to form `K(d) = h_M D R⁻¹ D h_M + μ h_R`.
#[derive(Debug, Clone)]
pub struct ProblemInstance<T: Scalar> {
    decomp: SpectralDecomposition<T>,
    h_m_spec: FilterSpec,
    h_r_spec: FilterSpec,
    h_m: DMatrix<T>,
    h_r: DMatrix<T>,
    h_r_response: DVector<T>,
    noise_cov: DMatrix<T>,
    noise_inv: DMatrix<T>,
    noise_chol: DMatrix<T>,
    noise_diagonal: bool,
    mu: T,
    x0: DVector<T>,
}

impl<T: Scalar> ProblemInstance<T> {
    pub fn new(
        decomp: SpectralDecomposition<T>,
        h_m: FilterSpec,
        h_r: FilterSpec,
        noise_cov: DMatrix<T>,
        mu: T,
        x0: DVector<T>,
    ) -> Result<Self> {
        let n = decomp.dim();
        if noise_cov.nrows() != n || noise_cov.ncols() != n {
            return Err(Error::Structural(format!(
                "noise covariance is {}x{}, expected {n}x{n}",
                noise_cov.nrows(),
                noise_cov.ncols()
            )));
        }
        if x0.len() != n {
            return Err(Error::Structural(format!("x0 has length {}, expected {n}", x0.len())));
        }
        if !is_finite(mu) || mu < T::zero() {
            return Err(Error::Domain(format!("mu must be finite and non-negative, got {mu}")));
        }
        if !h_r.is_psd(&decomp)? {
            return Err(Error::Domain("regularizer response must be non-negative".into()));
        }
        if !is_symmetric(&noise_cov, lit(1e-12)) {
            return Err(Error::Structural("noise covariance is not symmetric".into()));
        }
        let chol = Cholesky::new(noise_cov.clone())
            .ok_or_else(|| Error::Domain("noise covariance is not positive definite".into()))?;
        let noise_inv = spd_inverse(&noise_cov, "noise covariance")?;
        let noise_diagonal = (0..n).all(|i| (0..n).all(|j| i == j || noise_cov[(i, j)] == T::zero()));

        let h_r_response = h_r.response(&decomp)?;
        let kernel_energy: T = decomp
            .eigenvectors()
            .tr_mul(&x0)
            .iter()
            .zip(h_r_response.iter())
            .filter(|(_, &r)| r == T::zero())
            .fold(T::zero(), |acc, (&c, _)| acc + c * c);
        if kernel_energy > lit(1e-24) {
            log::warn!(
                "x0 has energy {:e} in the regularizer kernel; those components are unpenalized",
                to_f64(kernel_energy)
            );
        }

        Ok(ProblemInstance {
            h_m: filter_matrix(&decomp, &h_m)?,
            h_r: filter_matrix(&decomp, &h_r)?,
            h_r_response,
            noise_chol: chol.l(),
            noise_inv,
            noise_diagonal,
            noise_cov,
            decomp,
            h_m_spec: h_m,
            h_r_spec: h_r,
            mu,
            x0,
        })
    }

    /// `R = σ²I`, `x₀ = 0`.
    pub fn isotropic(
        decomp: SpectralDecomposition<T>,
        h_m: FilterSpec,
        h_r: FilterSpec,
        sigma2: T,
        mu: T,
    ) -> Result<Self> {
        let n = decomp.dim();
        Self::new(decomp, h_m, h_r, DMatrix::identity(n, n) * sigma2, mu, DVector::zeros(n))
    }

    pub fn dim(&self) -> usize {
        self.decomp.dim()
    }

    pub fn decomp(&self) -> &SpectralDecomposition<T> {
        &self.decomp
    }

    pub fn h_m_spec(&self) -> &FilterSpec {
        &self.h_m_spec
    }

    pub fn h_r_spec(&self) -> &FilterSpec {
        &self.h_r_spec
    }

    /// `h_M(L)`.
    pub fn h_m(&self) -> &DMatrix<T> {
        &self.h_m
    }

    /// `h_R(L)`.
    pub fn h_r(&self) -> &DMatrix<T> {
        &self.h_r
    }

    pub fn h_r_response(&self) -> &DVector<T> {
        &self.h_r_response
    }

    pub fn noise_cov(&self) -> &DMatrix<T> {
        &self.noise_cov
    }

    pub fn noise_inv(&self) -> &DMatrix<T> {
        &self.noise_inv
    }

    pub fn noise_is_diagonal(&self) -> bool {
        self.noise_diagonal
    }

    pub fn mu(&self) -> T {
        self.mu
    }

    pub fn x0(&self) -> &DVector<T> {
        &self.x0
    }

    /// The Laplacian reassembled from the decomposition.
    pub fn laplacian(&self) -> DMatrix<T> {
        self.decomp.reconstruct()
    }

    pub fn with_mu(&self, mu: T) -> Result<Self> {
        Self::new(
            self.decomp.clone(),
            self.h_m_spec.clone(),
            self.h_r_spec.clone(),
            self.noise_cov.clone(),
            mu,
            self.x0.clone(),
        )
    }

    pub fn with_noise(&self, noise_cov: DMatrix<T>) -> Result<Self> {
        Self::new(
            self.decomp.clone(),
            self.h_m_spec.clone(),
            self.h_r_spec.clone(),
            noise_cov,
            self.mu,
            self.x0.clone(),
        )
    }

    pub fn with_x0(&self, x0: DVector<T>) -> Result<Self> {
        Self::new(
            self.decomp.clone(),
            self.h_m_spec.clone(),
            self.h_r_spec.clone(),
            self.noise_cov.clone(),
            self.mu,
            x0,
        )
    }

    /// Scaled measurement rows `r_a = √(R⁻¹_aa) h_M[:, a]`, one column per
    /// node. Only meaningful for diagonal `R`.
    pub fn measurement_rows(&self) -> DMatrix<T> {
        let mut rows = self.h_m.clone();
        for a in 0..self.dim() {
            let s = self.noise_inv[(a, a)].sqrt();
            rows.column_mut(a).scale_mut(s);
        }
        rows
    }

    /// Square root of the prior covariance up to `μ^{-1/2}`:
    /// `V diag(√(h_R(λ)†))`.
    pub fn prior_factor(&self) -> DMatrix<T> {
        let w = dagger_response(&self.h_r_response).map(|v| v.max(T::zero()).sqrt());
        let mut f = self.decomp.eigenvectors().clone();
        for (j, s) in w.iter().enumerate() {
            f.column_mut(j).scale_mut(*s);
        }
        f
    }

    /// Lower Cholesky factor of `R`.
    pub fn noise_factor(&self) -> &DMatrix<T> {
        &self.noise_chol
    }
}

pub(crate) fn standard_normal<T: Scalar, G: Rng + ?Sized>(n: usize, rng: &mut G) -> DVector<T> {
    DVector::from_iterator(n, (0..n).map(|_| lit::<T>(rng.sample::<f64, _>(StandardNormal))))
}

/// Draw `x = x₀ + μ^{-1/2} V diag(√(h_R(λ)†)) ζ`.
pub fn sample_prior<T: Scalar, G: Rng + ?Sized>(instance: &ProblemInstance<T>, rng: &mut G) -> Result<DVector<T>> {
    if instance.mu() <= T::zero() {
        return Err(Error::Domain("the prior is undefined for mu = 0".into()));
    }
    let zeta = standard_normal(instance.dim(), rng);
    Ok(instance.x0() + instance.prior_factor() * zeta / instance.mu().sqrt())
}

/// Draw `y = D(h_M x + e)` with `e ~ N(0, R)`.
pub fn sample_measurement<T: Scalar, G: Rng + ?Sized>(
    instance: &ProblemInstance<T>,
    x: &DVector<T>,
    d: &SamplingVector<T>,
    rng: &mut G,
) -> Result<DVector<T>> {
    let n = instance.dim();
    if x.len() != n || d.len() != n {
        return Err(Error::Structural("signal or sampling vector has the wrong length".into()));
    }
    let e = instance.noise_factor() * standard_normal::<T, _>(n, rng);
    Ok((instance.h_m() * x + e).component_mul(d.values()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    Binary,
    Relaxed,
}

/// Sampling indicator `d`, binary or relaxed to `[0, 1]`, with budget `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingVector<T: Scalar> {
    values: DVector<T>,
    budget: usize,
    mode: SamplingMode,
}

impl<T: Scalar> SamplingVector<T> {
    const TOL: f64 = 1e-9;

    pub fn binary(values: DVector<T>, budget: usize) -> Result<Self> {
        if let Some(i) = values.iter().position(|&v| v != T::zero() && v != T::one()) {
            return Err(Error::Domain(format!("entry {i} of a binary sampling vector is {}", values[i])));
        }
        Self::checked(values, budget, SamplingMode::Binary)
    }

    pub fn relaxed(values: DVector<T>, budget: usize) -> Result<Self> {
        if let Some(i) = values.iter().position(|&v| !(v >= T::zero() && v <= T::one())) {
            return Err(Error::Domain(format!("entry {i} of a sampling vector is {}, outside [0, 1]", values[i])));
        }
        Self::checked(values, budget, SamplingMode::Relaxed)
    }

    fn checked(values: DVector<T>, budget: usize, mode: SamplingMode) -> Result<Self> {
        let n = values.len();
        if budget == 0 || budget > n {
            return Err(Error::Domain(format!("budget {budget} must lie in [1, {n}]")));
        }
        let energy = values.norm_squared();
        if energy > lit::<T>(budget as f64 + Self::TOL) {
            return Err(Error::Domain(format!("‖d‖² = {energy} exceeds the budget {budget}")));
        }
        Ok(SamplingVector { values, budget, mode })
    }

    /// Indicator of `set` with budget `max(|set|, 1)`.
    pub fn from_set(n: usize, set: &[usize]) -> Result<Self> {
        Self::binary(indicator(n, set)?, set.len().max(1).min(n.max(1)))
    }

    pub fn full(n: usize) -> Self {
        SamplingVector { values: DVector::from_element(n, T::one()), budget: n, mode: SamplingMode::Binary }
    }

    pub fn values(&self) -> &DVector<T> {
        &self.values
    }

    pub fn budget(&self) -> usize {
        self.budget
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Indices with a nonzero entry.
    pub fn support(&self) -> Vec<usize> {
        self.values.iter().enumerate().filter(|(_, &v)| v != T::zero()).map(|(i, _)| i).collect()
    }
}

/// 0/1 vector with ones on `set`.
pub fn indicator<T: Scalar>(n: usize, set: &[usize]) -> Result<DVector<T>> {
    let mut d = DVector::zeros(n);
    for &i in set {
        if i >= n {
            return Err(Error::Structural(format!("node {i} out of range for N = {n}")));
        }
        d[i] = T::one();
    }
    Ok(d)
}

/// A set of frequency indices (ascending eigenvalue order).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandlimitedSpec {
    band: Vec<usize>,
}

impl BandlimitedSpec {
    pub fn new(mut band: Vec<usize>, n: usize) -> Result<Self> {
        band.sort_unstable();
        band.dedup();
        if band.is_empty() {
            return Err(Error::Domain("frequency band must not be empty".into()));
        }
        if let Some(&bad) = band.iter().find(|&&i| i >= n) {
            return Err(Error::Domain(format!("frequency index {bad} out of range for N = {n}")));
        }
        Ok(BandlimitedSpec { band })
    }

    /// The `⌊N/2⌋` lowest frequencies.
    pub fn low_half(n: usize) -> Result<Self> {
        Self::new((0..n / 2).collect(), n)
    }

    /// Frequencies from `⌊N/2⌋` upward.
    pub fn high_half(n: usize) -> Result<Self> {
        Self::new((n / 2..n).collect(), n)
    }

    pub fn indices(&self) -> &[usize] {
        &self.band
    }

    pub fn len(&self) -> usize {
        self.band.len()
    }

    pub fn is_empty(&self) -> bool {
        self.band.is_empty()
    }

    /// Remaining frequency indices, ascending.
    pub fn complement(&self, n: usize) -> Vec<usize> {
        (0..n).filter(|i| self.band.binary_search(i).is_err()).collect()
    }

    /// Ideal projector onto the complement, the regularizer that leaves the
    /// band unpenalized.
    pub fn complement_projector(&self, n: usize) -> FilterSpec {
        FilterSpec::IdealProjector { indices: self.complement(n) }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyOp {
    Added(usize, usize),
    Removed(usize, usize),
}

const PERTURB_RETRIES: usize = 100;

/// Apply `delta` random edge additions or removals, each type chosen with
/// probability 1/2, rejecting outcomes that disconnect the graph. Added edges
/// take the mean weight of the original graph.
pub fn perturb_topology<T: Scalar, G: Rng + ?Sized>(
    graph: &WeightedGraph<T>,
    delta: usize,
    rng: &mut G,
) -> Result<(WeightedGraph<T>, Vec<TopologyOp>)> {
    if delta == 0 {
        return Ok((graph.clone(), Vec::new()));
    }
    let n = graph.n_nodes();
    let mean_weight = if graph.n_edges() == 0 {
        T::one()
    } else {
        graph.edges().iter().fold(T::zero(), |a, e| a + e.weight) / lit::<T>(graph.n_edges() as f64)
    };
    for _ in 0..PERTURB_RETRIES {
        let mut edges: Vec<Edge<T>> = graph.edges().to_vec();
        let mut ops = Vec::with_capacity(delta);
        for _ in 0..delta {
            let complete = edges.len() == n * (n - 1) / 2;
            let remove = if edges.is_empty() {
                false
            } else if complete {
                true
            } else {
                rng.random_bool(0.5)
            };
            if remove {
                let idx = rng.random_range(0..edges.len());
                let e = edges.swap_remove(idx);
                ops.push(TopologyOp::Removed(e.a, e.b));
            } else {
                let present: std::collections::BTreeSet<_> = edges.iter().map(|e| e.key()).collect();
                let absent: Vec<(usize, usize)> =
                    (0..n).flat_map(|a| ((a + 1)..n).map(move |b| (a, b))).filter(|k| !present.contains(k)).collect();
                let &(a, b) = absent.choose(rng).expect("graph is not complete");
                edges.push(Edge { a, b, weight: mean_weight });
                ops.push(TopologyOp::Added(a, b));
            }
        }
        let candidate = WeightedGraph::new(n, edges)?;
        if candidate.is_connected() {
            return Ok((candidate, ops));
        }
    }
    Err(Error::Infeasible {
        message: format!("no connected perturbation with delta = {delta} after {PERTURB_RETRIES} attempts"),
        best: f64::NAN,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::decompose_graph;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ring(n: usize) -> WeightedGraph<f64> {
        let t: Vec<_> = (0..n).map(|i| (i, (i + 1) % n, 1.0 + i as f64 * 0.1)).collect();
        WeightedGraph::from_triples(n, &t).unwrap()
    }

    #[test]
    fn prior_variance_scales_with_mu() {
        let inst = ProblemInstance::isotropic(
            decompose_graph(&ring(4)),
            FilterSpec::Identity,
            FilterSpec::Identity,
            0.01,
            4.0,
        )
        .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let draws = 20_000;
        let mut acc = DVector::zeros(4);
        for _ in 0..draws {
            let x = sample_prior(&inst, &mut rng).unwrap();
            acc += x.component_mul(&x);
        }
        for v in (acc / draws as f64).iter() {
            assert!((v - 0.25).abs() < 0.0125, "variance {v}");
        }
    }

    #[test]
    fn prior_avoids_regularizer_kernel() {
        let d = decompose_graph(&ring(5));
        let inst =
            ProblemInstance::isotropic(d.clone(), FilterSpec::Identity, FilterSpec::LaplacianPower { k: 1 }, 0.01, 0.1)
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let x = sample_prior(&inst, &mut rng).unwrap();
            assert!(d.eigenvectors().column(0).dot(&x).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_sampling_gives_zero_measurement() {
        let inst =
            ProblemInstance::isotropic(decompose_graph(&ring(4)), FilterSpec::Identity, FilterSpec::Identity, 1.0, 1.0)
                .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = DVector::from_element(4, 1.0);
        let d = SamplingVector::relaxed(DVector::zeros(4), 1).unwrap();
        assert_eq!(sample_measurement(&inst, &x, &d, &mut rng).unwrap(), DVector::zeros(4));
    }

    #[test]
    fn sampling_vector_invariants() {
        assert!(SamplingVector::<f64>::binary(DVector::from_vec(vec![1.0, 0.5]), 2).is_err());
        assert!(SamplingVector::<f64>::binary(DVector::from_vec(vec![1.0, 1.0]), 1).is_err());
        assert!(SamplingVector::<f64>::relaxed(DVector::from_vec(vec![0.7, 0.7]), 1).is_ok());
        assert!(SamplingVector::<f64>::relaxed(DVector::from_vec(vec![1.2, 0.0]), 2).is_err());
        let s = SamplingVector::<f64>::from_set(5, &[3, 1]).unwrap();
        assert_eq!(s.support(), vec![1, 3]);
    }

    #[test]
    fn band_helpers() {
        let b = BandlimitedSpec::low_half(6).unwrap();
        assert_eq!(b.indices(), &[0, 1, 2]);
        assert_eq!(b.complement(6), vec![3, 4, 5]);
        assert_eq!(BandlimitedSpec::high_half(6).unwrap().indices(), &[3, 4, 5]);
        assert!(BandlimitedSpec::new(vec![], 3).is_err());
        assert!(BandlimitedSpec::new(vec![3], 3).is_err());
    }

    #[test]
    fn perturbation_bookkeeping() {
        let g = ring(8);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let (same, ops) = perturb_topology(&g, 0, &mut rng).unwrap();
        assert_eq!(same, g);
        assert!(ops.is_empty());
        for delta in 1..5 {
            let (p, ops) = perturb_topology(&g, delta, &mut rng).unwrap();
            assert_eq!(ops.len(), delta);
            assert!(p.is_connected());
            let adds = ops.iter().filter(|o| matches!(o, TopologyOp::Added(..))).count() as isize;
            let removes = delta as isize - adds;
            assert_eq!(p.n_edges() as isize - g.n_edges() as isize, adds - removes);
        }
    }

    #[test]
    fn rejects_bad_instances() {
        let d = decompose_graph(&ring(4));
        let bad_r = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1.0, 0.0, 1.0]));
        assert!(ProblemInstance::new(
            d.clone(),
            FilterSpec::Identity,
            FilterSpec::Identity,
            bad_r,
            1.0,
            DVector::zeros(4)
        )
        .is_err());
        let neg = FilterSpec::Custom { response: vec![-1.0, 1.0, 1.0, 1.0] };
        assert!(ProblemInstance::isotropic(d.clone(), FilterSpec::Identity, neg, 1.0, 1.0).is_err());
        assert!(ProblemInstance::isotropic(d, FilterSpec::Identity, FilterSpec::Identity, 1.0, -1.0).is_err());
    }
}
