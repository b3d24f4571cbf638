//! The regularized graph-filter estimator: system matrix `K(d)`, estimate,
//! bias, exact MSE and the strictly-bandlimited least-squares variant.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{symmetrize, trace, PsdFactor};
use crate::model::{BandlimitedSpec, ProblemInstance};
use crate::scalar::Scalar;

/// `K(d)` together with its pseudo-inverse-capable factorization.
#[derive(Debug, Clone)]
pub struct EstimatorState<'a, T: Scalar> {
    instance: &'a ProblemInstance<T>,
    d: DVector<T>,
    k_m: DMatrix<T>,
    k: DMatrix<T>,
    factor: PsdFactor<T>,
    k_pinv: DMatrix<T>,
}

/// `h_M D R⁻¹ D h_M` for a (possibly relaxed) sampling vector.
pub fn measurement_information<T: Scalar>(instance: &ProblemInstance<T>, d: &DVector<T>) -> DMatrix<T> {
    let mut b = instance.h_m().clone();
    for (i, &di) in d.iter().enumerate() {
        b.row_mut(i).scale_mut(di);
    }
    symmetrize(&(b.transpose() * instance.noise_inv() * b))
}

impl<'a, T: Scalar> EstimatorState<'a, T> {
    /// Build the state; singular `K` is handled through the pseudo-inverse.
    pub fn new(instance: &'a ProblemInstance<T>, d: &DVector<T>) -> Result<Self> {
        if d.len() != instance.dim() {
            return Err(Error::Structural(format!(
                "sampling vector has length {}, expected {}",
                d.len(),
                instance.dim()
            )));
        }
        let k_m = measurement_information(instance, d);
        let k = symmetrize(&(&k_m + instance.h_r() * instance.mu()));
        let factor = PsdFactor::new(&k);
        let k_pinv = factor.pinv();
        Ok(EstimatorState { instance, d: d.clone(), k_m, k, factor, k_pinv })
    }

    /// Build the state, failing with a rank error when `K` is singular.
    pub fn new_invertible(instance: &'a ProblemInstance<T>, d: &DVector<T>) -> Result<Self> {
        let s = Self::new(instance, d)?;
        s.require_invertible()?;
        Ok(s)
    }

    pub fn require_invertible(&self) -> Result<()> {
        if self.factor.is_singular() {
            return Err(Error::Rank(format!(
                "K(d) is numerically singular (rank {} of {})",
                self.factor.rank,
                self.factor.dim()
            )));
        }
        Ok(())
    }

    pub fn instance(&self) -> &ProblemInstance<T> {
        self.instance
    }

    pub fn d(&self) -> &DVector<T> {
        &self.d
    }

    pub fn k(&self) -> &DMatrix<T> {
        &self.k
    }

    pub fn k_m(&self) -> &DMatrix<T> {
        &self.k_m
    }

    /// `K†` (equal to `K⁻¹` when `K` is invertible).
    pub fn k_pinv(&self) -> &DMatrix<T> {
        &self.k_pinv
    }

    pub fn factor(&self) -> &PsdFactor<T> {
        &self.factor
    }

    pub fn is_singular(&self) -> bool {
        self.factor.is_singular()
    }

    fn check_len(&self, v: &DVector<T>) -> Result<()> {
        if v.len() != self.d.len() {
            return Err(Error::Structural(format!("vector has length {}, expected {}", v.len(), self.d.len())));
        }
        Ok(())
    }

    /// Linear part `G = K† h_M D R⁻¹ D` and offset `c = μ K† h_R x₀`, so that
    /// the estimate is `G y + c`.
    pub fn affine_map(&self) -> (DMatrix<T>, DVector<T>) {
        let inst = self.instance;
        let mut right = inst.noise_inv().clone();
        for (i, &di) in self.d.iter().enumerate() {
            right.row_mut(i).scale_mut(di);
            right.column_mut(i).scale_mut(di);
        }
        let g = &self.k_pinv * inst.h_m() * right;
        let c = &self.k_pinv * (inst.h_r() * inst.x0()) * inst.mu();
        (g, c)
    }

    /// `x̂ = K†(h_M D R⁻¹ D y + μ h_R x₀)`; entries of `y` off the support
    /// are ignored.
    pub fn estimate(&self, y: &DVector<T>) -> Result<DVector<T>> {
        self.check_len(y)?;
        let inst = self.instance;
        let dy = y.component_mul(&self.d);
        let rhs = inst.h_m() * (inst.noise_inv() * dy).component_mul(&self.d) + inst.h_r() * inst.x0() * inst.mu();
        Ok(self.factor.solve(&rhs))
    }

    /// `b = K†(K_M x + μ h_R x₀) − x`.
    pub fn bias(&self, x: &DVector<T>) -> Result<DVector<T>> {
        self.check_len(x)?;
        let inst = self.instance;
        let rhs = &self.k_m * x + inst.h_r() * inst.x0() * inst.mu();
        Ok(self.factor.solve(&rhs) - x)
    }

    /// Variance part of the MSE, `tr(K† K_M K†)`.
    pub fn variance_trace(&self) -> T {
        trace(&(&self.k_pinv * &self.k_m * &self.k_pinv))
    }

    /// Exact MSE at a fixed signal: squared bias plus `tr(K† K_M K†)`.
    pub fn analytic_mse(&self, x: &DVector<T>) -> Result<T> {
        Ok(self.bias(x)?.norm_squared() + self.variance_trace())
    }
}

/// Whether `D h_M(L)` has full column rank, i.e. the signal is identifiable
/// without regularization.
pub fn has_full_column_rank<T: Scalar>(instance: &ProblemInstance<T>, d: &DVector<T>) -> bool {
    let mut b = instance.h_m().clone();
    for (i, &di) in d.iter().enumerate() {
        b.row_mut(i).scale_mut(di);
    }
    !PsdFactor::new(&(b.transpose() * b)).is_singular()
}

/// Least-squares estimate for a signal confined to `band`:
/// `x̂ = U (Hᵀ D R⁻¹ D H)⁻¹ Hᵀ D R⁻¹ D y` with `H = h_M U`.
pub fn estimate_bandlimited<T: Scalar>(
    instance: &ProblemInstance<T>,
    band: &BandlimitedSpec,
    d: &DVector<T>,
    y: &DVector<T>,
) -> Result<DVector<T>> {
    let n = instance.dim();
    if d.len() != n || y.len() != n {
        return Err(Error::Structural("sampling vector or measurement has the wrong length".into()));
    }
    let u = instance.decomp().basis(band.indices());
    let h = instance.h_m() * &u;
    let mut w = instance.noise_inv().clone();
    for (i, &di) in d.iter().enumerate() {
        w.row_mut(i).scale_mut(di);
        w.column_mut(i).scale_mut(di);
    }
    let gram = symmetrize(&(h.transpose() * &w * &h));
    let f = PsdFactor::new(&gram);
    if f.is_singular() || f.rank == 0 {
        return Err(Error::Observability(format!(
            "band of size {} is not identifiable from the sampling set (Gram rank {})",
            band.len(),
            f.rank
        )));
    }
    let coeffs = f.solve(&(h.transpose() * w * y));
    Ok(u * coeffs)
}

/// Large-`μ` limit of `Vᵀ K† V` when `h_R` annihilates the band: the block
/// `(U_ℛᵀ K_M U_ℛ)⁻¹` on the band indices, zero elsewhere (spectral
/// coordinates, rows and columns indexed like the eigenvalues).
pub fn asymptotic_pinv_limit<T: Scalar>(
    instance: &ProblemInstance<T>,
    band: &BandlimitedSpec,
    d: &DVector<T>,
) -> Result<DMatrix<T>> {
    let n = instance.dim();
    if d.len() != n {
        return Err(Error::Structural("sampling vector has the wrong length".into()));
    }
    let u = instance.decomp().basis(band.indices());
    let block = symmetrize(&(u.transpose() * measurement_information(instance, d) * &u));
    let f = PsdFactor::new(&block);
    if f.is_singular() {
        return Err(Error::Observability(format!("U_Rᵀ K_M U_R has rank {} < {}", f.rank, band.len())));
    }
    let inv = f.pinv();
    let mut out = DMatrix::zeros(n, n);
    for (a, &i) in band.indices().iter().enumerate() {
        for (b, &j) in band.indices().iter().enumerate() {
            out[(i, j)] = inv[(a, b)];
        }
    }
    Ok(out)
}
