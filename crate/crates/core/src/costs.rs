//! Sampling cost functions, classical design baselines, and analytic
//! gradients with respect to the relaxed sampling vector.
//!
//! Every cost is minimized; the E- and LR-design criteria are negated.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::EstimatorState;
use crate::linalg::{is_degenerate, max_eigenpair, sym_eigen, symmetrize, trace, PsdFactor};
use crate::model::{BandlimitedSpec, ProblemInstance};
use crate::scalar::{is_finite, lit, Scalar};

/// Relative tolerance for declaring an extreme eigenvalue repeated.
pub const DEGENERACY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CostKind {
    #[serde(rename = "BCRB")]
    Bcrb,
    #[serde(rename = "WC_MSE")]
    WcMse,
    #[serde(rename = "BMSE")]
    Bmse,
    #[serde(rename = "WC_BMSE")]
    WcBmse,
    #[serde(rename = "A_DESIGN")]
    ADesign,
    #[serde(rename = "E_DESIGN")]
    EDesign,
    #[serde(rename = "LR_DESIGN")]
    LrDesign,
}

impl CostKind {
    pub const ALL: [CostKind; 7] = [
        CostKind::Bcrb,
        CostKind::WcMse,
        CostKind::Bmse,
        CostKind::WcBmse,
        CostKind::ADesign,
        CostKind::EDesign,
        CostKind::LrDesign,
    ];

    /// The four MSE-based costs with analytic gradients.
    pub const PROPOSED: [CostKind; 4] = [CostKind::Bcrb, CostKind::WcMse, CostKind::Bmse, CostKind::WcBmse];

    pub fn name(self) -> &'static str {
        match self {
            CostKind::Bcrb => "BCRB",
            CostKind::WcMse => "WC_MSE",
            CostKind::Bmse => "BMSE",
            CostKind::WcBmse => "WC_BMSE",
            CostKind::ADesign => "A_DESIGN",
            CostKind::EDesign => "E_DESIGN",
            CostKind::LrDesign => "LR_DESIGN",
        }
    }

    pub fn has_gradient(self) -> bool {
        Self::PROPOSED.contains(&self)
    }

    pub fn needs_band(self) -> bool {
        matches!(self, CostKind::ADesign | CostKind::EDesign)
    }
}

impl fmt::Display for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CostKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_uppercase().replace(['-', ' '], "_");
        let alias = match norm.as_str() {
            "A" => "A_DESIGN",
            "E" => "E_DESIGN",
            "LR" => "LR_DESIGN",
            "WCMSE" => "WC_MSE",
            "WCBMSE" => "WC_BMSE",
            other => other,
        };
        CostKind::ALL
            .into_iter()
            .find(|k| k.name() == alias)
            .ok_or_else(|| Error::Config(format!("unknown cost kind {s:?}")))
    }
}

/// `tr(K† K_M K†)`.
pub fn bcrb<T: Scalar>(state: &EstimatorState<'_, T>) -> T {
    state.variance_trace()
}

/// `bcrb + μ² λ_max(h_R K†² h_R)`: worst squared bias over the unit ball
/// around `x₀` added to the variance.
pub fn wc_mse<T: Scalar>(state: &EstimatorState<'_, T>) -> T {
    let inst = state.instance();
    let mu = inst.mu();
    if mu == T::zero() {
        return bcrb(state);
    }
    let m = inst.h_r() * state.factor().pinv_sq() * inst.h_r();
    let (top, _, _) = max_eigenpair(&symmetrize(&m));
    bcrb(state) + mu * mu * top.max(T::zero())
}

/// `tr(K†)`.
pub fn bmse<T: Scalar>(state: &EstimatorState<'_, T>) -> T {
    state.factor().trace_pinv()
}

/// `1 / λ_min(K)` over the nonzero spectrum; `+∞` when `K = 0`.
pub fn wc_bmse<T: Scalar>(state: &EstimatorState<'_, T>) -> T {
    let f = state.factor();
    match f.min_nonzero_index() {
        Some(i) => T::one() / f.eig.values[i],
        None => lit(f64::INFINITY),
    }
}

/// `V_{S,ℛ}` whitened by the Cholesky factor of `R_{S,S}`: its Gram matrix
/// is `V_{S,ℛ}ᵀ R_{S,S}⁻¹ V_{S,ℛ}`.
fn whitened_band_rows<T: Scalar>(
    instance: &ProblemInstance<T>,
    band: &BandlimitedSpec,
    set: &[usize],
) -> Result<DMatrix<T>> {
    let v = instance.decomp().basis(band.indices()).select_rows(set);
    let r_ss = instance.noise_cov().select_rows(set).select_columns(set);
    let chol = Cholesky::new(r_ss).ok_or_else(|| Error::Domain("R_SS is not positive definite".into()))?;
    Ok(chol.l().solve_lower_triangular(&v).expect("Cholesky factor is invertible"))
}

fn support<T: Scalar>(d: &DVector<T>) -> Vec<usize> {
    d.iter().enumerate().filter(|(_, &v)| v != T::zero()).map(|(i, _)| i).collect()
}

/// `V_{S,ℛ}ᵀ R_{S,S}⁻¹ V_{S,ℛ}` for `S = supp(d)`.
pub fn design_gram<T: Scalar>(
    instance: &ProblemInstance<T>,
    band: &BandlimitedSpec,
    d: &DVector<T>,
) -> Result<DMatrix<T>> {
    let set = support(d);
    if set.is_empty() {
        return Ok(DMatrix::zeros(band.len(), band.len()));
    }
    let a = whitened_band_rows(instance, band, &set)?;
    Ok(symmetrize(&(a.transpose() * a)))
}

/// A-design: `tr(Gram⁻¹)`. Needs `|S| ≥ |ℛ|` and a full-rank Gram.
pub fn a_design_cost<T: Scalar>(instance: &ProblemInstance<T>, band: &BandlimitedSpec, d: &DVector<T>) -> Result<T> {
    let set = support(d);
    if set.len() < band.len() {
        return Err(Error::Observability(format!("A-design needs at least {} samples, got {}", band.len(), set.len())));
    }
    let f = PsdFactor::new(&design_gram(instance, band, d)?);
    if f.is_singular() {
        return Err(Error::Observability(format!("A-design Gram matrix has rank {} < {}", f.rank, band.len())));
    }
    Ok(f.trace_pinv())
}

/// E-design: `−λ_min(Gram)`; 0 when the Gram matrix is singular.
pub fn e_design_cost<T: Scalar>(instance: &ProblemInstance<T>, band: &BandlimitedSpec, d: &DVector<T>) -> Result<T> {
    let f = PsdFactor::new(&design_gram(instance, band, d)?);
    if f.is_singular() || f.rank == 0 {
        return Ok(T::zero());
    }
    Ok(-f.eig.values[0])
}

/// Nonzero Gram spectrum used to rank sets that cannot yet identify the band:
/// the eigenvalues of the smaller of `AᵀA` and `AAᵀ`, or `None` when that
/// matrix is rank-deficient.
fn design_spectrum<T: Scalar>(
    instance: &ProblemInstance<T>,
    band: &BandlimitedSpec,
    d: &DVector<T>,
) -> Result<Option<DVector<T>>> {
    let set = support(d);
    if set.is_empty() {
        return Ok(None);
    }
    let a = whitened_band_rows(instance, band, &set)?;
    let small = if set.len() >= band.len() { a.transpose() * &a } else { &a * a.transpose() };
    let f = PsdFactor::new(&symmetrize(&small));
    if f.is_singular() || f.rank == 0 {
        return Ok(None);
    }
    Ok(Some(f.eig.values))
}

/// A-design value used during selection; matches [`a_design_cost`] once the
/// band is identifiable and is `+∞` for rank-deficient sets.
pub fn a_design_selection_cost<T: Scalar>(
    instance: &ProblemInstance<T>,
    band: &BandlimitedSpec,
    d: &DVector<T>,
) -> Result<T> {
    Ok(match design_spectrum(instance, band, d)? {
        Some(ev) => ev.iter().fold(T::zero(), |acc, &v| acc + T::one() / v),
        None => lit(f64::INFINITY),
    })
}

/// E-design value used during selection; matches [`e_design_cost`] once the
/// band is identifiable.
pub fn e_design_selection_cost<T: Scalar>(
    instance: &ProblemInstance<T>,
    band: &BandlimitedSpec,
    d: &DVector<T>,
) -> Result<T> {
    Ok(match design_spectrum(instance, band, d)? {
        Some(ev) => -ev[0],
        None => T::zero(),
    })
}

/// LR-design: `−λ_min(DᵀD + μL)`.
pub fn lr_design_cost<T: Scalar>(instance: &ProblemInstance<T>, d: &DVector<T>) -> Result<T> {
    let n = instance.dim();
    if d.len() != n {
        return Err(Error::Structural("sampling vector has the wrong length".into()));
    }
    let m = DMatrix::from_diagonal(&d.component_mul(d)) + instance.laplacian() * instance.mu();
    Ok(-sym_eigen(&m).values[0])
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient<T: Scalar> {
    pub values: DVector<T>,
    /// Set when an extreme eigenvalue is repeated, so the returned vector is
    /// one element of the subdifferential.
    pub subgradient: bool,
}

/// Gradient of a cost whose differential is `−tr(G dK)`:
/// `∂C/∂d_n = −2 [R⁻¹ D h_M G h_M]_{nn}`.
fn gradient_from_weight<T: Scalar>(state: &EstimatorState<'_, T>, g: &DMatrix<T>) -> DVector<T> {
    let inst = state.instance();
    let m = inst.h_m() * g * inst.h_m();
    let mut rd = inst.noise_inv().clone();
    for (j, &dj) in state.d().iter().enumerate() {
        rd.column_mut(j).scale_mut(dj);
    }
    let n = inst.dim();
    DVector::from_fn(n, |i, _| lit::<T>(-2.0) * rd.row(i).dot(&m.column(i).transpose()))
}

/// Analytic gradient of one of the four MSE-based costs at `state.d()`.
pub fn gradient<T: Scalar>(kind: CostKind, state: &EstimatorState<'_, T>) -> Result<Gradient<T>> {
    if !kind.has_gradient() {
        return Err(Error::Config(format!("{kind} has no analytic gradient")));
    }
    state.require_invertible()?;
    let inst = state.instance();
    let mu = inst.mu();
    let k_inv = state.k_pinv();
    let h_r = inst.h_r();
    let n = inst.dim();
    let ident = DMatrix::<T>::identity(n, n);
    let mut subgradient = false;
    let bcrb_weight = || {
        let inner = &ident - (k_inv * h_r + h_r * k_inv) * mu;
        symmetrize(&(k_inv * inner * k_inv))
    };
    let weight = match kind {
        CostKind::Bmse => state.factor().pinv_sq(),
        CostKind::Bcrb => bcrb_weight(),
        CostKind::WcMse => {
            let mut g = bcrb_weight();
            if mu != T::zero() {
                let m = symmetrize(&(h_r * state.factor().pinv_sq() * h_r));
                let (_, u, degenerate) = max_eigenpair(&m);
                subgradient = degenerate;
                let w = h_r * u;
                let kw = k_inv * &w;
                let outer = &kw * w.transpose() + &w * kw.transpose();
                g += symmetrize(&(k_inv * outer * k_inv)) * (mu * mu);
            }
            g
        }
        CostKind::WcBmse => {
            let vals = &state.factor().eig.values;
            let lmin = vals[0];
            subgradient = n > 1 && is_degenerate(vals.as_slice(), 0, lit(DEGENERACY_TOL));
            let u = state.factor().eig.vectors.column(0).into_owned();
            &u * u.transpose() / (lmin * lmin)
        }
        _ => unreachable!(),
    };
    let values = gradient_from_weight(state, &weight);
    if values.iter().any(|&v| !is_finite(v)) {
        return Err(Error::Numerical(format!("{kind} gradient is not finite")));
    }
    Ok(Gradient { values, subgradient })
}

/// A cost bound to an instance (and a band for A/E-design).
#[derive(Debug, Clone)]
pub struct Objective<'a, T: Scalar> {
    instance: &'a ProblemInstance<T>,
    kind: CostKind,
    band: Option<BandlimitedSpec>,
}

impl<'a, T: Scalar> Objective<'a, T> {
    pub fn new(instance: &'a ProblemInstance<T>, kind: CostKind, band: Option<BandlimitedSpec>) -> Result<Self> {
        if kind.needs_band() && band.is_none() {
            return Err(Error::Config(format!("{kind} requires a frequency band")));
        }
        if let Some(b) = &band {
            if b.indices().iter().any(|&i| i >= instance.dim()) {
                return Err(Error::Config("band index out of range".into()));
            }
        }
        Ok(Objective { instance, kind, band })
    }

    pub fn instance(&self) -> &'a ProblemInstance<T> {
        self.instance
    }

    pub fn kind(&self) -> CostKind {
        self.kind
    }

    pub fn band(&self) -> Option<&BandlimitedSpec> {
        self.band.as_ref()
    }

    fn band_ref(&self) -> &BandlimitedSpec {
        self.band.as_ref().expect("validated in Objective::new")
    }

    /// The cost at `d` (A-design errors when the band is unidentifiable).
    pub fn evaluate(&self, d: &DVector<T>) -> Result<T> {
        match self.kind {
            CostKind::ADesign => a_design_cost(self.instance, self.band_ref(), d),
            CostKind::EDesign => e_design_cost(self.instance, self.band_ref(), d),
            CostKind::LrDesign => lr_design_cost(self.instance, d),
            kind => Ok(state_cost(kind, &EstimatorState::new(self.instance, d)?)),
        }
    }

    /// The cost used to compare candidate sets during selection; differs
    /// from [`Objective::evaluate`] only for A/E-design on sets too small to
    /// identify the band.
    pub fn selection_cost(&self, d: &DVector<T>) -> Result<T> {
        match self.kind {
            CostKind::ADesign => a_design_selection_cost(self.instance, self.band_ref(), d),
            CostKind::EDesign => e_design_selection_cost(self.instance, self.band_ref(), d),
            _ => self.evaluate(d),
        }
    }

    pub fn gradient(&self, d: &DVector<T>) -> Result<Gradient<T>> {
        gradient(self.kind, &EstimatorState::new(self.instance, d)?)
    }
}

/// One of the four MSE-based costs of a built state.
pub fn state_cost<T: Scalar>(kind: CostKind, state: &EstimatorState<'_, T>) -> T {
    match kind {
        CostKind::Bcrb => bcrb(state),
        CostKind::WcMse => wc_mse(state),
        CostKind::Bmse => bmse(state),
        CostKind::WcBmse => wc_bmse(state),
        other => panic!("{other} is not a function of K(d)"),
    }
}

/// `tr(K†)` written as `bcrb + μ tr(K†² h_R)`, used to cross-check the
/// variance and bias decomposition.
pub fn bmse_decomposed<T: Scalar>(state: &EstimatorState<'_, T>) -> T {
    let inst = state.instance();
    bcrb(state) + inst.mu() * trace(&(state.factor().pinv_sq() * inst.h_r()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::FilterSpec;
    use crate::graph::WeightedGraph;
    use crate::spectral::decompose_graph;

    fn graph() -> WeightedGraph<f64> {
        WeightedGraph::from_triples(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
    }

    #[test]
    fn empty_set_values() {
        let p = ProblemInstance::isotropic(
            decompose_graph(&graph()),
            FilterSpec::Identity,
            FilterSpec::Identity,
            0.01,
            0.1,
        )
        .unwrap();
        let s = EstimatorState::new(&p, &DVector::zeros(3)).unwrap();
        assert_eq!(bcrb(&s), 0.0);
        assert!((bmse(&s) - 30.0).abs() < 1e-10);
        assert!((wc_bmse(&s) - 10.0).abs() < 1e-10);
        assert!((wc_mse(&s) - 1.0).abs() < 1e-10);
    }

    #[test]
    fn extreme_case_costs_agree() {
        let sigma2 = 0.3;
        let p = ProblemInstance::isotropic(
            decompose_graph(&graph()),
            FilterSpec::Identity,
            FilterSpec::Identity,
            sigma2,
            0.0,
        )
        .unwrap();
        let s = EstimatorState::new(&p, &DVector::from_element(3, 1.0)).unwrap();
        for k in CostKind::PROPOSED {
            assert!((state_cost(k, &s) - if k == CostKind::WcBmse { sigma2 } else { 3.0 * sigma2 }).abs() < 1e-12);
        }
    }

    #[test]
    fn design_baselines_at_full_sampling() {
        let p =
            ProblemInstance::isotropic(decompose_graph(&graph()), FilterSpec::Identity, FilterSpec::Identity, 1.0, 0.0)
                .unwrap();
        let band = BandlimitedSpec::new(vec![0, 2], 3).unwrap();
        let ones = DVector::from_element(3, 1.0);
        assert!((a_design_cost(&p, &band, &ones).unwrap() - 2.0).abs() < 1e-12);
        assert!((e_design_cost(&p, &band, &ones).unwrap() + 1.0).abs() < 1e-12);
        assert!((lr_design_cost(&p, &ones).unwrap() + 1.0).abs() < 1e-12);
        assert!(lr_design_cost(&p.with_mu(0.5).unwrap(), &DVector::zeros(3)).unwrap().abs() < 1e-12);
        let single = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        assert!(matches!(a_design_cost(&p, &band, &single), Err(Error::Observability(_))));
        assert_eq!(e_design_cost(&p, &band, &single).unwrap(), 0.0);
        assert!(a_design_selection_cost(&p, &band, &single).unwrap().is_finite());
    }

    #[test]
    fn bmse_gradient_at_identity() {
        let p =
            ProblemInstance::isotropic(decompose_graph(&graph()), FilterSpec::Identity, FilterSpec::Identity, 1.0, 0.0)
                .unwrap();
        let s = EstimatorState::new(&p, &DVector::from_element(3, 1.0)).unwrap();
        let g = gradient(CostKind::Bmse, &s).unwrap();
        for v in g.values.iter() {
            assert!((v + 2.0).abs() < 1e-12);
        }
        assert!(gradient(CostKind::ADesign, &s).is_err());
    }

    #[test]
    fn gradients_match_central_differences() {
        let g = WeightedGraph::<f64>::from_triples(
            6,
            &[(0, 1, 1.0), (1, 2, 2.0), (2, 3, 0.5), (3, 4, 1.5), (4, 5, 1.0), (5, 0, 0.7), (1, 4, 0.3)],
        )
        .unwrap();
        let p = ProblemInstance::isotropic(
            decompose_graph(&g),
            FilterSpec::Diffusion { tau: 0.4 },
            FilterSpec::Tikhonov { alpha: 0.5 },
            0.05,
            0.3,
        )
        .unwrap()
        .with_x0(DVector::from_vec(vec![0.1, 0.0, -0.2, 0.3, 0.0, 0.1]))
        .unwrap();
        let d = DVector::from_vec(vec![0.3, 0.8, 0.5, 0.15, 0.6, 0.9]);
        for kind in CostKind::PROPOSED {
            let obj = Objective::new(&p, kind, None).unwrap();
            let g = obj.gradient(&d).unwrap().values;
            let h = 1e-5;
            let fd = DVector::from_fn(6, |i, _| {
                let mut a = d.clone();
                let mut b = d.clone();
                a[i] += h;
                b[i] -= h;
                (obj.evaluate(&a).unwrap() - obj.evaluate(&b).unwrap()) / (2.0 * h)
            });
            let err = (&g - &fd).amax() / fd.amax();
            assert!(err < 1e-5, "{kind}: relative error {err}");
        }
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("bmse".parse::<CostKind>().unwrap(), CostKind::Bmse);
        assert_eq!("wc-bmse".parse::<CostKind>().unwrap(), CostKind::WcBmse);
        assert_eq!("LR".parse::<CostKind>().unwrap(), CostKind::LrDesign);
        assert!("D_DESIGN".parse::<CostKind>().is_err());
        assert_eq!(serde_json::to_string(&CostKind::WcMse).unwrap(), "\"WC_MSE\"");
    }
}
