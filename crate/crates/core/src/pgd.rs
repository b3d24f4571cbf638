//! Projected gradient descent on the relaxed sampling problem
//! `min C(d)` over `d ∈ [0,1]^N`, `‖d‖² ≤ q`, followed by rounding.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::costs::{state_cost, CostKind, Objective};
use crate::error::{Error, Result};
use crate::estimator::EstimatorState;
use crate::filter::FilterSpec;
use crate::model::{indicator, BandlimitedSpec, ProblemInstance};
use crate::scalar::{is_finite, lit, to_f64, Scalar};

/// Regularization weight of the strictly-bandlimited surrogate used to give
/// A- and E-design a gradient.
pub const BANDLIMITED_SURROGATE_MU: f64 = 1e4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BallProjection {
    /// Scale by `q/‖y‖²` when `‖y‖² > q`.
    #[default]
    Printed,
    /// Scale by `√q/‖y‖` when `‖y‖² > q` (the Euclidean projection).
    Euclidean,
    /// Always scale by `q/‖y‖²`, as in the step-by-step algorithm listing.
    Unconditional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DescentTest {
    /// Accept a step when the binary projection of the candidate costs no
    /// more than the binary projection of the current point.
    #[default]
    Projected,
    /// Accept a step when the relaxed cost does not increase.
    Relaxed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PgdConfig {
    pub rho0: f64,
    pub beta: f64,
    pub max_iter: usize,
    pub max_backtrack: usize,
    pub eps: f64,
    pub q: usize,
    /// Starting point; `(q/N)·1` clipped to `[0.01, 0.99]` when absent.
    pub d0: Option<Vec<f64>>,
    pub ball: BallProjection,
    /// Ball/box alternations per iteration.
    pub alt_rounds: usize,
    pub descent_test: DescentTest,
    /// Improve the rounded set with single swaps until none helps.
    pub swap_refine: bool,
}

impl Default for PgdConfig {
    fn default() -> Self {
        PgdConfig {
            rho0: 1.0,
            beta: 0.5,
            max_iter: 200,
            max_backtrack: 30,
            eps: 1e-6,
            q: 1,
            d0: None,
            ball: BallProjection::Printed,
            alt_rounds: 1,
            descent_test: DescentTest::Projected,
            swap_refine: false,
        }
    }
}

impl PgdConfig {
    pub fn new(q: usize) -> Self {
        PgdConfig { q, ..Default::default() }
    }

    fn validate(&self, n: usize) -> Result<()> {
        if !(self.beta > 0.0 && self.beta < 1.0) {
            return Err(Error::Config(format!("beta must lie in (0, 1), got {}", self.beta)));
        }
        if !(self.rho0 > 0.0) {
            return Err(Error::Config(format!("rho0 must be positive, got {}", self.rho0)));
        }
        if self.q == 0 || self.q > n {
            return Err(Error::Config(format!("budget {} must lie in [1, {n}]", self.q)));
        }
        if self.alt_rounds == 0 {
            return Err(Error::Config("alt_rounds must be at least 1".into()));
        }
        if let Some(d0) = &self.d0 {
            if d0.len() != n {
                return Err(Error::Config(format!("d0 has length {}, expected {n}", d0.len())));
            }
            if d0.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
                return Err(Error::Config("d0 must lie strictly inside (0, 1)".into()));
            }
            if d0.iter().map(|v| v * v).sum::<f64>() > self.q as f64 + 1e-9 {
                return Err(Error::Config("d0 violates the budget".into()));
            }
        }
        Ok(())
    }

    pub fn initial_point<T: Scalar>(&self, n: usize) -> DVector<T> {
        match &self.d0 {
            Some(v) => DVector::from_iterator(n, v.iter().map(|&x| lit::<T>(x))),
            None => DVector::from_element(n, lit::<T>((self.q as f64 / n as f64).clamp(0.01, 0.99))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Step length fell below `eps`.
    Converged,
    MaxIterations,
    /// No step passed the descent test within the backtracking budget.
    Stalled,
    /// The gradient vanished.
    Stationary,
}

#[derive(Debug, Clone)]
pub struct PgdResult<T: Scalar> {
    pub relaxed: DVector<T>,
    /// The `q` largest entries of the relaxed solution (after swap refinement
    /// when enabled), ascending.
    pub selected: Vec<usize>,
    /// Indicator of `selected`.
    pub rounded: DVector<T>,
    /// Cost of the binary projection at the start and after every accepted step.
    pub trace: Vec<T>,
    /// Relaxed cost at the start and after every accepted step.
    pub relaxed_trace: Vec<T>,
    /// Relaxed iterate at the start and after every accepted step.
    pub iterates: Vec<DVector<T>>,
    pub iterations: usize,
    pub termination: Termination,
}

/// Budget step: scale `y` down when `‖y‖² > q`.
pub fn project_ball<T: Scalar>(y: &DVector<T>, q: usize, mode: BallProjection) -> DVector<T> {
    let energy = y.norm_squared();
    let q = lit::<T>(q as f64);
    if mode == BallProjection::Unconditional {
        return if energy > T::zero() { y * (q / energy) } else { y.clone() };
    }
    if energy <= q {
        return y.clone();
    }
    match mode {
        BallProjection::Printed => y * (q / energy),
        BallProjection::Euclidean => y * (q.sqrt() / energy.sqrt()),
        BallProjection::Unconditional => unreachable!(),
    }
}

/// Clamp each entry to `[0, 1]`.
pub fn project_box<T: Scalar>(y: &DVector<T>) -> DVector<T> {
    y.map(|v| v.max(T::zero()).min(T::one()))
}

/// Indices of the `q` largest entries (smaller index first on ties), sorted
/// ascending.
pub fn top_q<T: Scalar>(y: &DVector<T>, q: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| y[b].partial_cmp(&y[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut keep: Vec<usize> = order.into_iter().take(q.min(y.len())).collect();
    keep.sort_unstable();
    keep
}

/// Round to the nearest of `{0, 1}`; if that leaves more than `q` ones, keep
/// the `q` largest.
pub fn project_binary<T: Scalar>(y: &DVector<T>, q: usize) -> DVector<T> {
    let half = lit::<T>(0.5);
    let ones: Vec<usize> = (0..y.len()).filter(|&i| y[i] >= half).collect();
    let keep = if ones.len() > q {
        let masked = DVector::from_fn(y.len(), |i, _| if y[i] >= half { y[i] } else { lit::<T>(f64::NEG_INFINITY) });
        top_q(&masked, q)
    } else {
        ones
    };
    let mut out = DVector::zeros(y.len());
    for i in keep {
        out[i] = T::one();
    }
    out
}

fn project<T: Scalar>(y: &DVector<T>, config: &PgdConfig) -> DVector<T> {
    let mut d = y.clone();
    for _ in 0..config.alt_rounds {
        d = project_box(&project_ball(&d, config.q, config.ball));
    }
    d
}

/// Run projected gradient descent on an objective with an analytic gradient.
pub fn pgd_solve<T: Scalar>(objective: &Objective<'_, T>, config: &PgdConfig) -> Result<PgdResult<T>> {
    let n = objective.instance().dim();
    if !objective.kind().has_gradient() {
        return Err(Error::Config(format!(
            "{} has no gradient; build its surrogate with baseline_surrogate",
            objective.kind()
        )));
    }
    config.validate(n)?;
    let q = config.q;
    let projected_cost = |d: &DVector<T>| objective.evaluate(&project_binary(d, q));

    let mut d = config.initial_point::<T>(n);
    let mut cur_proj = projected_cost(&d)?;
    let mut cur_relaxed = objective.evaluate(&d)?;
    let mut trace = vec![cur_proj];
    let mut relaxed_trace = vec![cur_relaxed];
    let mut iterates = vec![d.clone()];
    let mut termination = Termination::MaxIterations;
    let mut iterations = 0;

    for _ in 0..config.max_iter {
        iterations += 1;
        let g = objective.gradient(&d)?.values;
        if g.iter().any(|&v| !is_finite(v)) {
            return Err(Error::Numerical("gradient contains non-finite entries".into()));
        }
        if g.iter().all(|&v| v == T::zero()) {
            termination = Termination::Stationary;
            break;
        }
        let mut rho = lit::<T>(config.rho0);
        let mut accepted = None;
        for _ in 0..config.max_backtrack {
            let cand = project(&(&d - &g * rho), config);
            // the next gradient needs an invertible K, so such steps are too long
            let state = EstimatorState::new(objective.instance(), &cand)?;
            if state.is_singular() {
                rho *= lit::<T>(config.beta);
                continue;
            }
            let cand_relaxed = state_cost(objective.kind(), &state);
            let ok = match config.descent_test {
                DescentTest::Projected => {
                    let p = projected_cost(&cand)?;
                    (p <= cur_proj).then_some((cand, p, cand_relaxed))
                }
                DescentTest::Relaxed => (cand_relaxed <= cur_relaxed)
                    .then(|| projected_cost(&cand).map(|p| (cand, p, cand_relaxed)))
                    .transpose()?,
            };
            if ok.is_some() {
                accepted = ok;
                break;
            }
            rho *= lit::<T>(config.beta);
        }
        let Some((cand, p, r)) = accepted else {
            log::debug!("linesearch stalled after {} backtracking steps", config.max_backtrack);
            termination = Termination::Stalled;
            break;
        };
        let step = (&cand - &d).norm();
        d = cand;
        cur_proj = p;
        cur_relaxed = r;
        trace.push(p);
        relaxed_trace.push(r);
        iterates.push(d.clone());
        if step < lit::<T>(config.eps) {
            termination = Termination::Converged;
            break;
        }
    }
    log::debug!("pgd finished after {iterations} iterations ({termination:?}), relaxed cost {:e}", to_f64(cur_relaxed));

    let mut selected = top_q(&d, q);
    if config.swap_refine {
        selected = swap_refine(objective, &selected)?.0;
    }
    let mut rounded = DVector::zeros(n);
    for &i in &selected {
        rounded[i] = T::one();
    }
    Ok(PgdResult { relaxed: d, selected, rounded, trace, relaxed_trace, iterates, iterations, termination })
}

/// Local search over single swaps (one selected node for one unselected
/// node), taking the first improving swap in index order, until no swap
/// lowers the cost. Returns the set, ascending, and its cost.
pub fn swap_refine<T: Scalar>(objective: &Objective<'_, T>, set: &[usize]) -> Result<(Vec<usize>, T)> {
    let n = objective.instance().dim();
    let mut set = set.to_vec();
    let mut best = objective.evaluate(&indicator(n, &set)?)?;
    loop {
        let mut improved = false;
        for i in 0..set.len() {
            for w in 0..n {
                if set.contains(&w) {
                    continue;
                }
                let mut trial = set.clone();
                trial[i] = w;
                let c = objective.evaluate(&indicator(n, &trial)?)?;
                if c < best - lit::<T>(1e-12) * best.abs() {
                    best = c;
                    set = trial;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    set.sort_unstable();
    Ok((set, best))
}

/// Differentiable stand-in for a design criterion: A-design uses BMSE and
/// E-design WC-BMSE on a strictly-bandlimited instance (`h_M = I`,
/// `h_R` = projector off the band, large `μ`); LR-design uses WC-BMSE with
/// `h_M = I`, `h_R = L`, `R = I`. Proposed costs are returned unchanged.
pub fn baseline_surrogate<T: Scalar>(
    instance: &ProblemInstance<T>,
    kind: CostKind,
    band: Option<&BandlimitedSpec>,
) -> Result<(ProblemInstance<T>, CostKind)> {
    let n = instance.dim();
    let decomp = instance.decomp().clone();
    match kind {
        CostKind::ADesign | CostKind::EDesign => {
            let band = band.ok_or_else(|| Error::Config(format!("{kind} requires a frequency band")))?;
            let surrogate = ProblemInstance::new(
                decomp,
                FilterSpec::Identity,
                band.complement_projector(n),
                instance.noise_cov().clone(),
                lit(BANDLIMITED_SURROGATE_MU),
                DVector::zeros(n),
            )?;
            let k = if kind == CostKind::ADesign { CostKind::Bmse } else { CostKind::WcBmse };
            Ok((surrogate, k))
        }
        CostKind::LrDesign => {
            let surrogate = ProblemInstance::new(
                decomp,
                FilterSpec::Identity,
                FilterSpec::LaplacianPower { k: 1 },
                nalgebra::DMatrix::identity(n, n),
                instance.mu(),
                DVector::zeros(n),
            )?;
            Ok((surrogate, CostKind::WcBmse))
        }
        k => Ok((instance.clone(), k)),
    }
}

/// PGD for any cost kind, routing design baselines through their surrogate.
pub fn pgd_solve_kind<T: Scalar>(
    instance: &ProblemInstance<T>,
    kind: CostKind,
    band: Option<&BandlimitedSpec>,
    config: &PgdConfig,
) -> Result<PgdResult<T>> {
    let (surrogate, k) = baseline_surrogate(instance, kind, band)?;
    let objective = Objective::new(&surrogate, k, None)?;
    pgd_solve(&objective, config)
}
