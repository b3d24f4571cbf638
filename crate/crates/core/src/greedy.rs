//! Greedy sampling-set selection with exact rank-one fast paths and an
//! eigenvalue-perturbation shortcut for the spectral-norm cost.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::costs::{CostKind, Objective};
use crate::error::{Error, Result};
use crate::estimator::EstimatorState;
use crate::linalg::{max_eigenpair, sym_eigen, symmetrize, trace, PsdFactor};
use crate::model::indicator;
use crate::scalar::{lit, to_f64, Scalar};

/// Candidates must improve on the incumbent by this relative margin to win,
/// so exact ties go to the smallest node index.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stopping {
    /// Select exactly `q` nodes.
    Budget(usize),
    /// Add nodes until the cost is at or below the threshold.
    Threshold(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FastPath {
    /// Rebuild and evaluate the cost from scratch for every candidate.
    #[default]
    Off,
    /// Sherman–Morrison updates of `K⁻¹` (BMSE, BCRB, WC-MSE; diagonal `R`).
    ExactRankOne,
    /// First-order eigenvalue update (WC-BMSE only; approximate).
    EigPerturbation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    pub stopping: Stopping,
    #[serde(default)]
    pub fast_path: FastPath,
}

impl GreedyConfig {
    pub fn budget(q: usize) -> Self {
        GreedyConfig { stopping: Stopping::Budget(q), fast_path: FastPath::Off }
    }

    pub fn threshold(eps: f64) -> Self {
        GreedyConfig { stopping: Stopping::Threshold(eps), fast_path: FastPath::Off }
    }

    pub fn with_fast_path(mut self, fast_path: FastPath) -> Self {
        self.fast_path = fast_path;
        self
    }
}

#[derive(Debug, Clone)]
pub struct GreedyResult<T: Scalar> {
    /// Selected nodes in the order they were added.
    pub selected: Vec<usize>,
    /// Cost of the selected prefix after each step.
    pub trace: Vec<T>,
    /// Number of from-scratch cost evaluations.
    pub evaluations: usize,
    /// The path actually used after fallbacks.
    pub fast_path: FastPath,
    /// `K⁻¹` of the final set as maintained by rank-one updates.
    pub running_inverse: Option<DMatrix<T>>,
}

/// From-scratch evaluations made by the plain greedy loop: `Σ_{i<q} (N − i)`.
pub fn naive_evaluation_count(n: usize, q: usize) -> usize {
    (0..q).map(|i| n - i).sum()
}

fn improves<T: Scalar>(candidate: T, best: Option<T>) -> bool {
    match best {
        None => true,
        Some(b) => {
            if crate::scalar::is_nan(candidate) {
                return false;
            }
            if crate::scalar::is_nan(b) {
                return true;
            }
            if !crate::scalar::is_finite(b) {
                return candidate < b;
            }
            let margin = lit::<T>(TIE_TOL) * b.abs().max(lit(f64::MIN_POSITIVE));
            candidate < b - margin
        }
    }
}

/// Index of the smallest cost, earliest index winning ties.
fn argmin<T: Scalar>(costs: &[(usize, T)]) -> Option<(usize, T)> {
    let mut best: Option<(usize, T)> = None;
    for &(i, c) in costs {
        if improves(c, best.map(|b| b.1)) {
            best = Some((i, c));
        }
    }
    best
}

fn effective_fast_path<T: Scalar>(objective: &Objective<'_, T>, requested: FastPath) -> Result<FastPath> {
    let inst = objective.instance();
    match requested {
        FastPath::Off => Ok(FastPath::Off),
        FastPath::EigPerturbation if objective.kind() != CostKind::WcBmse => {
            Err(Error::Config("the eigenvalue-perturbation path only applies to WC_BMSE".into()))
        }
        FastPath::ExactRankOne if !matches!(objective.kind(), CostKind::Bmse | CostKind::Bcrb | CostKind::WcMse) => {
            Err(Error::Config(format!("no rank-one fast path for {}", objective.kind())))
        }
        path => {
            if !inst.noise_is_diagonal() {
                log::info!("noise covariance is not diagonal; falling back to naive greedy");
                return Ok(FastPath::Off);
            }
            let k0 = inst.h_r() * inst.mu();
            if PsdFactor::new(&k0).is_singular() {
                log::info!("K(∅) = μh_R is singular; falling back to naive greedy");
                return Ok(FastPath::Off);
            }
            Ok(path)
        }
    }
}

/// Greedy minimization of `objective` over binary sampling sets.
pub fn greedy_select<T: Scalar>(objective: &Objective<'_, T>, config: &GreedyConfig) -> Result<GreedyResult<T>> {
    let n = objective.instance().dim();
    let (max_steps, threshold) = match config.stopping {
        Stopping::Budget(q) => {
            if q == 0 || q > n {
                return Err(Error::Config(format!("budget {q} must lie in [1, {n}]")));
            }
            (q, None)
        }
        Stopping::Threshold(eps) => (n, Some(lit::<T>(eps))),
    };
    let path = effective_fast_path(objective, config.fast_path)?;
    let mut walker = match path {
        FastPath::Off => Walker::Naive,
        FastPath::ExactRankOne => Walker::rank_one(objective),
        FastPath::EigPerturbation => Walker::perturbation(objective),
    };

    let mut selected: Vec<usize> = Vec::new();
    let mut in_set = vec![false; n];
    let mut trace_vals = Vec::new();
    let mut evaluations = 0usize;

    if let Some(eps) = threshold {
        let empty = objective.selection_cost(&DVector::zeros(n))?;
        evaluations += 1;
        if empty <= eps {
            return Ok(GreedyResult {
                selected,
                trace: trace_vals,
                evaluations,
                fast_path: path,
                running_inverse: walker.inverse(),
            });
        }
    }

    for _ in 0..max_steps {
        let candidates: Vec<usize> = (0..n).filter(|&w| !in_set[w]).collect();
        let costs: Vec<(usize, T)> = match &walker {
            Walker::Naive => {
                evaluations += candidates.len();
                let base = indicator::<T>(n, &selected)?;
                candidates
                    .par_iter()
                    .map(|&w| {
                        let mut d = base.clone();
                        d[w] = T::one();
                        objective.selection_cost(&d).map(|c| (w, c))
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            fast => candidates.par_iter().map(|&w| (w, fast.candidate_cost(objective, w))).collect(),
        };
        let (best, best_cost) = argmin(&costs).expect("at least one candidate remains");
        selected.push(best);
        in_set[best] = true;
        let accepted_cost = walker.accept(objective, best, best_cost, &selected)?;
        trace_vals.push(accepted_cost);
        if let Some(eps) = threshold {
            if accepted_cost <= eps {
                break;
            }
        }
    }

    if let Some(eps) = threshold {
        let last = *trace_vals.last().expect("at least one step taken");
        if last > eps {
            return Err(Error::Infeasible {
                message: format!("cost threshold {} unreachable even when sampling every node", to_f64(eps)),
                best: to_f64(last),
            });
        }
    }
    Ok(GreedyResult { selected, trace: trace_vals, evaluations, fast_path: path, running_inverse: walker.inverse() })
}

/// Cost after adding `candidate` to the set held by `state`, computed with
/// the requested fast path instead of a fresh factorization. The rank-one
/// path is exact; the perturbation path is a first-order estimate.
pub fn greedy_step_fast<T: Scalar>(
    state: &EstimatorState<'_, T>,
    kind: CostKind,
    candidate: usize,
    path: FastPath,
) -> Result<T> {
    let inst = state.instance();
    if candidate >= inst.dim() {
        return Err(Error::Structural(format!("candidate {candidate} out of range for {} nodes", inst.dim())));
    }
    let objective = Objective::new(inst, kind, None)?;
    let walker = match effective_fast_path(&objective, path)? {
        FastPath::Off => {
            let mut d = state.d().clone();
            d[candidate] = T::one();
            return objective.selection_cost(&d);
        }
        FastPath::ExactRankOne => {
            state.require_invertible()?;
            Walker::rank_one_from(&objective, state.k_pinv().clone())
        }
        FastPath::EigPerturbation => Walker::perturbation_from(&objective, state.k().clone()),
    };
    Ok(walker.candidate_cost(&objective, candidate))
}

enum Walker<T: Scalar> {
    Naive,
    RankOne(RankOneCache<T>),
    Perturbation(PerturbationCache<T>),
}

struct RankOneCache<T: Scalar> {
    rows: DMatrix<T>,
    a: DMatrix<T>,
    trace_a: T,
    /// `h_R A`.
    hr_a: DMatrix<T>,
    /// `tr(A² h_R)`.
    trace_a2_hr: T,
}

struct PerturbationCache<T: Scalar> {
    rows: DMatrix<T>,
    k: DMatrix<T>,
    lambda_min: T,
    v_min: DVector<T>,
}

impl<T: Scalar> Walker<T> {
    fn rank_one(objective: &Objective<'_, T>) -> Self {
        let inst = objective.instance();
        Self::rank_one_from(objective, PsdFactor::new(&(inst.h_r() * inst.mu())).pinv())
    }

    /// Rank-one walker positioned at a set whose `K⁻¹` is `a`.
    fn rank_one_from(objective: &Objective<'_, T>, a: DMatrix<T>) -> Self {
        let inst = objective.instance();
        let mut cache = RankOneCache {
            rows: inst.measurement_rows(),
            trace_a: T::zero(),
            hr_a: DMatrix::zeros(0, 0),
            trace_a2_hr: T::zero(),
            a,
        };
        cache.refresh(inst.h_r());
        Walker::RankOne(cache)
    }

    fn perturbation(objective: &Objective<'_, T>) -> Self {
        let inst = objective.instance();
        Self::perturbation_from(objective, inst.h_r() * inst.mu())
    }

    fn perturbation_from(objective: &Objective<'_, T>, k: DMatrix<T>) -> Self {
        let inst = objective.instance();
        let e = sym_eigen(&k);
        Walker::Perturbation(PerturbationCache {
            rows: inst.measurement_rows(),
            lambda_min: e.values[0],
            v_min: e.vectors.column(0).into_owned(),
            k,
        })
    }

    fn inverse(&self) -> Option<DMatrix<T>> {
        match self {
            Walker::RankOne(c) => Some(c.a.clone()),
            _ => None,
        }
    }

    fn candidate_cost(&self, objective: &Objective<'_, T>, w: usize) -> T {
        match self {
            Walker::Naive => unreachable!("naive candidates are evaluated directly"),
            Walker::RankOne(c) => c.candidate_cost(objective, w),
            Walker::Perturbation(c) => {
                let proj = c.rows.column(w).dot(&c.v_min);
                T::one() / (c.lambda_min + proj * proj)
            }
        }
    }

    /// Commit node `w`, returning the cost recorded in the trace.
    fn accept(&mut self, objective: &Objective<'_, T>, w: usize, cost: T, selected: &[usize]) -> Result<T> {
        match self {
            Walker::Naive => Ok(cost),
            Walker::RankOne(c) => {
                let r = c.rows.column(w).into_owned();
                let ar = &c.a * &r;
                let s = T::one() + r.dot(&ar);
                c.a = symmetrize(&(&c.a - &ar * ar.transpose() / s));
                c.refresh(objective.instance().h_r());
                Ok(cost)
            }
            Walker::Perturbation(c) => {
                let r = c.rows.column(w).into_owned();
                c.k += &r * r.transpose();
                let e = sym_eigen(&c.k);
                c.lambda_min = e.values[0];
                c.v_min = e.vectors.column(0).into_owned();
                let n = objective.instance().dim();
                // trace records the exact cost of the accepted prefix
                objective.selection_cost(&indicator(n, selected)?)
            }
        }
    }
}

impl<T: Scalar> RankOneCache<T> {
    fn refresh(&mut self, h_r: &DMatrix<T>) {
        self.trace_a = trace(&self.a);
        self.hr_a = h_r * &self.a;
        self.trace_a2_hr = trace(&(&self.a * &self.hr_a));
    }

    fn candidate_cost(&self, objective: &Objective<'_, T>, w: usize) -> T {
        let inst = objective.instance();
        let mu = inst.mu();
        let r = self.rows.column(w);
        let c = &self.a * r;
        let s = T::one() + r.dot(&c);
        let cc = c.norm_squared();
        let bmse = self.trace_a - cc / s;
        if objective.kind() == CostKind::Bmse {
            return bmse;
        }
        // tr(A_new² h_R) with A_new = A − ccᵀ/s
        let hr_c = inst.h_r() * &c;
        let c_hr_a_c = c.dot(&(self.hr_a.transpose() * &c));
        let c_hr_c = c.dot(&hr_c);
        let tr_new = self.trace_a2_hr - lit::<T>(2.0) * c_hr_a_c / s + c_hr_c * cc / (s * s);
        let bcrb = bmse - mu * tr_new;
        if objective.kind() == CostKind::Bcrb {
            return bcrb;
        }
        let a_new = symmetrize(&(&self.a - &c * c.transpose() / s));
        let m = inst.h_r() * &a_new * &a_new * inst.h_r();
        let (top, _, _) = max_eigenpair(&symmetrize(&m));
        bcrb + mu * mu * top.max(T::zero())
    }
}
