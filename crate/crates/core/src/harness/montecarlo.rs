//! Monte-Carlo MSE evaluation and robustness sweeps.

use std::time::Instant;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::costs::{CostKind, Objective};
use crate::error::{Error, Result};
use crate::estimator::EstimatorState;
use crate::greedy::{greedy_select, FastPath, GreedyConfig};
use crate::model::{
    indicator, perturb_topology, sample_measurement, sample_prior, BandlimitedSpec, ProblemInstance, SamplingVector,
};
use crate::pgd::{pgd_solve_kind, PgdConfig};

use super::config::{Experiment, RobustnessSweep, SignalMode, SolverSpec};
use super::results::ResultRecord;
use super::worker_pool;

/// Independent stream for `(master seed, cell, trial)`.
pub fn trial_rng(master: u64, cell: u64, trial: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[..8].copy_from_slice(&master.to_le_bytes());
    seed[8..16].copy_from_slice(&cell.to_le_bytes());
    seed[16..24].copy_from_slice(&trial.to_le_bytes());
    ChaCha8Rng::from_seed(seed)
}

/// Stream id of a (method, budget) cell. It does not depend on sweep
/// parameters, so sweep points share random numbers.
pub fn cell_id(kind: CostKind, q: usize) -> u64 {
    let k = CostKind::ALL.iter().position(|&c| c == kind).expect("kind is listed") as u64;
    ((k + 1) << 32) | q as u64
}

const FIXED_SIGNAL_CELL: u64 = u64::MAX;
const TOPOLOGY_CELL: u64 = u64::MAX - 1;

/// Source of the true signal in each trial.
#[derive(Debug, Clone)]
pub enum Signal {
    Prior,
    Fixed(DVector<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub mse: f64,
    /// Standard error of the mean.
    pub std_err: f64,
}

/// Empirical MSE of the estimator built on `est` with sampling set `set`,
/// with signals and measurements generated from `data`.
pub fn monte_carlo_mse(
    est: &ProblemInstance<f64>,
    data: &ProblemInstance<f64>,
    set: &[usize],
    trials: usize,
    signal: &Signal,
    master: u64,
    cell: u64,
) -> Result<McEstimate> {
    if est.dim() != data.dim() {
        return Err(Error::Structural("estimator and data instances differ in size".into()));
    }
    let n = est.dim();
    let d = SamplingVector::from_set(n, set)?;
    let state = EstimatorState::new(est, d.values())?;
    let (g, c) = state.affine_map();
    let errors = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let mut rng = trial_rng(master, cell, t);
            let x = match signal {
                Signal::Prior => sample_prior(data, &mut rng)?,
                Signal::Fixed(x) => x.clone(),
            };
            let y = sample_measurement(data, &x, &d, &mut rng)?;
            Ok((&g * y + &c - x).norm_squared())
        })
        .collect::<Result<Vec<f64>>>()?;
    // sequential reduction keeps the result independent of the thread count
    let m = trials as f64;
    let mean = errors.iter().sum::<f64>() / m;
    let var = if trials > 1 { errors.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (m - 1.0) } else { 0.0 };
    Ok(McEstimate { mse: mean, std_err: (var / m).sqrt() })
}

fn recoverable(e: &Error) -> bool {
    e.is_infeasible() || matches!(e, Error::Rank(_) | Error::Numerical(_))
}

/// Sampling sets for every budget in `qs`. Greedy runs once to the largest
/// budget and is truncated; PGD runs per budget. Infeasible budgets yield
/// an inner error.
pub fn select_sets(
    instance: &ProblemInstance<f64>,
    kind: CostKind,
    band: &BandlimitedSpec,
    solver: &SolverSpec,
    qs: &[usize],
) -> Result<Vec<Result<Vec<usize>>>> {
    let band_arg = kind.needs_band().then(|| band.clone());
    match solver {
        SolverSpec::Greedy { fast_path } => {
            let q_max = qs.iter().copied().max().unwrap_or(0);
            let path = if *fast_path && matches!(kind, CostKind::Bmse | CostKind::Bcrb | CostKind::WcMse) {
                FastPath::ExactRankOne
            } else {
                FastPath::Off
            };
            let objective = Objective::new(instance, kind, band_arg)?;
            match greedy_select(&objective, &GreedyConfig::budget(q_max).with_fast_path(path)) {
                Ok(r) => Ok(qs.iter().map(|&q| Ok(r.selected[..q].to_vec())).collect()),
                Err(e) if recoverable(&e) => {
                    let msg = e.to_string();
                    Ok(qs.iter().map(|_| Err(Error::Infeasible { message: msg.clone(), best: f64::NAN })).collect())
                }
                Err(e) => Err(e),
            }
        }
        SolverSpec::Pgd(base) => qs
            .iter()
            .map(|&q| {
                if q == 0 {
                    return Ok(Ok(Vec::new()));
                }
                let cfg = PgdConfig { q, ..base.clone() };
                match pgd_solve_kind(instance, kind, Some(band), &cfg) {
                    Ok(r) => Ok(Ok(r.selected)),
                    Err(e) if recoverable(&e) => Ok(Err(e)),
                    Err(e) => Err(e),
                }
            })
            .collect(),
    }
}

/// A result record with the Monte-Carlo standard error of its MSE.
#[derive(Debug, Clone)]
pub struct CellOutcome {
    pub record: ResultRecord,
    pub std_err: f64,
    /// Why the cell is infeasible, if it is.
    pub note: Option<String>,
}

struct Sweep<'a> {
    exp: &'a Experiment,
    signal: Signal,
}

impl<'a> Sweep<'a> {
    fn new(exp: &'a Experiment) -> Result<Self> {
        let signal = match exp.config.signal {
            SignalMode::Prior => Signal::Prior,
            SignalMode::Fixed => {
                Signal::Fixed(sample_prior(&exp.instance, &mut trial_rng(exp.config.seed, FIXED_SIGNAL_CELL, 0))?)
            }
        };
        Ok(Sweep { exp, signal })
    }

    fn budgets(&self) -> Vec<usize> {
        self.exp.config.q_pct.iter().map(|&q| self.exp.q_count(q)).collect()
    }

    /// Select on `est` and evaluate cells with data from `data`.
    fn run(&self, est: &ProblemInstance<f64>, data: &ProblemInstance<f64>, label: &str) -> Result<Vec<CellOutcome>> {
        let qs = self.budgets();
        let mut out = Vec::new();
        for &kind in &self.exp.config.methods {
            let t0 = Instant::now();
            let sets = select_sets(est, kind, &self.exp.band, &self.exp.config.solver, &qs)?;
            let select_ms = t0.elapsed().as_secs_f64() * 1e3;
            for ((&q_pct, &q), set) in self.exp.config.q_pct.iter().zip(&qs).zip(sets) {
                out.push(self.cell(est, data, kind, q_pct, q, set, select_ms, label)?);
            }
        }
        Ok(out)
    }

    /// Evaluate fixed sets (one per method and budget) with data from `data`.
    fn rerun(
        &self,
        inst: &ProblemInstance<f64>,
        nominal: &[(CostKind, Vec<Result<Vec<usize>>>)],
        label: &str,
    ) -> Result<Vec<CellOutcome>> {
        let qs = self.budgets();
        let mut out = Vec::new();
        for (kind, sets) in nominal {
            for ((&q_pct, &q), set) in self.exp.config.q_pct.iter().zip(&qs).zip(sets) {
                let set = match set {
                    Ok(s) => Ok(s.clone()),
                    Err(e) => Err(Error::Infeasible { message: e.to_string(), best: f64::NAN }),
                };
                out.push(self.cell(inst, inst, *kind, q_pct, q, set, 0.0, label)?);
            }
        }
        Ok(out)
    }

    #[allow(clippy::too_many_arguments)]
    fn cell(
        &self,
        est: &ProblemInstance<f64>,
        data: &ProblemInstance<f64>,
        kind: CostKind,
        q_pct: f64,
        q: usize,
        set: Result<Vec<usize>>,
        select_ms: f64,
        label: &str,
    ) -> Result<CellOutcome> {
        let t0 = Instant::now();
        let cfg = &self.exp.config;
        let method = format!("{}{label}", kind.name());
        let labels = |s: &[usize]| s.iter().map(|&i| self.exp.node_label(i)).collect::<Vec<_>>();
        let infeasible = |selected: Vec<usize>, note: String| {
            log::warn!("{method} at q = {q_pct}%: {note}");
            CellOutcome {
                record: ResultRecord {
                    method: method.clone(),
                    q_pct,
                    mse: f64::NAN,
                    cost: f64::NAN,
                    wall_ms: select_ms + t0.elapsed().as_secs_f64() * 1e3,
                    seed: cfg.seed,
                    selected,
                },
                std_err: f64::NAN,
                note: Some(note),
            }
        };
        let set = match set {
            Ok(s) => s,
            Err(e) => return Ok(infeasible(Vec::new(), e.to_string())),
        };
        let objective = Objective::new(est, kind, kind.needs_band().then(|| self.exp.band.clone()))?;
        let cost = match objective.evaluate(&indicator(est.dim(), &set)?) {
            Ok(c) => c,
            Err(e) if recoverable(&e) => return Ok(infeasible(labels(&set), e.to_string())),
            Err(e) => return Err(e),
        };
        let mc = monte_carlo_mse(est, data, &set, cfg.trials, &self.signal, cfg.seed, cell_id(kind, q))?;
        log::info!("{method} q = {q_pct}% ({q} nodes): mse {:.6e} ± {:.2e}", mc.mse, mc.std_err);
        Ok(CellOutcome {
            record: ResultRecord {
                method,
                q_pct,
                mse: mc.mse,
                cost,
                wall_ms: select_ms + t0.elapsed().as_secs_f64() * 1e3,
                seed: cfg.seed,
                selected: labels(&set),
            },
            std_err: mc.std_err,
            note: None,
        })
    }
}

/// Every configured method at every budget on the nominal instance.
pub fn run_monte_carlo(exp: &Experiment) -> Result<Vec<CellOutcome>> {
    let sweep = Sweep::new(exp)?;
    worker_pool()?.install(|| sweep.run(&exp.instance, &exp.instance, ""))
}

/// The configured robustness sweep; records are labelled `METHOD|param=value`.
pub fn run_robustness_sweep(exp: &Experiment) -> Result<Vec<CellOutcome>> {
    let sweep = Sweep::new(exp)?;
    worker_pool()?.install(|| match &exp.config.robustness {
        RobustnessSweep::None => sweep.run(&exp.instance, &exp.instance, ""),
        RobustnessSweep::Sigma2 { values } => {
            let qs = sweep.budgets();
            let nominal = exp
                .config
                .methods
                .iter()
                .map(|&kind| Ok((kind, select_sets(&exp.instance, kind, &exp.band, &exp.config.solver, &qs)?)))
                .collect::<Result<Vec<_>>>()?;
            let n = exp.dim();
            let mut out = Vec::new();
            for &s2 in values {
                let inst = exp.instance.with_noise(nalgebra::DMatrix::identity(n, n) * s2)?;
                out.extend(sweep.rerun(&inst, &nominal, &format!("|sigma2={s2}"))?);
            }
            Ok(out)
        }
        RobustnessSweep::DeltaL { values } => {
            let mut out = Vec::new();
            for &delta in values {
                let mut rng = trial_rng(exp.config.seed, TOPOLOGY_CELL, delta as u64);
                let (g, ops) = perturb_topology(&exp.graph, delta, &mut rng)?;
                log::info!("delta = {delta}: {ops:?}");
                let est = exp.instance_for_graph(&g)?;
                out.extend(sweep.run(&est, &exp.instance, &format!("|delta={delta}"))?);
            }
            Ok(out)
        }
    })
}

/// Run whatever the configuration asks for: the plain sweep or the
/// robustness sweep.
pub fn evaluate(exp: &Experiment) -> Result<Vec<CellOutcome>> {
    match exp.config.robustness {
        RobustnessSweep::None => run_monte_carlo(exp),
        _ => run_robustness_sweep(exp),
    }
}
