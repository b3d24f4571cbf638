//! Experiment orchestration: synthetic graphs, Monte-Carlo MSE evaluation of
//! sampling designs, robustness sweeps and CSV output. Everything here runs
//! in `f64`.

mod audit;
mod config;
mod montecarlo;
mod results;

pub use audit::{
    audit_instance, gradcheck, relative_gradient_error, run_property_suite, GradcheckReport, PropertyCheck,
};
pub use config::{
    read_vector, BandChoice, Experiment, ExperimentConfig, GraphSource, NoiseSpec, ReferenceSpec, RobustnessSweep,
    SignalMode, SolverSpec,
};
pub use montecarlo::{
    cell_id, evaluate, monte_carlo_mse, run_monte_carlo, run_robustness_sweep, select_sets, trial_rng, CellOutcome,
    McEstimate, Signal,
};
pub use results::{emit_results, parse_results, read_results, write_results, ResultRecord, CSV_HEADER};

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::{Edge, WeightedGraph};

/// Redraws allowed before an ER graph is declared infeasible.
pub const ER_MAX_ATTEMPTS: usize = 100;

/// Smallest edge weight kept after drawing from the weight distribution.
pub const MIN_EDGE_WEIGHT: f64 = 1e-3;

/// Erdős–Rényi graph with `N(weight_mean, weight_std²)` weights truncated
/// below at [`MIN_EDGE_WEIGHT`], redrawn until connected.
pub fn generate_er_graph<G: Rng + ?Sized>(
    n: usize,
    p: f64,
    weight_mean: f64,
    weight_std: f64,
    rng: &mut G,
) -> Result<WeightedGraph<f64>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Config(format!("edge probability must lie in [0, 1], got {p}")));
    }
    let weights =
        Normal::new(weight_mean, weight_std).map_err(|e| Error::Config(format!("invalid weight distribution: {e}")))?;
    let mut best_components = usize::MAX;
    for _ in 0..ER_MAX_ATTEMPTS {
        let mut edges = Vec::new();
        for a in 0..n {
            for b in (a + 1)..n {
                if rng.random_bool(p) {
                    edges.push(Edge { a, b, weight: weights.sample(rng).max(MIN_EDGE_WEIGHT) });
                }
            }
        }
        let g = WeightedGraph::new(n, edges)?;
        if g.is_connected() {
            return Ok(g);
        }
        best_components = best_components.min(component_count(&g));
    }
    Err(Error::Infeasible {
        message: format!("no connected ER({n}, {p}) graph in {ER_MAX_ATTEMPTS} draws"),
        best: best_components as f64,
    })
}

fn component_count(g: &WeightedGraph<f64>) -> usize {
    let n = g.n_nodes();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(p: &mut [usize], mut i: usize) -> usize {
        while p[i] != i {
            p[i] = p[p[i]];
            i = p[i];
        }
        i
    }
    for e in g.edges() {
        let (ra, rb) = (find(&mut parent, e.a), find(&mut parent, e.b));
        parent[ra] = rb;
    }
    (0..n).filter(|&i| find(&mut parent, i) == i).count()
}

/// Worker pool sized by `GSAMPLE_THREADS` (all cores when unset).
pub fn worker_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("GSAMPLE_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("GSAMPLE_THREADS must be a positive integer, got {v:?}")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}
