//! Experiment description (JSON) and its materialization into a graph and a
//! problem instance.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::costs::CostKind;
use crate::error::{Error, Result};
use crate::filter::FilterSpec;
use crate::graph::{ground_node, WeightedGraph};
use crate::model::{BandlimitedSpec, ProblemInstance};
use crate::pgd::PgdConfig;
use crate::spectral::spectral_decompose;

use super::generate_er_graph;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphSource {
    /// Erdős–Rényi graph with Gaussian edge weights, redrawn until connected.
    Er {
        n: usize,
        p: f64,
        #[serde(default = "default_weight_mean")]
        weight_mean: f64,
        #[serde(default = "default_weight_std")]
        weight_std: f64,
        /// Defaults to a value derived from the master seed.
        #[serde(default)]
        seed: Option<u64>,
    },
    /// Whitespace-separated `a b [weight]` lines.
    EdgeList {
        path: PathBuf,
        #[serde(default)]
        n_nodes: Option<usize>,
    },
}

fn default_weight_mean() -> f64 {
    5.0
}

fn default_weight_std() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSpec {
    /// `R = σ² I`.
    Isotropic { sigma2: f64 },
    /// Dense covariance, one whitespace-separated row per line.
    File { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ReferenceSpec {
    #[default]
    Zero,
    /// One value per node (after pinning), whitespace separated.
    File { path: PathBuf },
}

/// Frequency band assumed by the A- and E-design baselines.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BandChoice {
    /// The lowest `⌈fraction·N⌉` graph frequencies.
    LowFraction {
        fraction: f64,
    },
    Indices {
        indices: Vec<usize>,
    },
}

impl Default for BandChoice {
    fn default() -> Self {
        BandChoice::LowFraction { fraction: 0.25 }
    }
}

impl BandChoice {
    pub fn resolve(&self, n: usize) -> Result<BandlimitedSpec> {
        match self {
            BandChoice::LowFraction { fraction } => {
                if !(*fraction > 0.0 && *fraction <= 1.0) {
                    return Err(Error::Config(format!("band fraction must lie in (0, 1], got {fraction}")));
                }
                let k = ((fraction * n as f64).ceil() as usize).clamp(1, n);
                BandlimitedSpec::new((0..k).collect(), n)
            }
            BandChoice::Indices { indices } => BandlimitedSpec::new(indices.clone(), n),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SolverSpec {
    Greedy {
        /// Use the rank-one / eigen-perturbation shortcuts where they apply.
        #[serde(default = "default_true")]
        fast_path: bool,
    },
    /// Projected gradient descent; the budget field is set per sweep point.
    Pgd(PgdConfig),
}

fn default_true() -> bool {
    true
}

impl Default for SolverSpec {
    fn default() -> Self {
        SolverSpec::Greedy { fast_path: true }
    }
}

/// What the Monte-Carlo trials average over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalMode {
    /// A fresh prior draw of `x` per trial (Bayesian MSE).
    #[default]
    Prior,
    /// One prior draw of `x` held fixed; trials only redraw the noise.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RobustnessSweep {
    #[default]
    None,
    /// Re-evaluate the nominal sets under each noise variance.
    Sigma2 { values: Vec<f64> },
    /// Select and estimate on a graph with this many random edge edits while
    /// data come from the true graph.
    DeltaL { values: Vec<usize> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSource,
    /// Reference node removed from the Laplacian (zero-phase bus).
    #[serde(default)]
    pub ground_node: Option<usize>,
    pub h_m: FilterSpec,
    pub h_r: FilterSpec,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default = "default_noise")]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub x0: ReferenceSpec,
    #[serde(default)]
    pub band: BandChoice,
    #[serde(default = "default_methods")]
    pub methods: Vec<CostKind>,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default = "default_q_pct")]
    pub q_pct: Vec<f64>,
    #[serde(default = "default_trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub signal: SignalMode,
    #[serde(default)]
    pub robustness: RobustnessSweep,
}

fn default_mu() -> f64 {
    0.1
}

fn default_noise() -> NoiseSpec {
    NoiseSpec::Isotropic { sigma2: 0.01 }
}

fn default_methods() -> Vec<CostKind> {
    CostKind::ALL.to_vec()
}

fn default_q_pct() -> Vec<f64> {
    vec![40.0, 60.0, 80.0]
}

fn default_trials() -> usize {
    1000
}

const ER_SEED_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

impl ExperimentConfig {
    /// Minimal configuration on an ER graph with the default noise, weight,
    /// sweep and method settings.
    pub fn er(n: usize, p: f64, h_m: FilterSpec, h_r: FilterSpec) -> Self {
        ExperimentConfig {
            graph: GraphSource::Er {
                n,
                p,
                weight_mean: default_weight_mean(),
                weight_std: default_weight_std(),
                seed: None,
            },
            ground_node: None,
            h_m,
            h_r,
            mu: default_mu(),
            noise: default_noise(),
            x0: ReferenceSpec::Zero,
            band: BandChoice::default(),
            methods: default_methods(),
            solver: SolverSpec::default(),
            q_pct: default_q_pct(),
            trials: default_trials(),
            seed: 0,
            signal: SignalMode::Prior,
            robustness: RobustnessSweep::None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load a JSON file; relative data paths are taken relative to it.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut cfg = Self::from_json(&std::fs::read_to_string(path)?)?;
        if let Some(dir) = path.parent() {
            cfg.rebase(dir);
        }
        Ok(cfg)
    }

    fn rebase(&mut self, dir: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if let GraphSource::EdgeList { path, .. } = &mut self.graph {
            fix(path);
        }
        if let NoiseSpec::File { path } = &mut self.noise {
            fix(path);
        }
        if let ReferenceSpec::File { path } = &mut self.x0 {
            fix(path);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(q) = self.q_pct.iter().find(|&&q| !(q > 0.0 && q <= 100.0)) {
            return Err(Error::Config(format!("q_pct values must lie in (0, 100], got {q}")));
        }
        if self.trials == 0 {
            return Err(Error::Config("trials must be at least 1".into()));
        }
        if !(self.mu >= 0.0) {
            return Err(Error::Config(format!("mu must be non-negative, got {}", self.mu)));
        }
        if let NoiseSpec::Isotropic { sigma2 } = self.noise {
            if !(sigma2 > 0.0) {
                return Err(Error::Config(format!("sigma2 must be positive, got {sigma2}")));
            }
        }
        if let GraphSource::Er { n, p, weight_std, .. } = self.graph {
            if n < 2 || !(0.0..=1.0).contains(&p) || !(weight_std >= 0.0) {
                return Err(Error::Config("ER graph needs n ≥ 2, p in [0, 1] and weight_std ≥ 0".into()));
            }
        }
        if let RobustnessSweep::Sigma2 { values } = &self.robustness {
            if values.iter().any(|&v| !(v > 0.0)) {
                return Err(Error::Config("sigma2 sweep values must be positive".into()));
            }
        }
        if self.methods.is_empty() {
            return Err(Error::Config("at least one method is required".into()));
        }
        Ok(())
    }

    /// Build the graph described by the configuration.
    pub fn build_graph(&self) -> Result<WeightedGraph<f64>> {
        match &self.graph {
            GraphSource::Er { n, p, weight_mean, weight_std, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(self.seed ^ ER_SEED_SALT));
                generate_er_graph(*n, *p, *weight_mean, *weight_std, &mut rng)
            }
            GraphSource::EdgeList { path, n_nodes } => WeightedGraph::read_edge_list(path, *n_nodes),
        }
    }
}

/// A configuration resolved into concrete matrices.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub graph: WeightedGraph<f64>,
    pub instance: ProblemInstance<f64>,
    pub band: BandlimitedSpec,
    noise_cov: DMatrix<f64>,
    x0: DVector<f64>,
}

fn read_numbers(path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::fs::read_to_string(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let row = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().map_err(|e| Error::Parse { line: i + 1, message: format!("{t:?}: {e}") }))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

/// A whitespace/comma separated vector, possibly spread over several lines.
pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    Ok(DVector::from_vec(read_numbers(path)?.concat()))
}

fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let rows = read_numbers(path)?;
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err(Error::Structural(format!("{} must hold a square matrix", path.display())));
    }
    Ok(DMatrix::from_row_iterator(n, n, rows.into_iter().flatten()))
}

fn resolve_instance(
    config: &ExperimentConfig,
    graph: &WeightedGraph<f64>,
    noise_cov: &DMatrix<f64>,
    x0: &DVector<f64>,
) -> Result<ProblemInstance<f64>> {
    let mut l = graph.laplacian();
    if let Some(node) = config.ground_node {
        l = ground_node(&l, node)?;
    }
    ProblemInstance::new(
        spectral_decompose(&l)?,
        config.h_m.clone(),
        config.h_r.clone(),
        noise_cov.clone(),
        config.mu,
        x0.clone(),
    )
}

impl Experiment {
    pub fn build(config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let graph = config.build_graph()?;
        let n = graph.n_nodes() - usize::from(config.ground_node.is_some());
        let noise_cov = match &config.noise {
            NoiseSpec::Isotropic { sigma2 } => DMatrix::identity(n, n) * *sigma2,
            NoiseSpec::File { path } => read_matrix(path)?,
        };
        let x0 = match &config.x0 {
            ReferenceSpec::Zero => DVector::zeros(n),
            ReferenceSpec::File { path } => read_vector(path)?,
        };
        let band = config.band.resolve(n)?;
        let instance = resolve_instance(&config, &graph, &noise_cov, &x0)?;
        Ok(Experiment { config, graph, instance, band, noise_cov, x0 })
    }

    /// The configured filters, noise and reference on another topology (same
    /// node set).
    pub fn instance_for_graph(&self, graph: &WeightedGraph<f64>) -> Result<ProblemInstance<f64>> {
        resolve_instance(&self.config, graph, &self.noise_cov, &self.x0)
    }

    /// Number of unknowns (nodes after pinning).
    pub fn dim(&self) -> usize {
        self.instance.dim()
    }

    /// `round(q̃·N/100)`.
    pub fn q_count(&self, q_pct: f64) -> usize {
        (q_pct * self.dim() as f64 / 100.0).round() as usize
    }

    /// Original node label of an unknown index (undoes pinning).
    pub fn node_label(&self, idx: usize) -> usize {
        match self.config.ground_node {
            Some(g) if idx >= g => idx + 1,
            _ => idx,
        }
    }

    /// Inverse of [`Experiment::node_label`].
    pub fn node_index(&self, label: usize) -> Result<usize> {
        match self.config.ground_node {
            Some(g) if label == g => Err(Error::Config(format!("node {label} is the pinned reference"))),
            Some(g) if label > g => Ok(label - 1),
            _ if label < self.dim() => Ok(label),
            _ => Err(Error::Structural(format!("node {label} out of range"))),
        }
    }
}
