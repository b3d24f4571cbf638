use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use nalgebra::DVector;

use gsample::costs::{CostKind, Objective};
use gsample::estimator::EstimatorState;
use gsample::harness::{
    emit_results, evaluate, gradcheck, read_vector, run_property_suite, select_sets, Experiment, ExperimentConfig,
    SolverSpec,
};
use gsample::model::indicator;
use gsample::pgd::PgdConfig;

const PRESETS: [(&str, &str); 3] = [
    ("fig1a", include_str!("../presets/fig1a.json")),
    ("fig1b", include_str!("../presets/fig1b.json")),
    ("fig1c", include_str!("../presets/fig1c.json")),
];

/// Sampling-set design for graph-signal recovery.
#[derive(Parser)]
#[command(name = "gsample", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Select a sampling set for one method and budget.
    Sample {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long)]
        method: CostKind,
        #[command(flatten)]
        budget: BudgetArgs,
        /// Use projected gradient descent instead of greedy selection.
        #[arg(long)]
        pgd: bool,
    },
    /// Estimate the graph signal from measurements on a sampling set.
    Estimate {
        #[command(flatten)]
        exp: ExperimentArgs,
        /// Measurements, one value per node (entries off the set are ignored).
        #[arg(long)]
        y: PathBuf,
        /// Comma-separated node labels of the sampling set.
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        set: Vec<usize>,
    },
    /// Monte-Carlo sweep over methods and budgets, written as CSV.
    Evaluate {
        #[command(flatten)]
        exp: ExperimentArgs,
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long, value_delimiter = ',')]
        methods: Option<Vec<CostKind>>,
        #[arg(long, value_delimiter = ',')]
        q_pct: Option<Vec<f64>>,
    },
    /// Compare analytic cost gradients with central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 12)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        points: usize,
        #[arg(long, default_value_t = 1e-5)]
        step: f64,
        #[arg(long, default_value_t = 1e-4)]
        tol: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check monotonicity, submodularity, convexity and large-μ limits on
    /// random instances.
    Props {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    /// JSON experiment configuration.
    #[arg(long, conflicts_with = "preset", required_unless_present = "preset")]
    config: Option<PathBuf>,
    /// Built-in configuration: fig1a, fig1b or fig1c.
    #[arg(long)]
    preset: Option<String>,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct BudgetArgs {
    /// Number of nodes to select.
    #[arg(long)]
    q: Option<usize>,
    /// Budget as a percentage of the nodes.
    #[arg(long)]
    q_pct: Option<f64>,
}

impl ExperimentArgs {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(path), _) => {
                ExperimentConfig::from_file(path).with_context(|| format!("loading {}", path.display()))?
            }
            (None, Some(name)) => {
                let (_, text) = PRESETS
                    .iter()
                    .find(|(n, _)| n == name)
                    .ok_or_else(|| anyhow!("unknown preset {name:?} (have fig1a, fig1b, fig1c)"))?;
                ExperimentConfig::from_json(text)?
            }
            (None, None) => bail!("either --config or --preset is required"),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }
}

fn join(v: &[usize]) -> String {
    v.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(",")
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Sample { exp, method, budget, pgd } => {
            let mut cfg = exp.load()?;
            if pgd && !matches!(cfg.solver, SolverSpec::Pgd(_)) {
                cfg.solver = SolverSpec::Pgd(PgdConfig::default());
            }
            let e = Experiment::build(cfg)?;
            let q = match (budget.q, budget.q_pct) {
                (Some(q), _) => q,
                (None, Some(p)) => e.q_count(p),
                (None, None) => unreachable!("clap enforces one budget flag"),
            };
            if q > e.dim() {
                bail!("budget {q} exceeds the {} available nodes", e.dim());
            }
            let set = select_sets(&e.instance, method, &e.band, &e.config.solver, &[q])?
                .pop()
                .expect("one budget requested")?;
            let objective = Objective::new(&e.instance, method, method.needs_band().then(|| e.band.clone()))?;
            let cost = objective.selection_cost(&indicator(e.dim(), &set)?)?;
            let labels: Vec<usize> = set.iter().map(|&i| e.node_label(i)).collect();
            println!("{}", join(&labels));
            eprintln!("{method} cost {cost:e} with {q} of {} nodes", e.dim());
        }
        Command::Estimate { exp, y, set } => {
            let e = Experiment::build(exp.load()?)?;
            let idx = set.iter().map(|&l| e.node_index(l)).collect::<gsample::Result<Vec<_>>>()?;
            let y = read_vector(&y)?;
            let n_graph = e.graph.n_nodes();
            // accept measurements indexed by graph node and drop the pinned one
            let y = if y.len() == n_graph && n_graph != e.dim() {
                DVector::from_iterator(e.dim(), (0..e.dim()).map(|i| y[e.node_label(i)]))
            } else {
                y
            };
            let state = EstimatorState::new(&e.instance, &indicator(e.dim(), &idx)?)?;
            if state.is_singular() {
                log::warn!("K(d) is singular; returning the minimum-norm estimate");
            }
            for v in state.estimate(&y)?.iter() {
                println!("{v:e}");
            }
        }
        Command::Evaluate { exp, out, trials, methods, q_pct } => {
            let mut cfg = exp.load()?;
            if let Some(t) = trials {
                cfg.trials = t;
            }
            if let Some(m) = methods {
                cfg.methods = m;
            }
            if let Some(q) = q_pct {
                cfg.q_pct = q;
            }
            let e = Experiment::build(cfg)?;
            let cells = evaluate(&e)?;
            let records: Vec<_> = cells.iter().map(|c| c.record.clone()).collect();
            emit_results(&records, &out).with_context(|| format!("writing {}", out.display()))?;
            for c in &cells {
                let r = &c.record;
                eprintln!(
                    "{:<24} {:>5}%  mse {:.4e} ± {:.1e}  cost {:.4e}",
                    r.method, r.q_pct, r.mse, c.std_err, r.cost
                );
            }
            if !cells.is_empty() && cells.iter().all(|c| c.record.is_infeasible()) {
                eprintln!("every cell was infeasible");
                return Ok(ExitCode::from(2));
            }
        }
        Command::Gradcheck { n, points, step, tol, seed } => {
            let reports = gradcheck(n, points, step, seed)?;
            let mut ok = true;
            for r in &reports {
                println!(
                    "{:<8} max relative error {:.3e} over {} points{}",
                    r.kind.name(),
                    r.max_rel_error,
                    r.points,
                    if r.subgradient_points > 0 {
                        format!(" ({} subgradient)", r.subgradient_points)
                    } else {
                        String::new()
                    }
                );
                ok &= r.max_rel_error <= tol;
            }
            if !ok {
                eprintln!("gradient error above {tol:e}");
                return Ok(ExitCode::from(1));
            }
        }
        Command::Props { seed } => {
            let mut ok = true;
            for c in run_property_suite(seed)? {
                let status = match (c.passed, c.advisory) {
                    (true, _) => "ok",
                    (false, true) => "violated (advisory)",
                    (false, false) => "FAILED",
                };
                println!(
                    "{:<34} {:>4} cases  worst {:>11.3e}  tol {:.0e}  {status}",
                    c.name, c.cases, c.worst, c.tolerance
                );
                ok &= c.passed || c.advisory;
            }
            if !ok {
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            match e.downcast_ref::<gsample::Error>() {
                Some(g) if g.is_infeasible() => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
