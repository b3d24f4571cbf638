//! Numerical audits behind the `gradcheck` and `props` commands: gradients
//! against finite differences, and the structural properties of the costs
//! (additivity, monotonicity, submodularity, convexity, large-μ limits).

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::costs::{a_design_cost, bcrb, bmse, design_gram, gradient, state_cost, wc_bmse, wc_mse, CostKind};
use crate::error::Result;
use crate::estimator::{asymptotic_pinv_limit, EstimatorState};
use crate::filter::FilterSpec;
use crate::graph::WeightedGraph;
use crate::linalg::sym_eigen;
use crate::model::{indicator, BandlimitedSpec, ProblemInstance};
use crate::spectral::decompose_graph;

use super::generate_er_graph;

fn audit_graph(n: usize, rng: &mut ChaCha8Rng) -> Result<WeightedGraph<f64>> {
    generate_er_graph(n, 0.4, 1.0, 0.25, rng)
}

/// Random instance with a non-trivial measurement filter, heteroscedastic
/// diagonal noise and a positive-definite regularizer.
pub fn audit_instance(n: usize, seed: u64) -> Result<ProblemInstance<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = audit_graph(n, &mut rng)?;
    let noise = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| rng.random_range(0.005..0.02)));
    let x0 = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    ProblemInstance::new(
        decompose_graph(&g),
        FilterSpec::Diffusion { tau: 0.3 },
        FilterSpec::power(FilterSpec::Tikhonov { alpha: 0.5 }, -1),
        noise,
        0.1,
        x0,
    )
}

/// `‖g − g_fd‖∞ / ‖g_fd‖∞`.
pub fn relative_gradient_error(analytic: &DVector<f64>, fd: &DVector<f64>) -> f64 {
    (analytic - fd).amax() / fd.amax().max(f64::MIN_POSITIVE)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradcheckReport {
    pub kind: CostKind,
    pub points: usize,
    pub max_rel_error: f64,
    /// Points where an extreme eigenvalue was degenerate.
    pub subgradient_points: usize,
}

/// Compare analytic gradients of the four proposed costs with central
/// differences at `points` random interior sampling vectors.
pub fn gradcheck(n: usize, points: usize, step: f64, seed: u64) -> Result<Vec<GradcheckReport>> {
    let inst = audit_instance(n, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
    let ds: Vec<DVector<f64>> = (0..points).map(|_| DVector::from_fn(n, |_, _| rng.random_range(0.05..0.95))).collect();
    let cost =
        |kind: CostKind, d: &DVector<f64>| -> Result<f64> { Ok(state_cost(kind, &EstimatorState::new(&inst, d)?)) };
    CostKind::PROPOSED
        .iter()
        .map(|&kind| {
            let mut worst = 0.0f64;
            let mut sub = 0;
            for d in &ds {
                let g = gradient(kind, &EstimatorState::new(&inst, d)?)?;
                sub += usize::from(g.subgradient);
                let mut fd = DVector::zeros(n);
                for i in 0..n {
                    let (mut up, mut down) = (d.clone(), d.clone());
                    up[i] += step;
                    down[i] -= step;
                    fd[i] = (cost(kind, &up)? - cost(kind, &down)?) / (2.0 * step);
                }
                worst = worst.max(relative_gradient_error(&g.values, &fd));
            }
            Ok(GradcheckReport { kind, points, max_rel_error: worst, subgradient_points: sub })
        })
        .collect()
}

/// Outcome of one property: the worst value of its violation measure over
/// all cases, against the tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyCheck {
    pub name: &'static str,
    pub cases: usize,
    pub worst: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Reported but not expected to hold on every instance.
    pub advisory: bool,
}

impl PropertyCheck {
    fn new(name: &'static str, cases: usize, worst: f64, tolerance: f64) -> Self {
        PropertyCheck { name, cases, worst, tolerance, passed: worst <= tolerance, advisory: false }
    }

    fn advisory(mut self) -> Self {
        self.advisory = true;
        self
    }
}

fn random_subset(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    sample(rng, n, k).into_vec()
}

fn bmse_of(inst: &ProblemInstance<f64>, set: &[usize]) -> Result<f64> {
    Ok(bmse(&EstimatorState::new(inst, &indicator(inst.dim(), set)?)?))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn additivity(inst: &ProblemInstance<f64>, rng: &mut ChaCha8Rng, cases: usize) -> Result<PropertyCheck> {
    let n = inst.dim();
    let rows = inst.measurement_rows();
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let k = rng.random_range(0..n);
        let mut set = random_subset(rng, n, k + 1);
        let a = set.pop().expect("non-empty");
        let before = EstimatorState::new(inst, &indicator(n, &set)?)?;
        set.push(a);
        let after = EstimatorState::new(inst, &indicator(n, &set)?)?;
        let r = rows.column(a);
        let gap = (after.k() - before.k() - r * r.transpose()).norm();
        worst = worst.max(gap / after.k().norm());
    }
    Ok(PropertyCheck::new("additivity", cases, worst, 1e-10))
}

fn monotone_and_submodular(
    inst: &ProblemInstance<f64>,
    rng: &mut ChaCha8Rng,
    cases: usize,
) -> Result<[PropertyCheck; 2]> {
    let n = inst.dim();
    let (mut mono, mut sub) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for _ in 0..cases {
        // a, then B, then A ⊆ B, all disjoint from a
        let kb = rng.random_range(0..n);
        let mut perm = random_subset(rng, n, kb + 1);
        let a = perm.pop().expect("non-empty");
        let b_set = perm;
        let ka = rng.random_range(0..=b_set.len());
        let a_set: Vec<usize> = b_set[..ka].to_vec();
        let gain = |s: &[usize]| -> Result<f64> {
            let mut with = s.to_vec();
            with.push(a);
            Ok(bmse_of(inst, s)? - bmse_of(inst, &with)?)
        };
        let (ga, gb) = (gain(&a_set)?, gain(&b_set)?);
        mono = mono.max(-ga).max(-gb);
        sub = sub.max(gb - ga);
    }
    Ok([
        PropertyCheck::new("bmse_monotone", cases, mono, 1e-9),
        // diminishing returns of tr(K⁻¹) fails on some instances with a
        // non-scalar h_R, so this one is informational
        PropertyCheck::new("bmse_submodular", cases, sub, 1e-9).advisory(),
    ])
}

fn convexity(inst: &ProblemInstance<f64>, rng: &mut ChaCha8Rng, cases: usize) -> Result<[PropertyCheck; 2]> {
    let n = inst.dim();
    let mut worst = [f64::NEG_INFINITY; 2];
    let f = |w: &DVector<f64>| -> Result<[f64; 2]> {
        let s = EstimatorState::new(inst, &w.map(f64::sqrt))?;
        Ok([bmse(&s), wc_bmse(&s)])
    };
    for _ in 0..cases {
        let w1 = DVector::from_fn(n, |_, _| rng.random_range(0.0..1.0));
        let w2 = DVector::from_fn(n, |_, _| rng.random_range(0.0..1.0));
        let (f1, f2, fm) = (f(&w1)?, f(&w2)?, f(&((&w1 + &w2) / 2.0))?);
        for j in 0..2 {
            let excess = fm[j] - (f1[j] + f2[j]) / 2.0;
            worst[j] = worst[j].max(excess / f1[j].max(f2[j]));
        }
    }
    Ok([
        PropertyCheck::new("bmse_midpoint_convex", cases, worst[0], 1e-10),
        PropertyCheck::new("wc_bmse_midpoint_convex", cases, worst[1], 1e-10),
    ])
}

fn ordering(inst: &ProblemInstance<f64>, rng: &mut ChaCha8Rng, cases: usize) -> Result<PropertyCheck> {
    let n = inst.dim();
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..cases {
        let d = DVector::from_fn(n, |_, _| rng.random_range(0.0..1.0));
        let s = EstimatorState::new(inst, &d)?;
        worst = worst.max((wc_bmse(&s) - bmse(&s)) / bmse(&s));
        worst = worst.max((bcrb(&s) - wc_mse(&s)) / wc_mse(&s));
    }
    Ok(PropertyCheck::new("cost_ordering", cases, worst, 1e-12))
}

fn asymptotic_degeneracy(inst: &ProblemInstance<f64>, rng: &mut ChaCha8Rng, cases: usize) -> Result<PropertyCheck> {
    let n = inst.dim();
    let big = inst.with_mu(1e8)?;
    let empty = EstimatorState::new(&big, &DVector::zeros(n))?;
    let prior_scale = bmse(&empty);
    let sets: Vec<Vec<usize>> = (0..cases).map(|_| random_subset(rng, n, n / 2)).collect();
    let mut worst = 0.0f64;
    for kind in CostKind::PROPOSED {
        let scale = match state_cost(kind, &empty) {
            v if v > 0.0 => v,
            _ => prior_scale,
        };
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in &sets {
            let v = state_cost(kind, &EstimatorState::new(&big, &indicator(n, s)?)?);
            lo = lo.min(v);
            hi = hi.max(v);
        }
        worst = worst.max((hi - lo) / scale);
    }
    Ok(PropertyCheck::new("large_mu_degeneracy", cases, worst, 1e-3))
}

/// Strictly-bandlimited instance: `h_M = I`, `h_R` = projector off the
/// lower half of the spectrum, `x₀ = 0`, `μ = 10⁸`.
fn bandlimited_instance(n: usize, rng: &mut ChaCha8Rng) -> Result<(ProblemInstance<f64>, BandlimitedSpec)> {
    let g = audit_graph(n, rng)?;
    let band = BandlimitedSpec::low_half(n)?;
    let inst =
        ProblemInstance::isotropic(decompose_graph(&g), FilterSpec::Identity, band.complement_projector(n), 0.01, 1e8)?;
    Ok((inst, band))
}

fn large_mu_limits(rng: &mut ChaCha8Rng, cases: usize) -> Result<[PropertyCheck; 5]> {
    let n = 16;
    let (inst, band) = bandlimited_instance(n, rng)?;
    let v = inst.decomp().eigenvectors().clone();
    let on_band = |i: usize| band.indices().contains(&i);
    let mut w = [0.0f64; 5];
    for _ in 0..cases {
        let set = random_subset(rng, n, 10);
        let d = indicator(n, &set)?;
        let s = EstimatorState::new(&inst, &d)?;
        let spectral = v.transpose() * s.k_pinv() * &v;
        let limit = asymptotic_pinv_limit(&inst, &band, &d)?;
        let mut num = 0.0f64;
        let mut den = 0.0f64;
        let mut off = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if on_band(i) && on_band(j) {
                    num += (spectral[(i, j)] - limit[(i, j)]).powi(2);
                    den += limit[(i, j)].powi(2);
                } else {
                    off = off.max(spectral[(i, j)].abs());
                }
            }
        }
        w[0] = w[0].max((num / den).sqrt());
        w[1] = w[1].max(off);
        let a_cost = a_design_cost(&inst, &band, &d)?;
        w[2] = w[2].max(rel(bcrb(&s), a_cost));
        w[3] = w[3].max(rel(bmse(&s), a_cost));
        let lmin = sym_eigen(&design_gram(&inst, &band, &d)?).values[0];
        w[4] = w[4].max(rel(wc_bmse(&s), 1.0 / lmin));
    }
    Ok([
        PropertyCheck::new("k_limit_band_block", cases, w[0], 1e-3),
        PropertyCheck::new("k_limit_off_block", cases, w[1], 1e-6),
        PropertyCheck::new("bandlimited_bcrb_is_a_design", cases, w[2], 1e-4),
        PropertyCheck::new("bandlimited_bmse_is_a_design", cases, w[3], 1e-4),
        PropertyCheck::new("bandlimited_wc_bmse_is_e_design", cases, w[4], 1e-4),
    ])
}

/// Run every structural property on seeded random instances.
pub fn run_property_suite(seed: u64) -> Result<Vec<PropertyCheck>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inst = audit_instance(10, seed)?;
    let mut out = vec![additivity(&inst, &mut rng, 200)?];
    out.extend(monotone_and_submodular(&inst, &mut rng, 200)?);
    out.extend(convexity(&inst, &mut rng, 200)?);
    out.push(ordering(&inst, &mut rng, 200)?);
    out.push(asymptotic_degeneracy(&inst, &mut rng, 50)?);
    out.extend(large_mu_limits(&mut rng, 20)?);
    Ok(out)
}
