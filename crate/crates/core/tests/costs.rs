mod common;

use common::{
    combinations, er, gauss_jordan_inverse, gaussian, indicator, instance, k_direct, power_iteration, random_instance,
    rel, rng, subset,
};
use gsample::costs::{
    a_design_cost, bcrb, bmse, design_gram, e_design_cost, gradient, lr_design_cost, wc_bmse, wc_mse, CostKind,
    Objective,
};
use gsample::estimator::EstimatorState;
use gsample::model::{sample_measurement, sample_prior, BandlimitedSpec, SamplingVector};
use gsample::{Error, FilterSpec, Instance};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

fn state<'a>(inst: &'a Instance, d: &DVector<f64>) -> EstimatorState<'a, f64> {
    EstimatorState::new(inst, d).unwrap()
}

fn trace(m: &DMatrix<f64>) -> f64 {
    m.diagonal().sum()
}

#[test]
fn bcrb_examples() {
    let inst = random_instance(6, 1);
    assert_eq!(bcrb(&state(&inst, &DVector::zeros(6))), 0.0);
    let d = indicator(6, &[0, 2, 3]);
    let s = state(&inst, &d);
    assert!(rel(bcrb(&s), s.analytic_mse(inst.x0()).unwrap()) < 1e-10);
    // tr(K⁻¹ K_M K⁻¹) from independently assembled matrices
    let k_inv = gauss_jordan_inverse(&k_direct(&inst, &d));
    let k_m = k_direct(&inst, &d) - inst.h_r() * inst.mu();
    assert!(rel(bcrb(&s), trace(&(&k_inv * k_m * &k_inv))) < 1e-10);
}

#[test]
fn extreme_case_values() {
    let sigma2 = 0.02;
    let inst = instance(&er(9, 0.5, 2), FilterSpec::Identity, FilterSpec::LaplacianPower { k: 1 }, sigma2, 0.0);
    let s = state(&inst, &DVector::from_element(9, 1.0));
    let n_sigma2 = 9.0 * sigma2;
    assert!(rel(bcrb(&s), n_sigma2) < 1e-12);
    assert!(rel(wc_mse(&s), n_sigma2) < 1e-12);
    assert!(rel(bmse(&s), n_sigma2) < 1e-12);
    // spectral-norm cost picks out the largest eigenvalue of K⁻¹ = σ²I
    assert!(rel(wc_bmse(&s), sigma2) < 1e-12);
}

#[test]
fn wc_mse_examples() {
    let inst = instance(&er(7, 0.5, 3), FilterSpec::Identity, FilterSpec::Tikhonov { alpha: 0.5 }, 0.01, 0.3);
    assert!(rel(wc_mse(&state(&inst, &DVector::zeros(7))), 1.0) < 1e-10);
    let inst0 = instance(&er(7, 0.5, 3), FilterSpec::Diffusion { tau: 0.2 }, FilterSpec::Identity, 0.01, 0.0);
    let s = state(&inst0, &DVector::from_element(7, 1.0));
    assert_eq!(wc_mse(&s), bcrb(&s));
}

#[test]
fn wc_mse_dominates_sampled_unit_sphere() {
    for seed in 0..3 {
        let inst = random_instance(6, seed + 10);
        let mut r = rng(seed);
        let s = state(&inst, &indicator(6, &subset(6, 3, &mut r)));
        let worst = wc_mse(&s);
        let mut best = 0.0f64;
        for _ in 0..10_000 {
            let mut u = gaussian(6, &mut r);
            u.normalize_mut();
            best = best.max(s.analytic_mse(&(inst.x0() + u)).unwrap());
        }
        assert!(best <= worst * (1.0 + 1e-12), "sample {best} above bound {worst}");
        assert!(best >= 0.98 * worst, "gap {} too large", 1.0 - best / worst);
    }
}

#[test]
fn bmse_examples() {
    let inst = instance(&common::path3(), FilterSpec::Identity, FilterSpec::Identity, 0.01, 0.1);
    assert!(rel(bmse(&state(&inst, &DVector::zeros(3))), 30.0) < 1e-12);
    for seed in 0..5 {
        let inst = random_instance(10, seed);
        let mut r = rng(seed);
        let d = DVector::from_fn(10, |_, _| r.random_range(0.0..1.0));
        let s = state(&inst, &d);
        let k_inv = gauss_jordan_inverse(&k_direct(&inst, &d));
        let k_m = k_direct(&inst, &d) - inst.h_r() * inst.mu();
        let split = trace(&(&k_inv * &k_m * &k_inv)) + inst.mu() * trace(&(&k_inv * &k_inv * inst.h_r()));
        assert!(rel(bmse(&s), split) < 1e-10);
        assert!(rel(bmse(&s), trace(&k_inv)) < 1e-10);
    }
}

#[test]
fn bmse_matches_prior_averaged_monte_carlo() {
    let inst = random_instance(10, 20);
    let set = [1usize, 3, 4, 7, 8];
    let sv = SamplingVector::from_set(10, &set).unwrap();
    let s = state(&inst, &indicator(10, &set));
    let mut r = rng(20);
    let draws = 2000;
    let total: f64 = (0..draws)
        .map(|_| {
            let x = sample_prior(&inst, &mut r).unwrap();
            let y = sample_measurement(&inst, &x, &sv, &mut r).unwrap();
            (s.estimate(&y).unwrap() - x).norm_squared()
        })
        .sum();
    assert!(rel(total / draws as f64, bmse(&s)) < 0.05);
}

#[test]
fn wc_bmse_examples() {
    let inst = instance(&common::path3(), FilterSpec::Identity, FilterSpec::Identity, 0.01, 0.1);
    assert!(rel(wc_bmse(&state(&inst, &DVector::zeros(3))), 10.0) < 1e-12);
    for seed in 0..5 {
        let inst = random_instance(12, seed + 30);
        let mut r = rng(seed);
        let d = indicator(12, &subset(12, 5, &mut r));
        let s = state(&inst, &d);
        let oracle = power_iteration(&gauss_jordan_inverse(&k_direct(&inst, &d)), 100_000);
        assert!(rel(wc_bmse(&s), oracle) < 1e-8, "{} vs {oracle}", wc_bmse(&s));
        assert!(wc_bmse(&s) <= bmse(&s));
    }
}

#[test]
fn design_cost_examples() {
    let inst = instance(&er(10, 0.5, 4), FilterSpec::Identity, FilterSpec::Identity, 1.0, 0.1);
    let ones = DVector::from_element(10, 1.0);
    for band in [vec![0, 1, 2], vec![0, 4, 7, 9], (0..10).collect()] {
        let b = BandlimitedSpec::new(band.clone(), 10).unwrap();
        assert!(rel(a_design_cost(&inst, &b, &ones).unwrap(), band.len() as f64) < 1e-10);
        let gram = design_gram(&inst, &b, &ones).unwrap();
        assert!((gram - DMatrix::identity(band.len(), band.len())).amax() < 1e-10);
        assert!(rel(e_design_cost(&inst, &b, &ones).unwrap(), -1.0) < 1e-10);
    }
    let b = BandlimitedSpec::low_half(10).unwrap();
    let few = indicator(10, &[0, 1, 2]);
    assert!(matches!(a_design_cost(&inst, &b, &few), Err(Error::Observability(_))));
    assert_eq!(e_design_cost(&inst, &b, &few).unwrap(), 0.0);
}

#[test]
fn design_gram_weights_by_noise() {
    let g = er(8, 0.5, 5);
    let mut r = rng(5);
    let diag = DVector::from_fn(8, |_, _| r.random_range(0.1..2.0));
    let inst = Instance::new(
        gsample::spectral::decompose_graph(&g),
        FilterSpec::Identity,
        FilterSpec::Identity,
        DMatrix::from_diagonal(&diag),
        0.1,
        DVector::zeros(8),
    )
    .unwrap();
    let b = BandlimitedSpec::new(vec![0, 1, 2], 8).unwrap();
    let set = [0usize, 3, 4, 6];
    let v = inst.decomp().basis(b.indices()).select_rows(&set);
    let r_ss = DMatrix::from_diagonal(&DVector::from_fn(4, |i, _| 1.0 / diag[set[i]]));
    let want = v.transpose() * r_ss * &v;
    let got = design_gram(&inst, &b, &indicator(8, &set)).unwrap();
    assert!((got - &want).amax() < 1e-12);
    assert!(rel(a_design_cost(&inst, &b, &indicator(8, &set)).unwrap(), trace(&gauss_jordan_inverse(&want))) < 1e-10);
}

#[test]
fn lr_design_examples() {
    let g = er(8, 0.5, 6);
    let inst = instance(&g, FilterSpec::Identity, FilterSpec::Identity, 0.01, 0.0);
    assert!(rel(lr_design_cost(&inst, &DVector::from_element(8, 1.0)).unwrap(), -1.0) < 1e-12);
    let inst = instance(&g, FilterSpec::Identity, FilterSpec::Identity, 0.01, 0.5);
    assert!(lr_design_cost(&inst, &DVector::zeros(8)).unwrap().abs() < 1e-10);
}

#[test]
fn lr_design_agrees_with_laplacian_regularized_spectral_cost() {
    for seed in 0..3 {
        let g = er(8, 0.5, seed + 40);
        let mu = 0.1;
        let lr = instance(&g, FilterSpec::Identity, FilterSpec::Identity, 0.01, mu);
        let special = instance(&g, FilterSpec::Identity, FilterSpec::LaplacianPower { k: 1 }, 1.0, mu);
        let argmin = |f: &dyn Fn(&DVector<f64>) -> f64| {
            combinations(8, 3)
                .into_iter()
                .map(|s| (f(&indicator(8, &s)), s))
                .min_by(|a, b| a.0.partial_cmp(&b.0).unwrap())
                .unwrap()
                .1
        };
        let a = argmin(&|d| lr_design_cost(&lr, d).unwrap());
        let b = argmin(&|d| wc_bmse(&state(&special, d)));
        assert_eq!(a, b);
        // the two values are related by −1/x
        let d = indicator(8, &a);
        assert!(rel(lr_design_cost(&lr, &d).unwrap(), -1.0 / wc_bmse(&state(&special, &d))) < 1e-10);
    }
}

fn central_difference(inst: &Instance, kind: CostKind, d: &DVector<f64>, h: f64) -> DVector<f64> {
    let obj = Objective::new(inst, kind, None).unwrap();
    DVector::from_fn(d.len(), |i, _| {
        let mut up = d.clone();
        up[i] += h;
        let mut down = d.clone();
        down[i] -= h;
        (obj.evaluate(&up).unwrap() - obj.evaluate(&down).unwrap()) / (2.0 * h)
    })
}

#[test]
fn gradients_match_finite_differences() {
    for kind in CostKind::PROPOSED {
        let mut worst = 0.0f64;
        for p in 0..10 {
            let inst = random_instance(12, 50 + p);
            let mut r = rng(p);
            let d = DVector::from_fn(12, |_, _| r.random_range(0.05..0.95));
            let g = gradient(kind, &state(&inst, &d)).unwrap();
            let fd = central_difference(&inst, kind, &d, 1e-5);
            worst = worst.max((&g.values - &fd).amax() / fd.amax());
        }
        assert!(worst <= 1e-4, "{kind}: {worst:e}");
    }
}

#[test]
fn gradient_vanishes_off_support() {
    let inst =
        instance(&er(10, 0.5, 7), FilterSpec::Diffusion { tau: 0.3 }, FilterSpec::Tikhonov { alpha: 0.5 }, 0.01, 0.1);
    let mut d = DVector::from_element(10, 0.5);
    d[2] = 0.0;
    d[7] = 0.0;
    for kind in CostKind::PROPOSED {
        let g = gradient(kind, &state(&inst, &d)).unwrap().values;
        assert_eq!(g[2], 0.0, "{kind}");
        assert_eq!(g[7], 0.0, "{kind}");
        assert!(g[0] != 0.0);
    }
}

#[test]
fn bmse_gradient_at_full_sampling() {
    let inst = instance(&er(6, 0.6, 8), FilterSpec::Identity, FilterSpec::LaplacianPower { k: 1 }, 1.0, 0.0);
    let g = gradient(CostKind::Bmse, &state(&inst, &DVector::from_element(6, 1.0))).unwrap();
    assert!(g.values.iter().all(|&v| (v + 2.0).abs() < 1e-12));
}

#[test]
fn gradient_requires_invertible_k() {
    let inst = instance(&er(6, 0.6, 9), FilterSpec::Identity, FilterSpec::LaplacianPower { k: 1 }, 0.01, 0.1);
    assert!(matches!(gradient(CostKind::Bmse, &state(&inst, &DVector::zeros(6))), Err(Error::Rank(_))));
    assert!(gradient(CostKind::ADesign, &state(&inst, &DVector::from_element(6, 1.0))).is_err());
}

#[test]
fn degenerate_extreme_eigenvalue_is_flagged() {
    let inst = instance(&er(5, 0.8, 10), FilterSpec::Identity, FilterSpec::Identity, 1.0, 0.5);
    let g = gradient(CostKind::WcBmse, &state(&inst, &DVector::from_element(5, 0.3))).unwrap();
    assert!(g.subgradient);
}

#[test]
fn large_mu_costs_depend_only_on_the_prior() {
    let inst = random_instance(10, 60).with_mu(1e8).unwrap();
    let mut r = rng(60);
    for kind in CostKind::PROPOSED {
        let obj = Objective::new(&inst, kind, None).unwrap();
        let vals: Vec<f64> = (0..50).map(|_| obj.evaluate(&indicator(10, &subset(10, 4, &mut r))).unwrap()).collect();
        let (lo, hi) = vals.iter().fold((f64::MAX, f64::MIN), |(a, b), &v| (a.min(v), b.max(v)));
        // every cost tends to its value with no samples; bCRB tends to 0, so
        // its spread is judged on the scale of the prior-only BMSE instead
        let empty = obj.evaluate(&DVector::zeros(10)).unwrap();
        let scale = if empty > 0.0 { empty } else { bmse(&state(&inst, &DVector::zeros(10))) };
        assert!((hi - lo) <= 1e-3 * scale, "{kind}: spread {}", hi - lo);
        assert!((hi - empty).abs() <= 1e-3 * scale, "{kind}: {hi} vs prior-only {empty}");
    }
}

fn instance_and_sets() -> impl Strategy<Value = (u64, Vec<usize>, usize)> {
    (any::<u64>(), prop::collection::vec(any::<bool>(), 10), 0usize..10).prop_map(|(seed, mask, a)| {
        let set: Vec<usize> = (0..10).filter(|&i| mask[i] && i != a).collect();
        (seed, set, a)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn bmse_never_increases_when_a_node_is_added((seed, set, a) in instance_and_sets()) {
        let inst = random_instance(10, seed % 20);
        let before = bmse(&state(&inst, &indicator(10, &set)));
        let mut bigger = set.clone();
        bigger.push(a);
        let after = bmse(&state(&inst, &indicator(10, &bigger)));
        prop_assert!(after <= before + 1e-9);
    }

    #[test]
    fn cost_ordering((seed, set, _a) in instance_and_sets()) {
        let inst = random_instance(10, seed % 20);
        let s = state(&inst, &indicator(10, &set));
        prop_assert!(wc_bmse(&s) <= bmse(&s) * (1.0 + 1e-12));
        prop_assert!(bcrb(&s) <= wc_mse(&s) * (1.0 + 1e-12));
        prop_assert!(bcrb(&s) <= bmse(&s) * (1.0 + 1e-12));
    }

    #[test]
    fn midpoint_convexity_in_squared_weights(seed in 0u64..20, w1 in prop::collection::vec(0.0f64..1.0, 10), w2 in prop::collection::vec(0.0f64..1.0, 10)) {
        let inst = random_instance(10, seed);
        let w1 = DVector::from_vec(w1);
        let w2 = DVector::from_vec(w2);
        let mid = (&w1 + &w2) / 2.0;
        for f in [bmse::<f64> as fn(&EstimatorState<'_, f64>) -> f64, wc_bmse::<f64>] {
            let at = |w: &DVector<f64>| f(&state(&inst, &w.map(f64::sqrt)));
            let (a, b, m) = (at(&w1), at(&w2), at(&mid));
            prop_assert!(m <= (a + b) / 2.0 + 1e-10 * (a + b));
        }
    }
}
