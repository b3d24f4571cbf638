#![allow(dead_code)]

use gsample::harness::generate_er_graph;
use gsample::spectral::decompose_graph;
use gsample::{FilterSpec, Graph, Instance};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn er(n: usize, p: f64, seed: u64) -> Graph {
    generate_er_graph(n, p, 1.0, 0.25, &mut rng(seed)).unwrap()
}

pub fn path3() -> Graph {
    Graph::from_triples(3, &[(0, 1, 1.0), (1, 2, 1.0)]).unwrap()
}

pub fn instance(g: &Graph, h_m: FilterSpec, h_r: FilterSpec, sigma2: f64, mu: f64) -> Instance {
    Instance::isotropic(decompose_graph(g), h_m, h_r, sigma2, mu).unwrap()
}

/// Random instance with a positive definite regularizer and diagonal,
/// heterogeneous noise.
pub fn random_instance(n: usize, seed: u64) -> Instance {
    let g = er(n, 0.4, seed);
    let mut r = rng(seed ^ 0xabcdef);
    let noise = DMatrix::from_diagonal(&DVector::from_fn(n, |_, _| r.random_range(0.005..0.02)));
    let x0 = gaussian(n, &mut r);
    Instance::new(
        decompose_graph(&g),
        FilterSpec::Diffusion { tau: 0.3 },
        FilterSpec::power(FilterSpec::Tikhonov { alpha: 0.5 }, -1),
        noise,
        0.1,
        x0,
    )
    .unwrap()
}

pub fn gaussian<R: Rng>(n: usize, r: &mut R) -> DVector<f64> {
    DVector::from_fn(n, |_, _| r.sample(StandardNormal))
}

pub fn indicator(n: usize, set: &[usize]) -> DVector<f64> {
    let mut d = DVector::zeros(n);
    for &i in set {
        d[i] = 1.0;
    }
    d
}

/// Random subset of `0..n` of the given size, ascending.
pub fn subset<R: Rng>(n: usize, size: usize, r: &mut R) -> Vec<usize> {
    let mut s = rand::seq::index::sample(r, n, size).into_vec();
    s.sort_unstable();
    s
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

/// `K = h_M D R⁻¹ D h_M + μ h_R` assembled from the instance matrices.
pub fn k_direct(inst: &Instance, d: &DVector<f64>) -> DMatrix<f64> {
    let dm = DMatrix::from_diagonal(d);
    inst.h_m() * &dm * inst.noise_cov().clone().try_inverse().unwrap() * &dm * inst.h_m() + inst.h_r() * inst.mu()
}

/// Plain Gauss–Jordan inverse, independent of the library's factorizations.
pub fn gauss_jordan_inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let mut a = m.clone();
    let mut inv = DMatrix::identity(n, n);
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[(i, c)].abs().partial_cmp(&a[(j, c)].abs()).unwrap()).unwrap();
        a.swap_rows(c, p);
        inv.swap_rows(c, p);
        let piv = a[(c, c)];
        assert!(piv.abs() > 1e-300, "singular matrix");
        for j in 0..n {
            a[(c, j)] /= piv;
            inv[(c, j)] /= piv;
        }
        for r in 0..n {
            if r != c {
                let f = a[(r, c)];
                if f != 0.0 {
                    for j in 0..n {
                        a[(r, j)] -= f * a[(c, j)];
                        inv[(r, j)] -= f * inv[(c, j)];
                    }
                }
            }
        }
    }
    inv
}

/// Largest eigenvalue of a symmetric PSD matrix by power iteration.
pub fn power_iteration(m: &DMatrix<f64>, iters: usize) -> f64 {
    let n = m.nrows();
    let mut v = DVector::from_fn(n, |i, _| 1.0 + 0.01 * i as f64);
    v.normalize_mut();
    let mut lam = 0.0;
    for _ in 0..iters {
        let w = m * &v;
        let next = w.norm();
        v = w / next;
        let done = (next - lam).abs() <= 1e-15 * next;
        lam = next;
        if done {
            break;
        }
    }
    v.dot(&(m * &v))
}

/// All `size`-subsets of `0..n` in lexicographic order.
pub fn combinations(n: usize, size: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, size: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == size {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, size, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, size, &mut Vec::new(), &mut out);
    out
}
