//! Dense reference computations for the acceptance suite. Everything is
//! rebuilt from the edge list with plain nalgebra (explicit inverses, a fresh
//! eigendecomposition) so that agreement with the library is not circular.

use gsample::Graph;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn laplacian(g: &Graph) -> DMatrix<f64> {
    let mut l = DMatrix::zeros(g.n_nodes(), g.n_nodes());
    for e in g.edges() {
        l[(e.a, e.b)] -= e.weight;
        l[(e.b, e.a)] -= e.weight;
        l[(e.a, e.a)] += e.weight;
        l[(e.b, e.b)] += e.weight;
    }
    l
}

/// Eigenpairs sorted by ascending eigenvalue.
pub fn eigh(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let e = SymmetricEigen::new(m.clone());
    let mut order: Vec<usize> = (0..m.nrows()).collect();
    order.sort_by(|&a, &b| e.eigenvalues[a].total_cmp(&e.eigenvalues[b]));
    let vals = DVector::from_iterator(order.len(), order.iter().map(|&i| e.eigenvalues[i]));
    let vecs = DMatrix::from_columns(&order.iter().map(|&i| e.eigenvectors.column(i)).collect::<Vec<_>>());
    (vals, vecs)
}

pub fn lambda_min(m: &DMatrix<f64>) -> f64 {
    eigh(m).0[0]
}

pub fn lambda_max(m: &DMatrix<f64>) -> f64 {
    let (v, _) = eigh(m);
    v[v.len() - 1]
}

pub fn trace(m: &DMatrix<f64>) -> f64 {
    m.diagonal().sum()
}

pub fn inverse(m: &DMatrix<f64>) -> DMatrix<f64> {
    m.clone().try_inverse().expect("reference matrix is invertible")
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

pub fn indicator(n: usize, set: &[usize]) -> DVector<f64> {
    let mut d = DVector::zeros(n);
    for &i in set {
        d[i] = 1.0;
    }
    d
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            cur.push(i);
            go(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Central differences of `f` at `d` with step `h`.
pub fn central_difference(f: impl Fn(&DVector<f64>) -> f64, d: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(d.len(), |i, _| {
        let (mut up, mut dn) = (d.clone(), d.clone());
        up[i] += h;
        dn[i] -= h;
        (f(&up) - f(&dn)) / (2.0 * h)
    })
}

/// The estimation problem as dense matrices: filters are given as responses
/// on the ascending eigenvalues (index and value).
#[derive(Debug, Clone)]
pub struct Reference {
    pub lambda: DVector<f64>,
    pub v: DMatrix<f64>,
    pub h_m: DMatrix<f64>,
    pub h_r: DMatrix<f64>,
    h_r_response: DVector<f64>,
    pub noise: DMatrix<f64>,
    pub mu: f64,
    pub x0: DVector<f64>,
}

impl Reference {
    pub fn new(
        g: &Graph,
        h_m: impl Fn(usize, f64) -> f64,
        h_r: impl Fn(usize, f64) -> f64,
        noise: DMatrix<f64>,
        mu: f64,
        x0: DVector<f64>,
    ) -> Self {
        let (lambda, v) = eigh(&laplacian(g));
        let resp = |h: &dyn Fn(usize, f64) -> f64| DVector::from_fn(lambda.len(), |i, _| h(i, lambda[i]));
        let compose = |r: &DVector<f64>| &v * DMatrix::from_diagonal(r) * v.transpose();
        let (m, r) = (resp(&h_m), resp(&h_r));
        Reference { h_m: compose(&m), h_r: compose(&r), h_r_response: r, lambda, v, noise, mu, x0 }
    }

    pub fn dim(&self) -> usize {
        self.lambda.len()
    }

    /// `h_M D R⁻¹ D h_M`.
    pub fn k_m(&self, d: &DVector<f64>) -> DMatrix<f64> {
        let dm = DMatrix::from_diagonal(d);
        &self.h_m * &dm * inverse(&self.noise) * &dm * &self.h_m
    }

    pub fn k(&self, d: &DVector<f64>) -> DMatrix<f64> {
        self.k_m(d) + &self.h_r * self.mu
    }

    pub fn bmse(&self, d: &DVector<f64>) -> f64 {
        trace(&inverse(&self.k(d)))
    }

    pub fn bcrb(&self, d: &DVector<f64>) -> f64 {
        let ki = inverse(&self.k(d));
        trace(&(&ki * self.k_m(d) * &ki))
    }

    /// Variance plus the largest squared bias over unit deviations from `x₀`.
    pub fn wc_mse(&self, d: &DVector<f64>) -> f64 {
        let b = inverse(&self.k(d)) * &self.h_r * self.mu;
        self.bcrb(d) + lambda_max(&(b.transpose() * b))
    }

    pub fn wc_bmse(&self, d: &DVector<f64>) -> f64 {
        1.0 / lambda_min(&self.k(d))
    }

    /// Exact MSE at a fixed signal: squared bias plus variance trace.
    pub fn mse(&self, d: &DVector<f64>, x: &DVector<f64>) -> f64 {
        let k = self.k(d);
        let xhat_mean = inverse(&k) * (self.k_m(d) * x + &self.h_r * &self.x0 * self.mu);
        (xhat_mean - x).norm_squared() + self.bcrb(d)
    }

    /// `x₀ + (μ h_R)^{†½} ζ`.
    pub fn prior_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let scale = self.h_r_response.map(|h| if h.abs() > 1e-10 { (1.0 / (self.mu * h)).sqrt() } else { 0.0 });
        let z = DVector::from_fn(self.dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.x0 + &self.v * z.component_mul(&scale)
    }

    /// `U_ℛᵀ D R⁻¹ D U_ℛ` for the band columns of the eigenvector matrix.
    pub fn band_gram(&self, band: &[usize], d: &DVector<f64>) -> DMatrix<f64> {
        let u = DMatrix::from_columns(&band.iter().map(|&i| self.v.column(i)).collect::<Vec<_>>());
        let dm = DMatrix::from_diagonal(d);
        u.transpose() * &dm * inverse(&self.noise) * &dm * u
    }
}
