//! Undirected weighted graphs, their Laplacians, and the plain-text edge-list
//! format (`k,l,weight` per line, 0-based, `#` comments, optional
//! `src,dst,weight` header).

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::{is_finite, to_f64, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Edge<T> {
    pub a: usize,
    pub b: usize,
    pub weight: T,
}

impl<T> Edge<T> {
    /// Endpoints ordered `(min, max)`.
    pub fn key(&self) -> (usize, usize) {
        (self.a.min(self.b), self.a.max(self.b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph<T: Scalar> {
    n_nodes: usize,
    edges: Vec<Edge<T>>,
}

impl<T: Scalar> WeightedGraph<T> {
    pub fn new(n_nodes: usize, edges: Vec<Edge<T>>) -> Result<Self> {
        if n_nodes == 0 {
            return Err(Error::Structural("graph must have at least one node".into()));
        }
        let mut seen = BTreeSet::new();
        for e in &edges {
            if e.a >= n_nodes || e.b >= n_nodes {
                return Err(Error::Structural(format!(
                    "edge ({}, {}) references a node outside [0, {n_nodes})",
                    e.a, e.b
                )));
            }
            if e.a == e.b {
                return Err(Error::Structural(format!("self-loop at node {}", e.a)));
            }
            if !is_finite(e.weight) || e.weight <= T::zero() {
                return Err(Error::Structural(format!(
                    "edge ({}, {}) has non-positive or non-finite weight {}",
                    e.a, e.b, e.weight
                )));
            }
            if !seen.insert(e.key()) {
                return Err(Error::Structural(format!("duplicate edge ({}, {})", e.a, e.b)));
            }
        }
        Ok(WeightedGraph { n_nodes, edges })
    }

    /// Convenience constructor from `(k, l, w)` triples.
    pub fn from_triples(n_nodes: usize, triples: &[(usize, usize, f64)]) -> Result<Self> {
        let edges = triples.iter().map(|&(a, b, w)| Edge { a, b, weight: crate::scalar::lit(w) }).collect();
        Self::new(n_nodes, edges)
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    pub fn edges(&self) -> &[Edge<T>] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        let key = (a.min(b), a.max(b));
        self.edges.iter().any(|e| e.key() == key)
    }

    pub fn is_connected(&self) -> bool {
        let mut adj = vec![Vec::new(); self.n_nodes];
        for e in &self.edges {
            adj[e.a].push(e.b);
            adj[e.b].push(e.a);
        }
        let mut visited = vec![false; self.n_nodes];
        let mut stack = vec![0usize];
        visited[0] = true;
        let mut count = 1;
        while let Some(u) = stack.pop() {
            for &v in &adj[u] {
                if !visited[v] {
                    visited[v] = true;
                    count += 1;
                    stack.push(v);
                }
            }
        }
        count == self.n_nodes
    }

    /// Combinatorial Laplacian: weighted degree on the diagonal, negated
    /// weights off the diagonal.
    pub fn laplacian(&self) -> DMatrix<T> {
        build_laplacian(self)
    }

    pub fn to_edge_list(&self) -> String {
        let mut out = String::from("src,dst,weight\n");
        for e in &self.edges {
            let _ = writeln!(out, "{},{},{:e}", e.a, e.b, to_f64(e.weight));
        }
        out
    }

    /// Parse the edge-list text format. The node count is `n_nodes` when
    /// given, otherwise one more than the largest index seen.
    pub fn parse_edge_list(text: &str, n_nodes: Option<usize>) -> Result<Self> {
        let mut edges = Vec::new();
        let mut max_idx = 0usize;
        let mut first_data = true;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if first_data && fields.first().is_some_and(|f| f.eq_ignore_ascii_case("src")) {
                first_data = false;
                continue;
            }
            first_data = false;
            if fields.len() != 3 {
                return Err(Error::Parse {
                    line: lineno + 1,
                    message: format!("expected 3 fields, found {}", fields.len()),
                });
            }
            let parse_idx = |s: &str| {
                s.parse::<usize>()
                    .map_err(|e| Error::Parse { line: lineno + 1, message: format!("bad node index {s:?}: {e}") })
            };
            let a = parse_idx(fields[0])?;
            let b = parse_idx(fields[1])?;
            let w: f64 = fields[2]
                .parse()
                .map_err(|e| Error::Parse { line: lineno + 1, message: format!("bad weight {:?}: {e}", fields[2]) })?;
            max_idx = max_idx.max(a).max(b);
            edges.push(Edge { a, b, weight: crate::scalar::lit(w) });
        }
        let n = n_nodes.unwrap_or(if edges.is_empty() { 0 } else { max_idx + 1 });
        Self::new(n, edges)
    }

    pub fn read_edge_list(path: impl AsRef<Path>, n_nodes: Option<usize>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse_edge_list(&text, n_nodes)
    }
}

pub fn build_laplacian<T: Scalar>(graph: &WeightedGraph<T>) -> DMatrix<T> {
    let n = graph.n_nodes();
    let mut l = DMatrix::zeros(n, n);
    for e in graph.edges() {
        l[(e.a, e.b)] -= e.weight;
        l[(e.b, e.a)] -= e.weight;
        l[(e.a, e.a)] += e.weight;
        l[(e.b, e.b)] += e.weight;
    }
    l
}

/// Remove row and column `node` from a Laplacian (reference-node pinning).
pub fn ground_node<T: Scalar>(laplacian: &DMatrix<T>, node: usize) -> Result<DMatrix<T>> {
    let n = laplacian.nrows();
    if node >= n {
        return Err(Error::Structural(format!("pinned node {node} out of range")));
    }
    Ok(laplacian.clone().remove_row(node).remove_column(node))
}
