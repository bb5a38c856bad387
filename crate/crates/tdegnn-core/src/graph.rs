//! Graph representation and the symmetric normalized Laplacian.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// An undirected graph over nodes `0..n`. Edges are stored once and applied
/// symmetrically.
#[derive(Debug, Clone)]
pub struct Graph {
    node_count: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    /// Build from an edge list. Input may contain both `(i, j)` and `(j, i)`;
    /// duplicates are merged. Self-loops are rejected rather than dropped.
    pub fn new(node_count: usize, edges: &[(usize, usize)]) -> Result<Graph> {
        let mut unique: BTreeSet<(usize, usize)> = BTreeSet::new();
        for &(src, dst) in edges {
            if src >= node_count || dst >= node_count {
                return Err(Error::state(format!(
                    "edge ({src}, {dst}) references a node outside 0..{node_count}"
                )));
            }
            if src == dst {
                return Err(Error::state(format!("self-loop on node {src} rejected")));
            }
            unique.insert((src.min(dst), src.max(dst)));
        }
        Ok(Graph {
            node_count,
            edges: unique.into_iter().collect(),
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0usize; self.node_count];
        for &(a, b) in &self.edges {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }
}

/// Symmetric sparse matrix in compressed-row form.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    dim: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseOperator {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_offsets[i];
        let hi = self.row_offsets[i + 1];
        match self.col_indices[lo..hi].binary_search(&j) {
            Ok(pos) => self.values[lo + pos],
            Err(_) => 0.0,
        }
    }

    /// Exact sparse-dense product against a row-major `[n×k]` buffer.
    pub fn apply_dense(&self, dense: &[f64], cols: usize) -> Vec<f64> {
        assert_eq!(dense.len(), self.dim * cols, "spmv operand length");
        let mut out = vec![0.0; self.dim * cols];
        for i in 0..self.dim {
            let orow = &mut out[i * cols..(i + 1) * cols];
            for idx in self.row_offsets[i]..self.row_offsets[i + 1] {
                let v = self.values[idx];
                let src = &dense[self.col_indices[idx] * cols..self.col_indices[idx] * cols + cols];
                for c in 0..cols {
                    orow[c] += v * src[c];
                }
            }
        }
        out
    }

    /// Densify to a row-major `n×n` buffer (test aid for small graphs).
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim * self.dim];
        for i in 0..self.dim {
            for idx in self.row_offsets[i]..self.row_offsets[i + 1] {
                out[i * self.dim + self.col_indices[idx]] = self.values[idx];
            }
        }
        out
    }
}

/// The symmetric normalized graph Laplacian `D^{-1/2}(D - A)D^{-1/2}`.
///
/// Diagonal entries are 1 for nodes of degree >= 1 and the off-diagonal entry
/// for an edge `(i, j)` is `-1/sqrt(d_i d_j)`. Rows and columns of isolated
/// nodes are identically zero, so their features evolve by channel mixing only.
pub fn normalized_laplacian(graph: &Graph) -> SparseOperator {
    let n = graph.node_count();
    let deg = graph.degrees();
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .map(|&d| if d > 0 { 1.0 / (d as f64).sqrt() } else { 0.0 })
        .collect();

    // Per-row column/value pairs, sorted by column for CSR.
    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        if deg[i] > 0 {
            rows[i].push((i, 1.0));
        }
    }
    for &(a, b) in graph.edges() {
        let w = -inv_sqrt[a] * inv_sqrt[b];
        rows[a].push((b, w));
        rows[b].push((a, w));
    }
    for row in &mut rows {
        row.sort_by_key(|(c, _)| *c);
    }

    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::new();
    let mut values = Vec::new();
    row_offsets.push(0);
    for row in rows {
        for (c, v) in row {
            col_indices.push(c);
            values.push(v);
        }
        row_offsets.push(col_indices.len());
    }
    SparseOperator {
        dim: n,
        row_offsets,
        col_indices,
        values,
    }
}
