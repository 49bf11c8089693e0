//! Undirected graphs, CSR operators and symmetric normalization.

use std::collections::HashSet;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

/// Simple undirected graph on nodes `0..n`.
///
/// Construction rejects self-loops, out-of-range endpoints and duplicate
/// pairs in either orientation.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize)>,
}

impl Graph {
    pub fn new(n: usize, edges: Vec<(usize, usize)>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(edges.len());
        for &(u, v) in &edges {
            for index in [u, v] {
                if index >= n {
                    return Err(Error::NodeOutOfRange { index, n });
                }
            }
            if u == v {
                return Err(Error::SelfLoop(u));
            }
            if !seen.insert((u.min(v), u.max(v))) {
                return Err(Error::DuplicateEdge(u, v));
            }
        }
        Ok(Self { n, edges })
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "permutation of length {} for {} nodes",
                perm.len(),
                self.n
            )));
        }
        let edges = self
            .edges
            .iter()
            .map(|&(u, v)| (perm[u], perm[v]))
            .collect();
        Self::new(self.n, edges)
    }
}

/// Compressed sparse row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Validates CSR arrays: monotone offsets spanning `values`, strictly
    /// increasing in-range columns per row, finite values.
    pub fn from_csr(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let bad = |msg: String| Err(Error::InvalidSparse(msg));
        if row_offsets.len() != n_rows + 1 {
            return bad(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                n_rows + 1
            ));
        }
        if row_offsets[0] != 0 || row_offsets[n_rows] != values.len() {
            return bad("row_offsets must start at 0 and end at nnz".into());
        }
        if col_indices.len() != values.len() {
            return bad("col_indices and values differ in length".into());
        }
        for r in 0..n_rows {
            let (lo, hi) = (row_offsets[r], row_offsets[r + 1]);
            if lo > hi {
                return bad(format!("row_offsets decrease at row {r}"));
            }
            let cols = &col_indices[lo..hi];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return bad(format!("columns of row {r} are not strictly increasing"));
            }
            if let Some(&c) = cols.last() {
                if c >= n_cols {
                    return bad(format!("column {c} out of range in row {r}"));
                }
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("sparse value #{pos}")));
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    /// Drops exact zeros.
    pub fn from_dense(m: &DenseMatrix) -> Self {
        let mut row_offsets = Vec::with_capacity(m.rows() + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for i in 0..m.rows() {
            for (j, &v) in m.row(i).iter().enumerate() {
                if v != 0.0 {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(values.len());
        }
        Self {
            n_rows: m.rows(),
            n_cols: m.cols(),
            row_offsets,
            col_indices,
            values,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                out.set(r, c, v);
            }
        }
        out
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(column, value)` pairs of row `r`.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        self.col_indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// Stored value at `(r, c)`, zero when absent.
    pub fn get(&self, r: usize, c: usize) -> f64 {
        let span = self.row_offsets[r]..self.row_offsets[r + 1];
        match self.col_indices[span.clone()].binary_search(&c) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows)
            .map(|r| self.row(r).map(|(_, v)| v).sum())
            .collect()
    }
}

/// 0/1 adjacency of `g`, optionally with the identity added.
pub fn build_adjacency(g: &Graph, add_self_loops: bool) -> SparseMatrix {
    let n = g.num_nodes();
    let mut neighbours: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(u, v) in g.edges() {
        neighbours[u].push(v);
        neighbours[v].push(u);
    }
    if add_self_loops {
        for (i, list) in neighbours.iter_mut().enumerate() {
            list.push(i);
        }
    }
    let mut row_offsets = Vec::with_capacity(n + 1);
    let mut col_indices = Vec::with_capacity(2 * g.num_edges() + n);
    row_offsets.push(0);
    for mut list in neighbours {
        list.sort_unstable();
        col_indices.extend(list);
        row_offsets.push(col_indices.len());
    }
    let values = vec![1.0; col_indices.len()];
    SparseMatrix {
        n_rows: n,
        n_cols: n,
        row_offsets,
        col_indices,
        values,
    }
}

/// `D^{-1/2} A D^{-1/2}`, i.e. `A[i,j] / √(d_i·d_j)` with `d_i` the row sums
/// of `A`.
///
/// Degree-zero rows get a scale factor of zero, so isolated nodes yield zero
/// rows and columns instead of NaN.
pub fn symmetric_normalize(a: &SparseMatrix) -> Result<SparseMatrix> {
    if a.n_rows != a.n_cols {
        return Err(Error::DimensionMismatch(format!(
            "normalization needs a square matrix, got {}x{}",
            a.n_rows, a.n_cols
        )));
    }
    for r in 0..a.n_rows {
        for (c, v) in a.row(r) {
            if v < 0.0 {
                return Err(Error::InvalidSparse(format!(
                    "negative entry {v} at ({r}, {c})"
                )));
            }
            if a.get(c, r) != v {
                return Err(Error::NotSymmetric { row: r, col: c });
            }
        }
    }
    let degrees = a.row_sums();
    let mut values = Vec::with_capacity(a.nnz());
    for r in 0..a.n_rows {
        for (c, v) in a.row(r) {
            let scale = degrees[r] * degrees[c];
            values.push(if scale > 0.0 { v / scale.sqrt() } else { 0.0 });
        }
    }
    Ok(SparseMatrix {
        values,
        ..a.clone()
    })
}

/// Sparse-dense product `s · x`, parallel over output rows.
pub fn spmm(s: &SparseMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    if s.n_cols != x.rows() {
        return Err(Error::DimensionMismatch(format!(
            "cannot multiply {}x{} sparse by {}x{} dense",
            s.n_rows,
            s.n_cols,
            x.rows(),
            x.cols()
        )));
    }
    let d = x.cols();
    let mut out = DenseMatrix::zeros(s.n_rows, d);
    if d == 0 {
        return Ok(out);
    }
    out.as_mut_slice()
        .par_chunks_mut(d)
        .enumerate()
        .for_each(|(r, out_row)| {
            for (c, v) in s.row(r) {
                for (o, xv) in out_row.iter_mut().zip(x.row(c)) {
                    *o += v * xv;
                }
            }
        });
    Ok(out)
}

/// Fraction of edges joining two nodes with the same label.
pub fn homophily_ratio(g: &Graph, labels: &[usize]) -> Result<f64> {
    if labels.len() != g.num_nodes() {
        return Err(Error::DimensionMismatch(format!(
            "{} labels for {} nodes",
            labels.len(),
            g.num_nodes()
        )));
    }
    if g.num_edges() == 0 {
        return Err(Error::Undefined(
            "homophily ratio is undefined for a graph without edges",
        ));
    }
    let same = g
        .edges()
        .iter()
        .filter(|&&(u, v)| labels[u] == labels[v])
        .count();
    Ok(same as f64 / g.num_edges() as f64)
}
