//! Sparse undirected graphs and their Laplacians.
//!
//! Adjacency is stored as a CSR [`SparseMatrix`] with both orientations of
//! every edge present. The Laplacian constructions here are the inputs to
//! every filter in the crate:
//!
//! ```text
//! combinatorial:   L = D − A
//! normalized:      L = I − D^{-1/2} A D^{-1/2}    (d(i)^{-1/2} := 0 when d(i) = 0)
//! ```

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};

/// Compressed sparse row matrix with strictly increasing column indices per row.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_ptr.len() != n_rows + 1 {
            return Err(Error::dims("SparseMatrix::new row_ptr", n_rows + 1, row_ptr.len()));
        }
        if col_idx.len() != values.len() {
            return Err(Error::dims("SparseMatrix::new values", col_idx.len(), values.len()));
        }
        if row_ptr[0] != 0 || row_ptr[n_rows] != values.len() {
            return Err(Error::InvalidArgument("row_ptr must start at 0 and end at nnz".into()));
        }
        for r in 0..n_rows {
            let (lo, hi) = (row_ptr[r], row_ptr[r + 1]);
            if lo > hi {
                return Err(Error::InvalidArgument("row_ptr must be non-decreasing".into()));
            }
            for k in lo..hi {
                if col_idx[k] >= n_cols {
                    return Err(Error::InvalidArgument(format!(
                        "column index {} out of range in row {r}",
                        col_idx[k]
                    )));
                }
                if k > lo && col_idx[k] <= col_idx[k - 1] {
                    return Err(Error::InvalidArgument(format!(
                        "column indices not strictly increasing in row {r}"
                    )));
                }
            }
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("non-finite value {v}")));
        }
        Ok(SparseMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        })
    }

    /// Builds from `(row, col, value)` triplets; duplicates are an error.
    pub fn from_triplets(n_rows: usize, n_cols: usize, mut triplets: Vec<(usize, usize, f64)>) -> Result<Self> {
        triplets.sort_by_key(|&(r, c, _)| (r, c));
        if let Some(w) = triplets.windows(2).find(|w| w[0].0 == w[1].0 && w[0].1 == w[1].1) {
            return Err(Error::InvalidArgument(format!(
                "duplicate entry ({}, {})",
                w[0].0, w[0].1
            )));
        }
        let mut row_ptr = vec![0; n_rows + 1];
        for &(r, _, _) in &triplets {
            if r >= n_rows {
                return Err(Error::InvalidArgument(format!("row index {r} out of range")));
            }
            row_ptr[r + 1] += 1;
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let col_idx = triplets.iter().map(|t| t.1).collect();
        let values = triplets.iter().map(|t| t.2).collect();
        Self::new(n_rows, n_cols, row_ptr, col_idx, values)
    }

    pub fn identity(n: usize) -> Self {
        SparseMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        SparseMatrix {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
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

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `(column, value)` pairs of row `r` in column order.
    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        self.col_idx[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let (lo, hi) = (self.row_ptr[r], self.row_ptr[r + 1]);
        match self.col_idx[lo..hi].binary_search(&c) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.n_rows, self.n_cols);
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                m[(r, c)] = v;
            }
        }
        m
    }

    pub fn transpose(&self) -> Self {
        let mut triplets = Vec::with_capacity(self.nnz());
        for r in 0..self.n_rows {
            for (c, v) in self.row(r) {
                triplets.push((c, r, v));
            }
        }
        Self::from_triplets(self.n_cols, self.n_rows, triplets).expect("transpose of a valid matrix is valid")
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        (0..self.n_rows).all(|r| self.row(r).all(|(c, v)| (self.get(c, r) - v).abs() <= tol))
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n_rows).map(|r| self.row(r).map(|(_, v)| v).sum()).collect()
    }

    /// `alpha · I + beta · self` for square matrices, keeping the CSR ordering.
    pub fn scaled_plus_identity(&self, alpha: f64, beta: f64) -> Self {
        assert_eq!(self.n_rows, self.n_cols, "scaled_plus_identity needs a square matrix");
        let n = self.n_rows;
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::with_capacity(self.nnz() + n);
        let mut values = Vec::with_capacity(self.nnz() + n);
        row_ptr.push(0);
        for r in 0..n {
            let mut placed = false;
            for (c, v) in self.row(r) {
                if !placed && c >= r {
                    if c == r {
                        col_idx.push(r);
                        values.push(alpha + beta * v);
                        placed = true;
                        continue;
                    }
                    col_idx.push(r);
                    values.push(alpha);
                    placed = true;
                }
                col_idx.push(c);
                values.push(beta * v);
            }
            if !placed {
                col_idx.push(r);
                values.push(alpha);
            }
            row_ptr.push(values.len());
        }
        SparseMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr,
            col_idx,
            values,
        }
    }
}

/// Sparse–dense product `S X`, accumulated row by row in column-index order.
pub fn spmm(s: &SparseMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    if s.n_cols != x.rows() {
        return Err(Error::dims("spmm", s.n_cols, x.rows()));
    }
    let d = x.cols();
    let mut out = DenseMatrix::zeros(s.n_rows, d);
    for r in 0..s.n_rows {
        let dst = out.row_mut(r);
        for (c, v) in s.row(r) {
            for (o, xv) in dst.iter_mut().zip(x.row(c)) {
                *o += v * xv;
            }
        }
    }
    Ok(out)
}

/// `Sᵀ X` without building the transpose.
pub fn spmm_transposed(s: &SparseMatrix, x: &DenseMatrix) -> Result<DenseMatrix> {
    if s.n_rows != x.rows() {
        return Err(Error::dims("spmm_transposed", s.n_rows, x.rows()));
    }
    let d = x.cols();
    let mut out = DenseMatrix::zeros(s.n_cols, d);
    for r in 0..s.n_rows {
        for (c, v) in s.row(r) {
            let src = x.row(r);
            for (o, xv) in out.row_mut(c).iter_mut().zip(src) {
                *o += v * xv;
            }
        }
    }
    Ok(out)
}

/// Undirected weighted graph without self-loops.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    adjacency: SparseMatrix,
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Graph {
            adjacency: SparseMatrix::zeros(n, n),
        }
    }

    /// Each undirected edge is given once, in either orientation.
    pub fn from_edges(n: usize, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let mut triplets = Vec::with_capacity(edges.len() * 2);
        for &(u, v, w) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) references a node outside 0..{n}"
                )));
            }
            if u == v {
                return Err(Error::InvalidGraph(format!("self-loop at node {u}")));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::InvalidGraph(format!(
                    "edge ({u}, {v}) has non-positive weight {w}"
                )));
            }
            triplets.push((u, v, w));
            triplets.push((v, u, w));
        }
        let adjacency = SparseMatrix::from_triplets(n, n, triplets).map_err(|e| match e {
            Error::InvalidArgument(msg) => Error::InvalidGraph(msg.replace("entry", "edge")),
            other => other,
        })?;
        Ok(Graph { adjacency })
    }

    pub fn from_unit_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let weighted: Vec<_> = edges.iter().map(|&(u, v)| (u, v, 1.0)).collect();
        Self::from_edges(n, &weighted)
    }

    pub fn from_adjacency(adjacency: SparseMatrix) -> Result<Self> {
        if adjacency.n_rows() != adjacency.n_cols() {
            return Err(Error::InvalidGraph("adjacency must be square".into()));
        }
        for r in 0..adjacency.n_rows() {
            for (c, v) in adjacency.row(r) {
                if c == r {
                    return Err(Error::InvalidGraph(format!("self-loop at node {r}")));
                }
                if !(v > 0.0) {
                    return Err(Error::InvalidGraph(format!(
                        "edge ({r}, {c}) has non-positive weight {v}"
                    )));
                }
                if adjacency.get(c, r) != v {
                    return Err(Error::InvalidGraph(format!("adjacency not symmetric at ({r}, {c})")));
                }
            }
        }
        Ok(Graph { adjacency })
    }

    pub fn n(&self) -> usize {
        self.adjacency.n_rows()
    }

    pub fn adjacency(&self) -> &SparseMatrix {
        &self.adjacency
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency.get(u, v) != 0.0
    }

    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency.row(u).map(|(c, _)| c)
    }

    /// Undirected edges as `(u, v, w)` with `u < v`, in row-major order.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::with_capacity(self.edge_count());
        for u in 0..self.n() {
            for (v, w) in self.adjacency.row(u) {
                if u < v {
                    out.push((u, v, w));
                }
            }
        }
        out
    }

    /// Relabels nodes so that old node `i` becomes `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        let edges: Vec<_> = self
            .edges()
            .into_iter()
            .map(|(u, v, w)| (perm[u], perm[v], w))
            .collect();
        Graph::from_edges(self.n(), &edges)
    }
}

pub fn degree_vector(g: &Graph) -> Vec<f64> {
    g.adjacency.row_sums()
}

/// Combinatorial Laplacian `D − A`.
pub fn laplacian(g: &Graph) -> SparseMatrix {
    let deg = degree_vector(g);
    let n = g.n();
    let mut triplets = Vec::with_capacity(g.adjacency.nnz() + n);
    for (r, &d) in deg.iter().enumerate() {
        if d != 0.0 {
            triplets.push((r, r, d));
        }
        for (c, v) in g.adjacency.row(r) {
            triplets.push((r, c, -v));
        }
    }
    SparseMatrix::from_triplets(n, n, triplets).expect("laplacian entries are unique")
}

/// Symmetric normalized Laplacian `I − D^{-1/2} A D^{-1/2}`; isolated nodes
/// keep a unit diagonal and no off-diagonal entries.
pub fn normalized_laplacian(g: &Graph) -> SparseMatrix {
    let inv_sqrt: Vec<f64> = degree_vector(g)
        .into_iter()
        .map(|d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let n = g.n();
    let mut triplets = Vec::with_capacity(g.adjacency.nnz() + n);
    for r in 0..n {
        triplets.push((r, r, 1.0));
        for (c, v) in g.adjacency.row(r) {
            triplets.push((r, c, -v * inv_sqrt[r] * inv_sqrt[c]));
        }
    }
    SparseMatrix::from_triplets(n, n, triplets).expect("laplacian entries are unique")
}

/// `trace(Xᵀ L X)`.
pub fn smoothness(l: &SparseMatrix, x: &DenseMatrix) -> Result<f64> {
    if l.n_rows() != l.n_cols() {
        return Err(Error::dims(
            "smoothness",
            "square L",
            format!("{}x{}", l.n_rows(), l.n_cols()),
        ));
    }
    let lx = spmm(l, x)?;
    Ok(x.as_slice().iter().zip(lx.as_slice()).map(|(a, b)| a * b).sum())
}
