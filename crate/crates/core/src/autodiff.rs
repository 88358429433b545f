//! Define-by-run reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of one forward pass as a node holding
//! its value. [`Tape::backward`] sweeps the nodes in reverse insertion order
//! (a valid reverse topological order, since operands always precede their
//! results) and returns the adjoints of the trainable leaves.
//!
//! Shapes are explicit: there is no broadcasting apart from [`Tape::scale`].
//! Sparse operands and factored constant systems enter operations as data and
//! never receive an adjoint.
//!
//! ```
//! use bifilter::autodiff::Tape;
//! use bifilter::DenseMatrix;
//!
//! let mut tape = Tape::new();
//! let w = tape.param(DenseMatrix::from_rows(&[[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]));
//! let loss = tape.sum(w);
//! let grads = tape.backward(loss).unwrap();
//! assert_eq!(grads.get(w).unwrap(), &DenseMatrix::filled(2, 3, 1.0));
//! ```

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::dense::{Cholesky, DenseMatrix, Lu};
use crate::error::{Error, Result};
use crate::graph::{spmm, spmm_transposed, SparseMatrix};

static NEXT_GENERATION: AtomicU64 = AtomicU64::new(1);

/// Handle to a node on one particular tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    index: usize,
    generation: u64,
}

enum Op {
    Leaf,
    MatMul(usize, usize),
    SparseLeft(Arc<SparseMatrix>, usize),
    SolveLeft(Arc<Cholesky>, usize),
    SolveRight {
        lhs: usize,
        system: usize,
        lu: Lu,
    },
    Add(usize, usize),
    Sub(usize, usize),
    Scale(usize, f64),
    Transpose(usize),
    Sigmoid(usize),
    Relu(usize),
    RowSoftmax(usize),
    Mul(usize, usize),
    Rows(usize, Vec<usize>),
    Sum(usize),
    Mean(usize),
    AbsSum(usize),
    SymNormalize {
        input: usize,
        inv_sqrt_deg: Vec<f64>,
    },
    CrossEntropy {
        logits: usize,
        rows: Vec<usize>,
        labels: Vec<usize>,
        probs: DenseMatrix,
    },
    PairDot {
        input: usize,
        pairs: Vec<(usize, usize)>,
    },
    BceWithLogits {
        input: usize,
        labels: Vec<f64>,
    },
}

struct Node {
    op: Op,
    value: DenseMatrix,
    needs_grad: bool,
}

pub struct Tape {
    generation: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

fn shape_str(m: &DenseMatrix) -> String {
    format!("{}x{}", m.rows(), m.cols())
}

impl Tape {
    pub fn new() -> Self {
        Tape {
            generation: NEXT_GENERATION.fetch_add(1, Ordering::Relaxed),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn idx(&self, v: Var) -> usize {
        assert_eq!(
            v.generation, self.generation,
            "variable used with a tape it was not created on"
        );
        v.index
    }

    fn push(&mut self, op: Op, value: DenseMatrix, needs_grad: bool) -> Var {
        self.nodes.push(Node { op, value, needs_grad });
        Var {
            index: self.nodes.len() - 1,
            generation: self.generation,
        }
    }

    fn needs(&self, i: usize) -> bool {
        self.nodes[i].needs_grad
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: DenseMatrix) -> Var {
        self.push(Op::Leaf, value, true)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: DenseMatrix) -> Var {
        self.push(Op::Leaf, value, false)
    }

    pub fn value(&self, v: Var) -> &DenseMatrix {
        &self.nodes[self.idx(v)].value
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1), "scalar() on a non-scalar node");
        m[(0, 0)]
    }

    pub fn is_trainable(&self, v: Var) -> bool {
        let i = self.idx(v);
        matches!(self.nodes[i].op, Op::Leaf) && self.nodes[i].needs_grad
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a), self.idx(b));
        let value = self.nodes[ia].value.matmul(&self.nodes[ib].value)?;
        let ng = self.needs(ia) || self.needs(ib);
        Ok(self.push(Op::MatMul(ia, ib), value, ng))
    }

    /// `S X` with a constant sparse `S`.
    pub fn sparse_left(&mut self, s: &Arc<SparseMatrix>, x: Var) -> Result<Var> {
        let ix = self.idx(x);
        let value = spmm(s, &self.nodes[ix].value)?;
        let ng = self.needs(ix);
        Ok(self.push(Op::SparseLeft(Arc::clone(s), ix), value, ng))
    }

    /// `M⁻¹ X` for a constant factored symmetric positive definite `M`.
    pub fn solve_left(&mut self, m: &Arc<Cholesky>, x: Var) -> Result<Var> {
        let ix = self.idx(x);
        let value = m.solve(&self.nodes[ix].value)?;
        let ng = self.needs(ix);
        Ok(self.push(Op::SolveLeft(Arc::clone(m), ix), value, ng))
    }

    /// `X B⁻¹`, differentiable in both `X` and `B`.
    pub fn solve_right(&mut self, x: Var, b: Var) -> Result<Var> {
        let (ix, ib) = (self.idx(x), self.idx(b));
        let bv = &self.nodes[ib].value;
        if !bv.is_square() || bv.rows() != self.nodes[ix].value.cols() {
            return Err(Error::dims(
                "solve_right",
                format!("{0}x{0}", self.nodes[ix].value.cols()),
                shape_str(bv),
            ));
        }
        let lu = Lu::factor(bv)?;
        // X B = M  ⇔  Bᵀ Xᵀ = Mᵀ
        let value = lu.solve_transposed(&self.nodes[ix].value.transpose())?.transpose();
        let ng = self.needs(ix) || self.needs(ib);
        Ok(self.push(
            Op::SolveRight {
                lhs: ix,
                system: ib,
                lu,
            },
            value,
            ng,
        ))
    }

    fn same_shape(&self, op: &'static str, ia: usize, ib: usize) -> Result<()> {
        let (a, b) = (&self.nodes[ia].value, &self.nodes[ib].value);
        if a.shape() != b.shape() {
            return Err(Error::dims(op, shape_str(a), shape_str(b)));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a), self.idx(b));
        self.same_shape("add", ia, ib)?;
        let value = self.nodes[ia].value.add(&self.nodes[ib].value);
        let ng = self.needs(ia) || self.needs(ib);
        Ok(self.push(Op::Add(ia, ib), value, ng))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a), self.idx(b));
        self.same_shape("sub", ia, ib)?;
        let value = self.nodes[ia].value.sub(&self.nodes[ib].value);
        let ng = self.needs(ia) || self.needs(ib);
        Ok(self.push(Op::Sub(ia, ib), value, ng))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, ib) = (self.idx(a), self.idx(b));
        self.same_shape("mul", ia, ib)?;
        let value = self.nodes[ia].value.hadamard(&self.nodes[ib].value);
        let ng = self.needs(ia) || self.needs(ib);
        Ok(self.push(Op::Mul(ia, ib), value, ng))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let ia = self.idx(a);
        let value = self.nodes[ia].value.scale(s);
        let ng = self.needs(ia);
        self.push(Op::Scale(ia, s), value, ng)
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let ia = self.idx(a);
        let value = self.nodes[ia].value.transpose();
        let ng = self.needs(ia);
        self.push(Op::Transpose(ia), value, ng)
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let ia = self.idx(a);
        let value = self.nodes[ia].value.map(sigmoid);
        let ng = self.needs(ia);
        self.push(Op::Sigmoid(ia), value, ng)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let ia = self.idx(a);
        let value = self.nodes[ia].value.map(|v| v.max(0.0));
        let ng = self.needs(ia);
        self.push(Op::Relu(ia), value, ng)
    }

    pub fn row_softmax(&mut self, a: Var) -> Var {
        let ia = self.idx(a);
        let value = row_softmax(&self.nodes[ia].value);
        let ng = self.needs(ia);
        self.push(Op::RowSoftmax(ia), value, ng)
    }

    pub fn rows(&mut self, a: Var, rows: &[usize]) -> Result<Var> {
        let ia = self.idx(a);
        let n = self.nodes[ia].value.rows();
        if let Some(&r) = rows.iter().find(|&&r| r >= n) {
            return Err(Error::dims("rows", format!("row index < {n}"), r));
        }
        let value = self.nodes[ia].value.select_rows(rows);
        let ng = self.needs(ia);
        Ok(self.push(Op::Rows(ia, rows.to_vec()), value, ng))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let ia = self.idx(a);
        let value = DenseMatrix::filled(1, 1, self.nodes[ia].value.sum());
        let ng = self.needs(ia);
        self.push(Op::Sum(ia), value, ng)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let ia = self.idx(a);
        let v = &self.nodes[ia].value;
        let count = (v.rows() * v.cols()).max(1) as f64;
        let value = DenseMatrix::filled(1, 1, v.sum() / count);
        let ng = self.needs(ia);
        self.push(Op::Mean(ia), value, ng)
    }

    /// `Σ |a_ij|`, the L1 penalty.
    pub fn abs_sum(&mut self, a: Var) -> Var {
        let ia = self.idx(a);
        let s = self.nodes[ia].value.as_slice().iter().map(|v| v.abs()).sum();
        let ng = self.needs(ia);
        self.push(Op::AbsSum(ia), DenseMatrix::filled(1, 1, s), ng)
    }

    /// `D^{-1/2} A D^{-1/2}` with `D = diag(row sums of A)`; rows with zero
    /// degree map to zero. Gradients flow through both `A` and `D`.
    pub fn sym_normalize(&mut self, a: Var) -> Result<Var> {
        let ia = self.idx(a);
        let av = &self.nodes[ia].value;
        if !av.is_square() {
            return Err(Error::dims("sym_normalize", "square", shape_str(av)));
        }
        let n = av.rows();
        let inv_sqrt_deg: Vec<f64> = (0..n)
            .map(|i| {
                let d: f64 = av.row(i).iter().sum();
                if d > 0.0 {
                    1.0 / d.sqrt()
                } else {
                    0.0
                }
            })
            .collect();
        let value = DenseMatrix::from_fn(n, n, |i, j| av[(i, j)] * inv_sqrt_deg[i] * inv_sqrt_deg[j]);
        let ng = self.needs(ia);
        Ok(self.push(
            Op::SymNormalize {
                input: ia,
                inv_sqrt_deg,
            },
            value,
            ng,
        ))
    }

    /// Mean softmax cross-entropy of `logits[rows[t]]` against `labels[t]`.
    pub fn cross_entropy(&mut self, logits: Var, rows: &[usize], labels: &[usize]) -> Result<Var> {
        let il = self.idx(logits);
        let lv = &self.nodes[il].value;
        if rows.is_empty() {
            return Err(Error::EmptyMask("cross_entropy"));
        }
        if rows.len() != labels.len() {
            return Err(Error::dims("cross_entropy labels", rows.len(), labels.len()));
        }
        let (n, c) = lv.shape();
        if let Some(&r) = rows.iter().find(|&&r| r >= n) {
            return Err(Error::dims("cross_entropy rows", format!("< {n}"), r));
        }
        if let Some(&y) = labels.iter().find(|&&y| y >= c) {
            return Err(Error::dims("cross_entropy labels", format!("< {c}"), y));
        }
        let picked = lv.select_rows(rows);
        let mut total = 0.0;
        let mut probs = DenseMatrix::zeros(rows.len(), c);
        for (t, &y) in labels.iter().enumerate() {
            let row = picked.row(t);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            total += lse - row[y];
            for (p, v) in probs.row_mut(t).iter_mut().zip(row) {
                *p = (v - lse).exp();
            }
        }
        let value = DenseMatrix::filled(1, 1, total / rows.len() as f64);
        let ng = self.needs(il);
        Ok(self.push(
            Op::CrossEntropy {
                logits: il,
                rows: rows.to_vec(),
                labels: labels.to_vec(),
                probs,
            },
            value,
            ng,
        ))
    }

    /// Column of inner products `z_u · z_v` for each pair.
    pub fn pair_dot(&mut self, z: Var, pairs: &[(usize, usize)]) -> Result<Var> {
        let iz = self.idx(z);
        let zv = &self.nodes[iz].value;
        let n = zv.rows();
        if let Some(&(u, v)) = pairs.iter().find(|&&(u, v)| u >= n || v >= n) {
            return Err(Error::dims("pair_dot", format!("node < {n}"), format!("({u}, {v})")));
        }
        let out: Vec<f64> = pairs
            .iter()
            .map(|&(u, v)| zv.row(u).iter().zip(zv.row(v)).map(|(a, b)| a * b).sum())
            .collect();
        let ng = self.needs(iz);
        Ok(self.push(
            Op::PairDot {
                input: iz,
                pairs: pairs.to_vec(),
            },
            DenseMatrix::column_vector(&out),
            ng,
        ))
    }

    /// Mean binary cross-entropy of a logit column against 0/1 labels.
    pub fn bce_with_logits(&mut self, logits: Var, labels: &[f64]) -> Result<Var> {
        let il = self.idx(logits);
        let lv = &self.nodes[il].value;
        if lv.cols() != 1 || lv.rows() != labels.len() {
            return Err(Error::dims(
                "bce_with_logits",
                format!("{}x1", labels.len()),
                shape_str(lv),
            ));
        }
        if labels.is_empty() {
            return Err(Error::EmptyMask("bce_with_logits"));
        }
        let value = bce_with_logits(lv.as_slice(), labels)?;
        let ng = self.needs(il);
        Ok(self.push(
            Op::BceWithLogits {
                input: il,
                labels: labels.to_vec(),
            },
            DenseMatrix::filled(1, 1, value),
            ng,
        ))
    }

    /// Reverse sweep from a scalar node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let il = self.idx(loss);
        let shape = self.nodes[il].value.shape();
        if shape != (1, 1) {
            return Err(Error::dims("backward", "1x1 loss", format!("{}x{}", shape.0, shape.1)));
        }
        let mut adj: Vec<Option<DenseMatrix>> = (0..self.nodes.len()).map(|_| None).collect();
        adj[il] = Some(DenseMatrix::filled(1, 1, 1.0));

        for i in (0..=il).rev() {
            if !self.nodes[i].needs_grad {
                continue;
            }
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let Some(g) = adj[i].take() else { continue };
            self.propagate(i, &g, &mut adj)?;
        }

        let grads = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, node)| {
                if matches!(node.op, Op::Leaf) && node.needs_grad {
                    Some(
                        adj[i]
                            .take()
                            .unwrap_or_else(|| DenseMatrix::zeros(node.value.rows(), node.value.cols())),
                    )
                } else {
                    None
                }
            })
            .collect();
        Ok(Gradients {
            generation: self.generation,
            grads,
        })
    }

    fn propagate(&self, i: usize, g: &DenseMatrix, adj: &mut [Option<DenseMatrix>]) -> Result<()> {
        let nodes = &self.nodes;
        let mut acc = |j: usize, contribution: DenseMatrix| {
            if !nodes[j].needs_grad {
                return;
            }
            match &mut adj[j] {
                Some(existing) => existing.axpy(1.0, &contribution),
                slot @ None => *slot = Some(contribution),
            }
        };
        match &nodes[i].op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if nodes[*a].needs_grad {
                    acc(*a, g.matmul_t(&nodes[*b].value)?);
                }
                if nodes[*b].needs_grad {
                    acc(*b, nodes[*a].value.t_matmul(g)?);
                }
            }
            Op::SparseLeft(s, x) => acc(*x, spmm_transposed(s, g)?),
            // M symmetric, so the adjoint solve uses the same factor
            Op::SolveLeft(m, x) => acc(*x, m.solve(g)?),
            Op::SolveRight { lhs, system, lu } => {
                // X = M B⁻¹:  gM = G B⁻ᵀ,  gB = −Xᵀ gM
                let gm = lu.solve(&g.transpose())?.transpose();
                if nodes[*system].needs_grad {
                    let gb = nodes[i].value.t_matmul(&gm)?.scale(-1.0);
                    acc(*system, gb);
                }
                acc(*lhs, gm);
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.scale(-1.0));
            }
            Op::Scale(a, s) => acc(*a, g.scale(*s)),
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::Sigmoid(a) => {
                let y = &nodes[i].value;
                acc(*a, g.zip_map(y, |gv, yv| gv * yv * (1.0 - yv)));
            }
            Op::Relu(a) => {
                let x = &nodes[*a].value;
                acc(*a, g.zip_map(x, |gv, xv| if xv > 0.0 { gv } else { 0.0 }));
            }
            Op::RowSoftmax(a) => {
                let y = &nodes[i].value;
                let mut out = DenseMatrix::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let dot: f64 = g.row(r).iter().zip(y.row(r)).map(|(a, b)| a * b).sum();
                    for ((o, gv), yv) in out.row_mut(r).iter_mut().zip(g.row(r)).zip(y.row(r)) {
                        *o = yv * (gv - dot);
                    }
                }
                acc(*a, out);
            }
            Op::Mul(a, b) => {
                if nodes[*a].needs_grad {
                    acc(*a, g.hadamard(&nodes[*b].value));
                }
                if nodes[*b].needs_grad {
                    acc(*b, g.hadamard(&nodes[*a].value));
                }
            }
            Op::Rows(a, rows) => {
                let src = &nodes[*a].value;
                let mut out = DenseMatrix::zeros(src.rows(), src.cols());
                for (t, &r) in rows.iter().enumerate() {
                    for (o, gv) in out.row_mut(r).iter_mut().zip(g.row(t)) {
                        *o += gv;
                    }
                }
                acc(*a, out);
            }
            Op::Sum(a) => {
                let s = &nodes[*a].value;
                acc(*a, DenseMatrix::filled(s.rows(), s.cols(), g[(0, 0)]));
            }
            Op::Mean(a) => {
                let s = &nodes[*a].value;
                let count = (s.rows() * s.cols()).max(1) as f64;
                acc(*a, DenseMatrix::filled(s.rows(), s.cols(), g[(0, 0)] / count));
            }
            Op::AbsSum(a) => {
                let gv = g[(0, 0)];
                acc(*a, nodes[*a].value.map(|v| gv * sign(v)));
            }
            Op::SymNormalize { input, inv_sqrt_deg: s } => {
                let a = &nodes[*input].value;
                let n = a.rows();
                // N_ij = s_i A_ij s_j,  s_k = d_k^{-1/2},  d_k = Σ_j A_kj
                let mut out = DenseMatrix::from_fn(n, n, |r, c| g[(r, c)] * s[r] * s[c]);
                let mut gs = vec![0.0; n];
                for r in 0..n {
                    for c in 0..n {
                        let w = g[(r, c)] * a[(r, c)];
                        gs[r] += w * s[c];
                        gs[c] += w * s[r];
                    }
                }
                for k in 0..n {
                    // ∂s/∂d = −½ s³ (zero where the degree guard fired)
                    let gd = -0.5 * gs[k] * s[k] * s[k] * s[k];
                    out.row_mut(k).iter_mut().for_each(|v| *v += gd);
                }
                acc(*input, out);
            }
            Op::CrossEntropy {
                logits,
                rows,
                labels,
                probs,
            } => {
                let src = &nodes[*logits].value;
                let scale = g[(0, 0)] / rows.len() as f64;
                let mut out = DenseMatrix::zeros(src.rows(), src.cols());
                for (t, (&r, &y)) in rows.iter().zip(labels).enumerate() {
                    for (c, (o, p)) in out.row_mut(r).iter_mut().zip(probs.row(t)).enumerate() {
                        let onehot = if c == y { 1.0 } else { 0.0 };
                        *o += scale * (p - onehot);
                    }
                }
                acc(*logits, out);
            }
            Op::PairDot { input, pairs } => {
                let z = &nodes[*input].value;
                let mut out = DenseMatrix::zeros(z.rows(), z.cols());
                for (t, &(u, v)) in pairs.iter().enumerate() {
                    let gt = g[(t, 0)];
                    for c in 0..z.cols() {
                        out[(u, c)] += gt * z[(v, c)];
                        out[(v, c)] += gt * z[(u, c)];
                    }
                }
                acc(*input, out);
            }
            Op::BceWithLogits { input, labels } => {
                let x = &nodes[*input].value;
                let scale = g[(0, 0)] / labels.len() as f64;
                let out = DenseMatrix::from_fn(x.rows(), 1, |r, _| scale * (sigmoid(x[(r, 0)]) - labels[r]));
                acc(*input, out);
            }
        }
        Ok(())
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn row_softmax(m: &DenseMatrix) -> DenseMatrix {
    let mut out = m.clone();
    for r in 0..m.rows() {
        let row = out.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    out
}

/// Mean of `max(x,0) − x·y + ln(1 + e^{−|x|})`.
pub fn bce_with_logits(logits: &[f64], labels: &[f64]) -> Result<f64> {
    if logits.len() != labels.len() {
        return Err(Error::dims("bce_with_logits", logits.len(), labels.len()));
    }
    if logits.is_empty() {
        return Err(Error::EmptyMask("bce_with_logits"));
    }
    if let Some(y) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
        return Err(Error::InvalidArgument(format!("label {y} is not 0 or 1")));
    }
    let total: f64 = logits
        .iter()
        .zip(labels)
        .map(|(&x, &y)| x.max(0.0) - x * y + (-x.abs()).exp().ln_1p())
        .sum();
    Ok(total / logits.len() as f64)
}

/// Adjoints of the trainable leaves of one tape.
pub struct Gradients {
    generation: u64,
    grads: Vec<Option<DenseMatrix>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&DenseMatrix> {
        if v.generation != self.generation {
            return None;
        }
        self.grads.get(v.index).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<DenseMatrix> {
        if v.generation != self.generation {
            return None;
        }
        self.grads.get_mut(v.index).and_then(|g| g.take())
    }
}

/// Largest `|g_ad − g_fd| / max(1, |g_fd|)` over every entry of every
/// parameter, with central differences of step `h`.
pub fn grad_check_with_step<F>(params: &[DenseMatrix], build: F, h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |values: &[DenseMatrix]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = values.iter().map(|v| tape.param(v.clone())).collect();
        let loss = build(&mut tape, &vars)?;
        Ok(tape.scalar(loss))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|v| tape.param(v.clone())).collect();
    let loss = build(&mut tape, &vars)?;
    let grads = tape.backward(loss)?;

    let mut worst: f64 = 0.0;
    let mut work: Vec<DenseMatrix> = params.to_vec();
    for (pi, var) in vars.iter().enumerate() {
        let ad = grads.get(*var).expect("params are trainable").clone();
        for e in 0..work[pi].as_slice().len() {
            let orig = work[pi].as_slice()[e];
            work[pi].as_mut_slice()[e] = orig + h;
            let up = eval(&work)?;
            work[pi].as_mut_slice()[e] = orig - h;
            let down = eval(&work)?;
            work[pi].as_mut_slice()[e] = orig;
            let fd = (up - down) / (2.0 * h);
            let err = (ad.as_slice()[e] - fd).abs() / fd.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

/// [`grad_check_with_step`] with `h = 1e-6`.
pub fn grad_check<F>(params: &[DenseMatrix], build: F) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    grad_check_with_step(params, build, 1e-6)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
        DenseMatrix::from_fn(rows, cols, |r, c| {
            (((r * 31 + c * 17) as u64 + seed * 7) as f64 * 0.618).sin()
        })
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut tape = Tape::new();
        let w = tape.param(m(2, 3, 1));
        let loss = tape.sum(w);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(w).unwrap(), &DenseMatrix::filled(2, 3, 1.0));
    }

    #[test]
    fn sigmoid_slope_at_zero() {
        let mut tape = Tape::new();
        let x = tape.param(DenseMatrix::zeros(1, 1));
        let y = tape.sigmoid(x);
        let loss = tape.sum(y);
        let grads = tape.backward(loss).unwrap();
        assert_eq!(grads.get(x).unwrap()[(0, 0)], 0.25);
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(m(2, 2, 0));
        assert!(matches!(tape.backward(x), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn constants_get_no_gradient() {
        let mut tape = Tape::new();
        let a = tape.constant(m(2, 2, 1));
        let b = tape.param(m(2, 2, 2));
        let c = tape.matmul(a, b).unwrap();
        let loss = tape.sum(c);
        let grads = tape.backward(loss).unwrap();
        assert!(grads.get(a).is_none());
        assert!(grads.get(b).is_some());
        assert!(!tape.is_trainable(a) && tape.is_trainable(b));
    }

    #[test]
    fn shape_errors() {
        let mut tape = Tape::new();
        let a = tape.param(m(2, 3, 1));
        let b = tape.param(m(2, 2, 2));
        assert!(tape.add(a, b).is_err());
        assert!(tape.matmul(a, b).is_err());
        assert!(tape.sym_normalize(a).is_err());
        assert!(tape.rows(a, &[5]).is_err());
        assert!(tape.cross_entropy(a, &[], &[]).is_err());
        assert!(tape.cross_entropy(a, &[0], &[3]).is_err());
    }

    #[test]
    #[should_panic(expected = "not created on")]
    fn foreign_variable_panics() {
        let mut t1 = Tape::new();
        let mut t2 = Tape::new();
        let a = t1.param(m(1, 1, 0));
        t2.sum(a);
    }

    #[test]
    fn linear_form_is_exact() {
        let c = m(3, 4, 5);
        let err = grad_check(&[m(3, 4, 1)], |t, v| {
            let k = t.constant(c.clone());
            let prod = t.mul(v[0], k)?;
            Ok(t.sum(prod))
        })
        .unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn bce_rejects_bad_labels() {
        assert!(bce_with_logits(&[0.0], &[0.5]).is_err());
        assert!(bce_with_logits(&[], &[]).is_err());
        assert!((bce_with_logits(&[0.0], &[1.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
    }

    fn check(params: &[DenseMatrix], build: impl Fn(&mut Tape, &[Var]) -> Result<Var>) {
        let err = grad_check(params, build).unwrap();
        assert!(err < 1e-6, "gradient error {err}");
    }

    // weights so that the loss is not a plain sum of symmetric pieces
    fn weighted(t: &mut Tape, x: Var) -> Result<Var> {
        let (r, c) = t.value(x).shape();
        let w = t.constant(m(r, c, 42));
        let p = t.mul(x, w)?;
        Ok(t.sum(p))
    }

    #[test]
    fn fd_matmul_both_sides() {
        check(&[m(3, 4, 1), m(4, 2, 2)], |t, v| {
            let y = t.matmul(v[0], v[1])?;
            weighted(t, y)
        });
    }

    #[test]
    fn fd_sparse_left() {
        let s = Arc::new(
            SparseMatrix::from_triplets(3, 3, vec![(0, 1, 2.0), (1, 0, -1.0), (2, 2, 0.5), (0, 0, 1.0)]).unwrap(),
        );
        check(&[m(3, 2, 3)], |t, v| {
            let y = t.sparse_left(&s, v[0])?;
            weighted(t, y)
        });
    }

    #[test]
    fn fd_solve_left() {
        let spd = DenseMatrix::from_rows(&[[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]]);
        let chol = Arc::new(Cholesky::factor(&spd).unwrap());
        check(&[m(3, 2, 4)], |t, v| {
            let y = t.solve_left(&chol, v[0])?;
            weighted(t, y)
        });
    }

    #[test]
    fn fd_solve_right_both_operands() {
        let mut b = m(3, 3, 5);
        for i in 0..3 {
            b.as_mut_slice()[i * 3 + i] += 3.0;
        }
        check(&[m(4, 3, 6), b], |t, v| {
            let y = t.solve_right(v[0], v[1])?;
            weighted(t, y)
        });
    }

    #[test]
    fn fd_elementwise_ops() {
        check(&[m(3, 3, 7), m(3, 3, 8)], |t, v| {
            let a = t.add(v[0], v[1])?;
            let b = t.sub(a, v[1])?;
            let c = t.mul(b, v[1])?;
            let d = t.scale(c, -1.5);
            let e = t.transpose(d);
            let f = t.sigmoid(e);
            let g = t.relu(v[0]);
            let h = t.add(f, g)?;
            weighted(t, h)
        });
    }

    #[test]
    fn fd_softmax_rows_reductions() {
        check(&[m(4, 3, 9)], |t, v| {
            let s = t.row_softmax(v[0]);
            let r = t.rows(s, &[2, 0, 2])?;
            let a = weighted(t, r)?;
            let b = t.mean(v[0]);
            let c = t.abs_sum(v[0]);
            let ab = t.add(a, b)?;
            t.add(ab, c)
        });
    }

    #[test]
    fn fd_sym_normalize_through_degrees() {
        let a = DenseMatrix::from_fn(4, 4, |i, j| if i == j { 0.0 } else { 0.3 + 0.1 * (i + 2 * j) as f64 });
        check(&[a], |t, v| {
            let n = t.sym_normalize(v[0])?;
            weighted(t, n)
        });
    }

    #[test]
    fn sym_normalize_guards_isolated_rows() {
        let mut tape = Tape::new();
        let a = tape.param(DenseMatrix::from_rows(&[
            [0.0, 0.0, 0.0],
            [0.0, 0.0, 2.0],
            [0.0, 2.0, 0.0],
        ]));
        let n = tape.sym_normalize(a).unwrap();
        let v = tape.value(n);
        assert_eq!(v.row(0), &[0.0, 0.0, 0.0]);
        assert!((v[(1, 2)] - 1.0).abs() < 1e-15);
        let loss = tape.sum(n);
        let g = tape.backward(loss).unwrap();
        assert!(g.get(a).unwrap().is_finite());
    }

    #[test]
    fn fd_cross_entropy() {
        check(&[m(5, 3, 10)], |t, v| {
            t.cross_entropy(v[0], &[0, 3, 4, 3], &[2, 0, 1, 1])
        });
    }

    #[test]
    fn cross_entropy_uniform_logits() {
        let mut tape = Tape::new();
        let x = tape.constant(DenseMatrix::zeros(2, 4));
        let l = tape.cross_entropy(x, &[0, 1], &[0, 3]).unwrap();
        assert!((tape.scalar(l) - 4f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn fd_pair_dot_and_bce() {
        check(&[m(4, 3, 11)], |t, v| {
            let s = t.pair_dot(v[0], &[(0, 1), (2, 2), (3, 0), (1, 0)])?;
            t.bce_with_logits(s, &[1.0, 0.0, 1.0, 0.0])
        });
    }
}
