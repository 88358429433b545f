//! Row-major dense matrices and the direct solvers used at desk scale.
//!
//! Products go through `matrixmultiply::dgemm`; everything else is plain
//! loops over the backing slice. Factorizations are unblocked: Cholesky for
//! symmetric positive definite systems, LU with partial pivoting for the rest.

use std::fmt;
use std::ops::{Index, IndexMut};

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for DenseMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "DenseMatrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows.min(8) {
            write!(f, "  ")?;
            for c in 0..self.cols.min(8) {
                write!(f, "{:>10.4} ", self[(r, c)])?;
            }
            writeln!(f, "{}", if self.cols > 8 { "..." } else { "" })?;
        }
        if self.rows > 8 {
            writeln!(f, "  ...")?;
        }
        write!(f, "]")
    }
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::dims("DenseMatrix::from_vec", rows * cols, data.len()));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    /// Builds a matrix from nested rows. Panics on ragged input; meant for
    /// literals in tests and examples.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let n = rows.len();
        let m = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(n * m);
        for r in rows {
            assert_eq!(r.as_ref().len(), m, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        DenseMatrix { rows: n, cols: m, data }
    }

    pub fn column_vector(values: &[f64]) -> Self {
        DenseMatrix {
            rows: values.len(),
            cols: 1,
            data: values.to_vec(),
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        DenseMatrix { rows, cols, data }
    }

    pub fn diagonal(values: &[f64]) -> Self {
        let n = values.len();
        let mut m = Self::zeros(n, n);
        for (i, v) in values.iter().enumerate() {
            m.data[i * n + i] = *v;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.data[r * self.cols + c]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!(self.shape(), other.shape(), "zip_map shape mismatch");
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn scale_mut(&mut self, s: f64) {
        self.data.iter_mut().for_each(|v| *v *= s);
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn hadamard(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Self) {
        assert_eq!(self.shape(), other.shape(), "axpy shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols))
            .map(|i| self.data[i * self.cols + i])
            .sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// `‖self − other‖_F / max(‖other‖_F, tiny)`
    pub fn relative_error(&self, reference: &Self) -> f64 {
        let diff = self.sub(reference).frobenius_norm();
        diff / reference.frobenius_norm().max(f64::MIN_POSITIVE)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape(), other.shape(), "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        if !self.is_square() {
            return false;
        }
        let n = self.rows;
        let scale = self.max_abs().max(1.0);
        for i in 0..n {
            for j in (i + 1)..n {
                if (self.data[i * n + j] - self.data[j * n + i]).abs() > tol * scale {
                    return false;
                }
            }
        }
        true
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut data = Vec::with_capacity(rows.len() * self.cols);
        for &r in rows {
            data.extend_from_slice(self.row(r));
        }
        DenseMatrix {
            rows: rows.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Self {
        DenseMatrix::from_fn(self.rows, cols.len(), |r, c| self[(r, cols[c])])
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        gemm(self, false, other, false)
    }

    /// `selfᵀ · other` without materializing the transpose.
    pub fn t_matmul(&self, other: &Self) -> Result<Self> {
        gemm(self, true, other, false)
    }

    /// `self · otherᵀ` without materializing the transpose.
    pub fn matmul_t(&self, other: &Self) -> Result<Self> {
        gemm(self, false, other, true)
    }
}

fn gemm(a: &DenseMatrix, ta: bool, b: &DenseMatrix, tb: bool) -> Result<DenseMatrix> {
    let (m, ka) = if ta { (a.cols, a.rows) } else { (a.rows, a.cols) };
    let (kb, n) = if tb { (b.cols, b.rows) } else { (b.rows, b.cols) };
    if ka != kb {
        return Err(Error::dims("matmul", format!("inner dimension {ka}"), format!("{kb}")));
    }
    let mut out = DenseMatrix::zeros(m, n);
    if m == 0 || n == 0 || ka == 0 {
        return Ok(out);
    }
    let (rsa, csa) = if ta { (1, a.cols as isize) } else { (a.cols as isize, 1) };
    let (rsb, csb) = if tb { (1, b.cols as isize) } else { (b.cols as isize, 1) };
    // SAFETY: strides and extents describe the live backing buffers exactly.
    unsafe {
        matrixmultiply::dgemm(
            m,
            ka,
            n,
            1.0,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            0.0,
            out.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
    Ok(out)
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &self.data[r * self.cols + c]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut f64 {
        debug_assert!(r < self.rows && c < self.cols);
        &mut self.data[r * self.cols + c]
    }
}

/// Lower-triangular Cholesky factor `M = G Gᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    n: usize,
    lower: Vec<f64>,
}

impl Cholesky {
    pub fn factor(m: &DenseMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dims("cholesky", "square", format!("{:?}", m.shape())));
        }
        let n = m.rows;
        let mut g = m.data.clone();
        for j in 0..n {
            let mut diag = g[j * n + j];
            for k in 0..j {
                diag -= g[j * n + k] * g[j * n + k];
            }
            if !(diag > 0.0) || !diag.is_finite() {
                return Err(Error::Singular("cholesky"));
            }
            let diag = diag.sqrt();
            g[j * n + j] = diag;
            for i in (j + 1)..n {
                let mut s = g[i * n + j];
                for k in 0..j {
                    s -= g[i * n + k] * g[j * n + k];
                }
                g[i * n + j] = s / diag;
            }
            for k in (j + 1)..n {
                g[j * n + k] = 0.0;
            }
        }
        Ok(Cholesky { n, lower: g })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `M X = B` column by column.
    pub fn solve(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        let n = self.n;
        if b.rows != n {
            return Err(Error::dims("cholesky solve", n, b.rows));
        }
        let m = b.cols;
        let mut x = b.clone();
        let g = &self.lower;
        // Forward substitution on all right-hand sides at once (row-major friendly).
        for i in 0..n {
            for k in 0..i {
                let gik = g[i * n + k];
                if gik != 0.0 {
                    let (head, tail) = x.data.split_at_mut(i * m);
                    let src = &head[k * m..(k + 1) * m];
                    for (t, s) in tail[..m].iter_mut().zip(src) {
                        *t -= gik * s;
                    }
                }
            }
            let d = g[i * n + i];
            x.data[i * m..(i + 1) * m].iter_mut().for_each(|v| *v /= d);
        }
        // Back substitution with Gᵀ.
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let gki = g[k * n + i];
                if gki != 0.0 {
                    let (head, tail) = x.data.split_at_mut(k * m);
                    let dst = &mut head[i * m..(i + 1) * m];
                    for (t, s) in dst.iter_mut().zip(&tail[..m]) {
                        *t -= gki * s;
                    }
                }
            }
            let d = g[i * n + i];
            x.data[i * m..(i + 1) * m].iter_mut().for_each(|v| *v /= d);
        }
        Ok(x)
    }
}

/// LU factorization with partial pivoting, `P M = L U`.
#[derive(Clone, Debug)]
pub struct Lu {
    n: usize,
    lu: Vec<f64>,
    perm: Vec<usize>,
}

impl Lu {
    pub fn factor(m: &DenseMatrix) -> Result<Self> {
        if !m.is_square() {
            return Err(Error::dims("lu", "square", format!("{:?}", m.shape())));
        }
        let n = m.rows;
        let mut a = m.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let scale = m.max_abs().max(f64::MIN_POSITIVE);
        for k in 0..n {
            let mut piv = k;
            let mut best = a[k * n + k].abs();
            for i in (k + 1)..n {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    piv = i;
                }
            }
            if best <= scale * 1e-14 || !best.is_finite() {
                return Err(Error::Singular("lu"));
            }
            if piv != k {
                for c in 0..n {
                    a.swap(k * n + c, piv * n + c);
                }
                perm.swap(k, piv);
            }
            let pivot = a[k * n + k];
            for i in (k + 1)..n {
                let f = a[i * n + k] / pivot;
                a[i * n + k] = f;
                if f != 0.0 {
                    for c in (k + 1)..n {
                        a[i * n + c] -= f * a[k * n + c];
                    }
                }
            }
        }
        Ok(Lu { n, lu: a, perm })
    }

    pub fn solve(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        let n = self.n;
        if b.rows != n {
            return Err(Error::dims("lu solve", n, b.rows));
        }
        let m = b.cols;
        let mut x = b.select_rows(&self.perm);
        let a = &self.lu;
        for i in 0..n {
            for k in 0..i {
                let f = a[i * n + k];
                if f != 0.0 {
                    let (head, tail) = x.data.split_at_mut(i * m);
                    for (t, s) in tail[..m].iter_mut().zip(&head[k * m..(k + 1) * m]) {
                        *t -= f * s;
                    }
                }
            }
        }
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let f = a[i * n + k];
                if f != 0.0 {
                    let (head, tail) = x.data.split_at_mut(k * m);
                    let dst = &mut head[i * m..(i + 1) * m];
                    for (t, s) in dst.iter_mut().zip(&tail[..m]) {
                        *t -= f * s;
                    }
                }
            }
            let d = a[i * n + i];
            x.data[i * m..(i + 1) * m].iter_mut().for_each(|v| *v /= d);
        }
        Ok(x)
    }

    /// Solves `Xᵀ`-style systems `X M = B` via `Mᵀ Xᵀ = Bᵀ`.
    pub fn solve_transposed(&self, b: &DenseMatrix) -> Result<DenseMatrix> {
        // Uᵀ Lᵀ P y = b
        let n = self.n;
        if b.rows != n {
            return Err(Error::dims("lu solve_transposed", n, b.rows));
        }
        let m = b.cols;
        let mut x = b.clone();
        let a = &self.lu;
        // Uᵀ z = b (lower triangular with U's diagonal)
        for i in 0..n {
            for k in 0..i {
                let f = a[k * n + i];
                if f != 0.0 {
                    let (head, tail) = x.data.split_at_mut(i * m);
                    for (t, s) in tail[..m].iter_mut().zip(&head[k * m..(k + 1) * m]) {
                        *t -= f * s;
                    }
                }
            }
            let d = a[i * n + i];
            x.data[i * m..(i + 1) * m].iter_mut().for_each(|v| *v /= d);
        }
        // Lᵀ w = z (unit upper)
        for i in (0..n).rev() {
            for k in (i + 1)..n {
                let f = a[k * n + i];
                if f != 0.0 {
                    let (head, tail) = x.data.split_at_mut(k * m);
                    let dst = &mut head[i * m..(i + 1) * m];
                    for (t, s) in dst.iter_mut().zip(&tail[..m]) {
                        *t -= f * s;
                    }
                }
            }
        }
        // undo the row permutation: y[perm[i]] = w[i]
        let mut out = DenseMatrix::zeros(n, m);
        for (i, &p) in self.perm.iter().enumerate() {
            out.row_mut(p).copy_from_slice(x.row(i));
        }
        Ok(out)
    }
}
