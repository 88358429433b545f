//! Dense spectral tools at desk scale: Jacobi eigendecomposition, the graph
//! Fourier transform, exact Laplacian smoothing, and a brute-force Sylvester
//! solver used as the reference for the ADMM filter.

use crate::dense::{Cholesky, DenseMatrix, Lu};
use crate::error::{Error, Result};
use crate::graph::SparseMatrix;

/// Largest matrix [`symmetric_eig`] accepts.
pub const EIG_LIMIT: usize = 2000;
/// Largest system the dense smoothers factor.
pub const DENSE_SOLVE_LIMIT: usize = 5000;
/// Largest `n·d` the Kronecker oracle accepts (≈128 MB of matrix).
pub const KRON_LIMIT: usize = 4096;

const JACOBI_MAX_SWEEPS: usize = 100;
const JACOBI_TOL: f64 = 1e-12;
const SYMMETRY_TOL: f64 = 1e-10;

#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Orthonormal columns, column `i` pairs with `eigenvalues[i]`.
    pub eigenvectors: DenseMatrix,
}

impl EigenDecomposition {
    /// `U diag(g(λ)) Uᵀ`
    pub fn reconstruct_with(&self, g: impl Fn(f64) -> f64) -> DenseMatrix {
        let u = &self.eigenvectors;
        let gl: Vec<f64> = self.eigenvalues.iter().map(|&l| g(l)).collect();
        let scaled = DenseMatrix::from_fn(u.rows(), u.cols(), |r, c| u[(r, c)] * gl[c]);
        scaled.matmul_t(u).expect("square factors")
    }

    pub fn reconstruct(&self) -> DenseMatrix {
        self.reconstruct_with(|l| l)
    }
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// Sweeps over all upper-triangular pairs until the off-diagonal Frobenius
/// norm drops below `1e-12 · ‖M‖_F` (at most 100 sweeps).
pub fn symmetric_eig(m: &DenseMatrix) -> Result<EigenDecomposition> {
    if !m.is_square() {
        return Err(Error::dims("symmetric_eig", "square", format!("{:?}", m.shape())));
    }
    let n = m.rows();
    if n > EIG_LIMIT {
        return Err(Error::SizeGuard {
            op: "symmetric_eig",
            size: n,
            limit: EIG_LIMIT,
        });
    }
    if !m.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::NotSymmetric("symmetric_eig"));
    }
    let mut a = m.clone();
    // symmetrize exactly so rotations stay consistent
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = v;
            a[(j, i)] = v;
        }
    }
    let mut v = DenseMatrix::identity(n);
    let target = JACOBI_TOL * m.frobenius_norm();

    for _sweep in 0..JACOBI_MAX_SWEEPS {
        if off_diagonal_norm(&a) <= target {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    let np = c * akp - s * akq;
                    let nq = s * akp + c * akq;
                    a[(k, p)] = np;
                    a[(p, k)] = np;
                    a[(k, q)] = nq;
                    a[(q, k)] = nq;
                }
                a[(p, p)] -= t * apq;
                a[(q, q)] += t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let eigenvalues = order.iter().map(|&i| a[(i, i)]).collect();
    let eigenvectors = v.select_columns(&order);
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn off_diagonal_norm(a: &DenseMatrix) -> f64 {
    let n = a.rows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Graph Fourier transform `Uᵀ x`.
pub fn gft(u: &DenseMatrix, x: &[f64]) -> Result<Vec<f64>> {
    if u.rows() != x.len() {
        return Err(Error::dims("gft", u.rows(), x.len()));
    }
    let xm = DenseMatrix::column_vector(x);
    Ok(u.t_matmul(&xm)?.into_vec())
}

/// Inverse transform `U x̂`.
pub fn igft(u: &DenseMatrix, x_hat: &[f64]) -> Result<Vec<f64>> {
    if u.cols() != x_hat.len() {
        return Err(Error::dims("igft", u.cols(), x_hat.len()));
    }
    let xm = DenseMatrix::column_vector(x_hat);
    Ok(u.matmul(&xm)?.into_vec())
}

/// `U g(Λ) Uᵀ X` for a Laplacian `L = U Λ Uᵀ`.
pub fn apply_spectral_filter(l: &SparseMatrix, g: impl Fn(f64) -> f64, x: &DenseMatrix) -> Result<DenseMatrix> {
    if l.n_cols() != x.rows() {
        return Err(Error::dims("apply_spectral_filter", l.n_cols(), x.rows()));
    }
    let eig = symmetric_eig(&l.to_dense())?;
    let u = &eig.eigenvectors;
    let mut coeffs = u.t_matmul(x)?;
    for (i, lam) in eig.eigenvalues.iter().enumerate() {
        let gi = g(*lam);
        coeffs.row_mut(i).iter_mut().for_each(|v| *v *= gi);
    }
    u.matmul(&coeffs)
}

/// Factors `alpha · I + beta · L` densely.
pub(crate) fn factor_shifted(l: &SparseMatrix, alpha: f64, beta: f64) -> Result<Cholesky> {
    let n = l.n_rows();
    if l.n_cols() != n {
        return Err(Error::dims("factor_shifted", "square", format!("{}x{}", n, l.n_cols())));
    }
    if n > DENSE_SOLVE_LIMIT {
        return Err(Error::SizeGuard {
            op: "dense solve",
            size: n,
            limit: DENSE_SOLVE_LIMIT,
        });
    }
    Cholesky::factor(&l.scaled_plus_identity(alpha, beta).to_dense())
}

/// Laplacian smoothing `(I + λL)⁻¹ F`, the minimizer of
/// `‖Y − F‖²_F + λ·trace(Yᵀ L Y)`.
pub fn exact_smoother(l: &SparseMatrix, lambda: f64, f: &DenseMatrix) -> Result<DenseMatrix> {
    if lambda < 0.0 {
        return Err(Error::InvalidArgument(format!("lambda must be >= 0, got {lambda}")));
    }
    if l.n_cols() != f.rows() {
        return Err(Error::dims("exact_smoother", l.n_cols(), f.rows()));
    }
    factor_shifted(l, 1.0, lambda)?.solve(f)
}

/// Solves `(I + λ₁L₁) Y + λ₂ Y L₂ = F` through the `(nd)×(nd)` Kronecker
/// system `(I ⊗ (I + λ₁L₁) + λ₂ L₂ᵀ ⊗ I) vec(Y) = vec(F)`.
pub fn sylvester_oracle(
    l1: &SparseMatrix,
    l2: &DenseMatrix,
    lambda1: f64,
    lambda2: f64,
    f: &DenseMatrix,
) -> Result<DenseMatrix> {
    let (n, d) = f.shape();
    if l1.n_rows() != n || l1.n_cols() != n {
        return Err(Error::dims("sylvester_oracle L1", n, l1.n_rows()));
    }
    if l2.rows() != d || l2.cols() != d {
        return Err(Error::dims("sylvester_oracle L2", d, format!("{:?}", l2.shape())));
    }
    let nd = n * d;
    if nd > KRON_LIMIT {
        return Err(Error::SizeGuard {
            op: "sylvester_oracle",
            size: nd,
            limit: KRON_LIMIT,
        });
    }
    if !l1.is_symmetric(SYMMETRY_TOL) || !l2.is_symmetric(SYMMETRY_TOL) {
        return Err(Error::NotSymmetric("sylvester_oracle"));
    }
    let a = l1.scaled_plus_identity(1.0, lambda1).to_dense();
    // column-stacked vec: index(i, j) = j·n + i
    let mut k = DenseMatrix::zeros(nd, nd);
    for j in 0..d {
        for i in 0..n {
            let row = j * n + i;
            for c in 0..n {
                k[(row, j * n + c)] += a[(i, c)];
            }
            for l in 0..d {
                k[(row, l * n + i)] += lambda2 * l2[(l, j)];
            }
        }
    }
    let mut rhs = DenseMatrix::zeros(nd, 1);
    for j in 0..d {
        for i in 0..n {
            rhs[(j * n + i, 0)] = f[(i, j)];
        }
    }
    let sol = Lu::factor(&k)
        .map_err(|_| Error::Singular("sylvester_oracle"))?
        .solve(&rhs)?;
    Ok(DenseMatrix::from_fn(n, d, |i, j| sol[(j * n + i, 0)]))
}

/// Frobenius norm of `Y − F + λ₁L₁Y + λ₂YL₂`.
pub fn sylvester_residual(
    l1: &SparseMatrix,
    l2: &DenseMatrix,
    lambda1: f64,
    lambda2: f64,
    f: &DenseMatrix,
    y: &DenseMatrix,
) -> Result<f64> {
    let l1y = crate::graph::spmm(l1, y)?;
    let yl2 = y.matmul(l2)?;
    let mut r = y.sub(f);
    r.axpy(lambda1, &l1y);
    r.axpy(lambda2, &yl2);
    Ok(r.frobenius_norm())
}
