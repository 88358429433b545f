//! Bi-directional low-pass filtering by ADMM.
//!
//! The joint smoothing problem
//!
//! ```text
//! min_Y ‖Y − F‖²_F + λ₁ trace(Yᵀ L₁ Y) + λ₂ trace(Y L₂ Yᵀ)
//! ```
//!
//! is split into a column (node graph) sub-problem in `Y₁` and a row (feature
//! graph) sub-problem in `Y₂` coupled by `Y₁ = Y₂`. With `c₁ = 2λ₁/(1+p)` and
//! `c₂ = 2λ₂/(1+p)` one iteration is
//!
//! ```text
//! Y₁ ← (1/(1+p)) (I + c₁L₁)⁻¹ (F + pY₂ + Z)
//! Y₂ ← (1/(1+p)) (F + pY₁ − Z) (I + c₂L₂)⁻¹
//! Z  ← Z + p(Y₂ − Y₁)
//! ```
//!
//! The Taylor variant replaces each inverse by `I − cL`. Iteration starts from
//! `Y₁ = Y₂ = F`, `Z = 0`, and the filter output is `(Y₁ + Y₂)/2`.

use std::sync::atomic::{AtomicBool, Ordering};

use log::{log, Level};

use crate::dense::{Cholesky, DenseMatrix, Lu};
use crate::error::{Error, Result};
use crate::graph::{spmm, SparseMatrix};
use crate::spectral::factor_shifted;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FilterVariant {
    /// Exact sub-problem solves.
    Exact,
    /// First-order Taylor expansion of each inverse.
    Taylor,
}

impl std::str::FromStr for FilterVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(FilterVariant::Exact),
            "taylor" => Ok(FilterVariant::Taylor),
            other => Err(Error::InvalidArgument(format!("unknown filter variant {other:?}"))),
        }
    }
}

impl std::fmt::Display for FilterVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FilterVariant::Exact => "exact",
            FilterVariant::Taylor => "taylor",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FilterParams {
    pub lambda1: f64,
    pub lambda2: f64,
    /// ADMM penalty.
    pub p: f64,
    /// Number of iterations.
    pub k: usize,
    pub variant: FilterVariant,
}

/// Upper bound on the normalized-Laplacian spectrum used for the Taylor check.
const LAPLACIAN_SPECTRAL_BOUND: f64 = 2.0;

static RADIUS_WARNED: AtomicBool = AtomicBool::new(false);

impl FilterParams {
    pub fn new(lambda1: f64, lambda2: f64, p: f64, k: usize, variant: FilterVariant) -> Self {
        FilterParams {
            lambda1,
            lambda2,
            p,
            k,
            variant,
        }
    }

    /// Builds from the shared step `λ = 2λ₁/(1+p) = 2λ₂/(1+p)`.
    pub fn from_step(lambda: f64, p: f64, k: usize, variant: FilterVariant) -> Self {
        let l = lambda * (1.0 + p) / 2.0;
        Self::new(l, l, p, k, variant)
    }

    /// `2λ₁/(1+p)`
    pub fn column_step(&self) -> f64 {
        2.0 * self.lambda1 / (1.0 + self.p)
    }

    /// `2λ₂/(1+p)`
    pub fn row_step(&self) -> f64 {
        2.0 * self.lambda2 / (1.0 + self.p)
    }

    /// Largest `c·λ_max` over both directions, assuming normalized Laplacians.
    pub fn taylor_radius(&self) -> f64 {
        self.column_step().max(self.row_step()) * LAPLACIAN_SPECTRAL_BOUND
    }

    /// Hard range checks. The Taylor spectral-radius condition only warns:
    /// commonly used settings exceed it and still train fine.
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda1 >= 0.0 && self.lambda2 >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "lambda1 and lambda2 must be >= 0, got {} and {}",
                self.lambda1, self.lambda2
            )));
        }
        if !(self.p > 0.0) || !self.p.is_finite() {
            return Err(Error::InvalidArgument(format!("p must be > 0, got {}", self.p)));
        }
        if self.k == 0 {
            return Err(Error::InvalidArgument("k must be >= 1".into()));
        }
        if self.variant == FilterVariant::Taylor && self.taylor_radius() > 1.0 {
            // once per process; every filter call validates
            let level = if RADIUS_WARNED.swap(true, Ordering::Relaxed) {
                Level::Debug
            } else {
                Level::Warn
            };
            log!(
                level,
                "taylor filter step times spectral bound is {:.3} > 1; the expansion is outside its convergent range",
                self.taylor_radius()
            );
        }
        Ok(())
    }
}

/// Per-iteration state of one [`admm_bifilter`] call.
#[derive(Clone, Debug, Default)]
pub struct AdmmTrace {
    pub y1: Vec<DenseMatrix>,
    pub y2: Vec<DenseMatrix>,
    pub z: Vec<DenseMatrix>,
    /// `‖Y₂ − Y₁‖_F` after each iteration.
    pub primal_residual: Vec<f64>,
}

impl AdmmTrace {
    pub fn len(&self) -> usize {
        self.primal_residual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primal_residual.is_empty()
    }
}

enum ColumnStep {
    Solve(Cholesky),
    Taylor(SparseMatrix),
}

enum RowStep {
    Solve(Lu),
    Taylor(DenseMatrix),
}

fn check_shapes(f: &DenseMatrix, l1: &SparseMatrix, l2: &DenseMatrix) -> Result<()> {
    let (n, d) = f.shape();
    if l1.n_rows() != n || l1.n_cols() != n {
        return Err(Error::dims(
            "bifilter L1",
            format!("{n}x{n}"),
            format!("{}x{}", l1.n_rows(), l1.n_cols()),
        ));
    }
    if l2.shape() != (d, d) {
        return Err(Error::dims(
            "bifilter L2",
            format!("{d}x{d}"),
            format!("{}x{}", l2.rows(), l2.cols()),
        ));
    }
    Ok(())
}

/// Runs `params.k` ADMM iterations and returns `(Y₁ + Y₂)/2` with the trace.
pub fn admm_bifilter(
    f: &DenseMatrix,
    l1: &SparseMatrix,
    l2: &DenseMatrix,
    params: &FilterParams,
) -> Result<(DenseMatrix, AdmmTrace)> {
    check_shapes(f, l1, l2)?;
    params.validate()?;
    let (c1, c2) = (params.column_step(), params.row_step());
    let p = params.p;
    let inv = 1.0 / (1.0 + p);

    // the column system is constant across iterations, so factor it once
    let column = match params.variant {
        FilterVariant::Exact => ColumnStep::Solve(factor_shifted(l1, 1.0, c1)?),
        FilterVariant::Taylor => ColumnStep::Taylor(l1.scaled_plus_identity(1.0, -c1)),
    };
    let d = l2.rows();
    let row = match params.variant {
        FilterVariant::Exact => {
            let mut b = l2.scale(c2);
            for i in 0..d {
                b[(i, i)] += 1.0;
            }
            RowStep::Solve(Lu::factor(&b)?)
        }
        FilterVariant::Taylor => {
            let mut t = l2.scale(-c2);
            for i in 0..d {
                t[(i, i)] += 1.0;
            }
            RowStep::Taylor(t)
        }
    };

    let mut y1 = f.clone();
    let mut y2 = f.clone();
    let mut z = DenseMatrix::zeros(f.rows(), f.cols());
    let mut trace = AdmmTrace::default();

    for it in 0..params.k {
        let mut rhs = f.clone();
        rhs.axpy(p, &y2);
        rhs.axpy(1.0, &z);
        y1 = match &column {
            ColumnStep::Solve(ch) => ch.solve(&rhs)?,
            ColumnStep::Taylor(s) => spmm(s, &rhs)?,
        };
        y1.scale_mut(inv);

        let mut rhs = f.clone();
        rhs.axpy(p, &y1);
        rhs.axpy(-1.0, &z);
        y2 = match &row {
            // X B⁻¹ = (B⁻ᵀ Xᵀ)ᵀ
            RowStep::Solve(lu) => lu.solve_transposed(&rhs.transpose())?.transpose(),
            RowStep::Taylor(t) => rhs.matmul(t)?,
        };
        y2.scale_mut(inv);

        let gap = y2.sub(&y1);
        z.axpy(p, &gap);

        if !(y1.is_finite() && y2.is_finite() && z.is_finite()) {
            return Err(Error::NonFinite {
                what: "admm_bifilter",
                iteration: it,
            });
        }
        trace.primal_residual.push(gap.frobenius_norm());
        trace.y1.push(y1.clone());
        trace.y2.push(y2.clone());
        trace.z.push(z.clone());
    }

    let mut y = y1.add(&y2);
    y.scale_mut(0.5);
    Ok((y, trace))
}

/// Single Taylor iteration in closed form:
///
/// ```text
/// Y₁ = (I − c₁L₁) F
/// Y₂ = (I − p·c₁/(1+p) L₁) F (I − c₂L₂)
/// ```
pub fn admm_one_step_closed_form(
    f: &DenseMatrix,
    l1: &SparseMatrix,
    l2: &DenseMatrix,
    params: &FilterParams,
) -> Result<(DenseMatrix, DenseMatrix)> {
    check_shapes(f, l1, l2)?;
    let (c1, c2, p) = (params.column_step(), params.row_step(), params.p);
    let y1 = spmm(&l1.scaled_plus_identity(1.0, -c1), f)?;
    let left = spmm(&l1.scaled_plus_identity(1.0, -p * c1 / (1.0 + p)), f)?;
    let d = l2.rows();
    let mut right = l2.scale(-c2);
    for i in 0..d {
        right[(i, i)] += 1.0;
    }
    let y2 = left.matmul(&right)?;
    Ok((y1, y2))
}

/// The `L₂ = I` special case: `((1+λ₂)I + λ₁L₁)⁻¹ F`.
pub fn degenerate_filter(f: &DenseMatrix, l1: &SparseMatrix, lambda1: f64, lambda2: f64) -> Result<DenseMatrix> {
    if l1.n_cols() != f.rows() {
        return Err(Error::dims("degenerate_filter", l1.n_cols(), f.rows()));
    }
    factor_shifted(l1, 1.0 + lambda2, lambda1)?.solve(f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{normalized_laplacian, Graph};

    fn fixture() -> (DenseMatrix, SparseMatrix, DenseMatrix) {
        let g = Graph::from_unit_edges(4, &[(0, 1), (1, 2), (2, 3), (0, 3), (0, 2)]).unwrap();
        let l1 = normalized_laplacian(&g);
        let fg = Graph::from_unit_edges(3, &[(0, 1), (1, 2)]).unwrap();
        let l2 = normalized_laplacian(&fg).to_dense();
        let f = DenseMatrix::from_fn(4, 3, |i, j| ((i * 3 + j) as f64 * 0.37).sin());
        (f, l1, l2)
    }

    #[test]
    fn zero_lambda_returns_input() {
        let (f, l1, l2) = fixture();
        for variant in [FilterVariant::Exact, FilterVariant::Taylor] {
            for k in [1, 3] {
                let params = FilterParams::new(0.0, 0.0, 2.0, k, variant);
                let (y, trace) = admm_bifilter(&f, &l1, &l2, &params).unwrap();
                assert!(y.max_abs_diff(&f) < 1e-15);
                assert!(trace.z.iter().all(|z| z.max_abs() == 0.0));
                assert_eq!(trace.len(), k);
            }
        }
    }

    #[test]
    fn zero_signal_stays_zero() {
        let (f, l1, l2) = fixture();
        let zero = DenseMatrix::zeros(f.rows(), f.cols());
        let params = FilterParams::new(1.0, 1.0, 2.0, 5, FilterVariant::Exact);
        let (y, _) = admm_bifilter(&zero, &l1, &l2, &params).unwrap();
        assert_eq!(y.max_abs(), 0.0);
    }

    #[test]
    fn closed_form_special_cases() {
        let (f, l1, l2) = fixture();
        let params = FilterParams::new(0.0, 0.8, 2.0, 1, FilterVariant::Taylor);
        let (y1, y2) = admm_one_step_closed_form(&f, &l1, &l2, &params).unwrap();
        assert!(y1.max_abs_diff(&f) < 1e-15);
        let mut right = l2.scale(-params.row_step());
        for i in 0..3 {
            right[(i, i)] += 1.0;
        }
        assert!(y2.max_abs_diff(&f.matmul(&right).unwrap()) < 1e-15);

        let zl1 = SparseMatrix::zeros(4, 4);
        let zl2 = DenseMatrix::zeros(3, 3);
        let params = FilterParams::new(1.3, 0.6, 2.0, 1, FilterVariant::Taylor);
        let (y1, y2) = admm_one_step_closed_form(&f, &zl1, &zl2, &params).unwrap();
        assert_eq!(y1, f);
        assert_eq!(y2, f);
    }

    #[test]
    fn degenerate_filter_limits() {
        let (f, l1, _) = fixture();
        let a = degenerate_filter(&f, &l1, 0.9, 0.0).unwrap();
        let b = crate::spectral::exact_smoother(&l1, 0.9, &f).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-14);
        let c = degenerate_filter(&f, &l1, 0.0, 1.5).unwrap();
        assert!(c.max_abs_diff(&f.scale(1.0 / 2.5)) < 1e-15);
    }

    #[test]
    fn shape_and_parameter_errors() {
        let (f, l1, l2) = fixture();
        let bad_l2 = DenseMatrix::identity(2);
        let params = FilterParams::new(1.0, 1.0, 2.0, 2, FilterVariant::Taylor);
        assert!(matches!(
            admm_bifilter(&f, &l1, &bad_l2, &params),
            Err(Error::DimensionMismatch { .. })
        ));
        let zero_k = FilterParams { k: 0, ..params };
        assert!(admm_bifilter(&f, &l1, &l2, &zero_k).is_err());
        let neg_p = FilterParams { p: -1.0, ..params };
        assert!(admm_bifilter(&f, &l1, &l2, &neg_p).is_err());
    }

    #[test]
    fn non_finite_iteration_is_reported() {
        let (f, l1, l2) = fixture();
        // a huge Taylor step makes the iteration blow up quickly
        let params = FilterParams::new(1e200, 1e200, 1.0, 10, FilterVariant::Taylor);
        match admm_bifilter(&f, &l1, &l2, &params) {
            Err(Error::NonFinite { iteration, .. }) => assert!(iteration < 10),
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }

    #[test]
    fn step_mapping() {
        let params = FilterParams::from_step(1.8, 3.0, 2, FilterVariant::Taylor);
        assert!((params.lambda1 - 3.6).abs() < 1e-15);
        assert!((params.column_step() - 1.8).abs() < 1e-15);
        assert!((params.row_step() - 1.8).abs() < 1e-15);
        assert!(params.taylor_radius() > 1.0);
        // only a warning
        assert!(params.validate().is_ok());
    }
}
