//! Independent oracle comparisons for the filter, the spectral helpers, the
//! autodiff tape and the model.
//!
//! The ADMM solver is injected so a deliberately broken implementation can
//! be shown to fail the Sylvester comparison.

use std::sync::Arc;

use bifilter::autodiff::{grad_check, Tape, Var};
use bifilter::dense::Cholesky;
use bifilter::filter::{admm_one_step_closed_form, degenerate_filter};
use bifilter::graph::{laplacian, normalized_laplacian, smoothness, spmm};
use bifilter::model::{forward, learnable_l2, Architecture, L2Mode, LayerVars, Mode, ModelConfig, Propagation};
use bifilter::rng::{stream_rng, Stream};
use bifilter::spectral::{apply_spectral_filter, exact_smoother, gft, igft, sylvester_oracle, symmetric_eig};
use bifilter::{admm_bifilter, DenseMatrix, FilterParams, FilterVariant, Graph, SparseMatrix};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `(F, L₁, L₂, params) → Y`
pub type AdmmFn<'a> =
    dyn Fn(&DenseMatrix, &SparseMatrix, &DenseMatrix, &FilterParams) -> bifilter::Result<DenseMatrix> + 'a;

#[derive(Clone, Debug, PartialEq)]
pub struct OracleCheck {
    pub family: &'static str,
    pub name: String,
    /// Worst error over the instances; `inf` if the check errored.
    pub residual: f64,
    pub tolerance: f64,
}

impl OracleCheck {
    pub fn passed(&self) -> bool {
        self.residual <= self.tolerance
    }
}

fn check(family: &'static str, name: &str, tolerance: f64, f: impl FnOnce() -> bifilter::Result<f64>) -> OracleCheck {
    let (residual, name) = match f() {
        Ok(r) if r.is_nan() => (f64::INFINITY, format!("{name} (NaN)")),
        Ok(r) => (r, name.to_string()),
        Err(e) => (f64::INFINITY, format!("{name} (error: {e})")),
    };
    OracleCheck {
        family,
        name,
        residual,
        tolerance,
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, Stream::Fixture)
}

fn random_matrix(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
}

fn random_graph(r: &mut ChaCha8Rng, n: usize, p: f64) -> bifilter::Result<Graph> {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if r.random::<f64>() < p {
                edges.push((u, v, r.random_range(0.5..2.0)));
            }
        }
    }
    Graph::from_edges(n, &edges)
}

/// The library's ADMM, returning only the filtered signal.
pub fn library_admm(
    f: &DenseMatrix,
    l1: &SparseMatrix,
    l2: &DenseMatrix,
    params: &FilterParams,
) -> bifilter::Result<DenseMatrix> {
    admm_bifilter(f, l1, l2, params).map(|(y, _)| y)
}

/// Exact ADMM, k = 500, p ∈ {1, 3, 8.5}, λ₁ = λ₂ ∈ {0.5, 1}, 20 instances
/// with n, d ≤ 8, against the Kronecker solve. Max relative Frobenius error.
pub fn sylvester_family(admm: &AdmmFn) -> OracleCheck {
    check("sylvester", "exact ADMM vs Kronecker solve", 1e-6, || {
        let mut r = rng(1);
        let mut worst: f64 = 0.0;
        for i in 0..20 {
            let p = [1.0, 3.0, 8.5][i % 3];
            let lambda = [0.5, 1.0][(i / 3) % 2];
            let (n, d) = (2 + i % 7, 1 + (3 * i) % 8);
            let l1 = normalized_laplacian(&random_graph(&mut r, n, 0.5)?);
            let l2 = normalized_laplacian(&random_graph(&mut r, d, 0.5)?).to_dense();
            let f = random_matrix(&mut r, n, d);
            let y = admm(
                &f,
                &l1,
                &l2,
                &FilterParams::new(lambda, lambda, p, 500, FilterVariant::Exact),
            )?;
            let want = sylvester_oracle(&l1, &l2, lambda, lambda, &f)?;
            worst = worst.max(y.relative_error(&want));
        }
        Ok(worst)
    })
}

/// Taylor ADMM with k = 1 against the closed forms on 50 instances.
pub fn one_step_family(admm: &AdmmFn) -> OracleCheck {
    check("one_step", "Taylor k=1 vs closed form", 1e-12, || {
        let mut r = rng(2);
        let mut worst: f64 = 0.0;
        for i in 0..50 {
            let (n, d) = (2 + i % 7, 1 + (5 * i) % 6);
            let l1 = normalized_laplacian(&random_graph(&mut r, n, 0.5)?);
            let l2 = normalized_laplacian(&random_graph(&mut r, d, 0.6)?).to_dense();
            let f = random_matrix(&mut r, n, d);
            let params = FilterParams::new(
                r.random_range(0.0..2.0),
                r.random_range(0.0..2.0),
                r.random_range(0.5..9.0),
                1,
                FilterVariant::Taylor,
            );
            let y = admm(&f, &l1, &l2, &params)?;
            let (y1, y2) = admm_one_step_closed_form(&f, &l1, &l2, &params)?;
            worst = worst.max(y.max_abs_diff(&y1.add(&y2).scale(0.5)));
        }
        Ok(worst)
    })
}

/// Kronecker solve with `L₂ = I` against `((1+λ₂)I + λ₁L₁)⁻¹F`.
pub fn degeneration_family() -> OracleCheck {
    check("degeneration", "identity L2 vs single-direction filter", 1e-10, || {
        let mut r = rng(3);
        let mut worst: f64 = 0.0;
        for i in 0..20 {
            let (n, d) = (2 + i % 7, 1 + i % 6);
            let l1 = normalized_laplacian(&random_graph(&mut r, n, 0.5)?);
            let f = random_matrix(&mut r, n, d);
            let (a, b) = (r.random_range(0.0..3.0), r.random_range(0.0..3.0));
            let oracle = sylvester_oracle(&l1, &DenseMatrix::identity(d), a, b, &f)?;
            worst = worst.max(oracle.max_abs_diff(&degenerate_filter(&f, &l1, a, b)?));
        }
        Ok(worst)
    })
}

pub fn spectral_family() -> Vec<OracleCheck> {
    vec![
        check("spectral", "Jacobi reconstruction and orthonormality", 1e-8, || {
            let mut r = rng(4);
            let mut worst: f64 = 0.0;
            for n in 1..=10 {
                let m = random_matrix(&mut r, n, n);
                let s = m.add(&m.transpose());
                let eig = symmetric_eig(&s)?;
                let u = &eig.eigenvectors;
                let ortho = u.t_matmul(u)?.sub(&DenseMatrix::identity(n)).frobenius_norm();
                worst = worst.max(eig.reconstruct().relative_error(&s)).max(ortho);
                let x = random_matrix(&mut r, n, 1).into_vec();
                let back = igft(u, &gft(u, &x)?)?;
                worst = worst.max(back.iter().zip(&x).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
            }
            Ok(worst)
        }),
        check("spectral", "Cholesky smoother vs eigenbasis filter", 1e-10, || {
            let mut r = rng(5);
            let mut worst: f64 = 0.0;
            for n in 2..=9 {
                let l = normalized_laplacian(&random_graph(&mut r, n, 0.5)?);
                let f = random_matrix(&mut r, n, 3);
                let lambda = r.random_range(0.1..3.0);
                let spectral = apply_spectral_filter(&l, |x| 1.0 / (1.0 + lambda * x), &f)?;
                worst = worst.max(exact_smoother(&l, lambda, &f)?.max_abs_diff(&spectral));
            }
            Ok(worst)
        }),
    ]
}

pub fn graph_family() -> Vec<OracleCheck> {
    vec![
        check("graph", "smoothness vs pairwise differences", 1e-10, || {
            let mut r = rng(6);
            let mut worst: f64 = 0.0;
            for n in 2..=9 {
                let g = random_graph(&mut r, n, 0.5)?;
                let x = random_matrix(&mut r, n, 2);
                let mut direct = 0.0;
                for (u, v, w) in g.edges() {
                    direct += w * x.row(u).iter().zip(x.row(v)).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
                }
                let s = smoothness(&laplacian(&g), &x)?;
                worst = worst.max((s - direct).abs() / direct.abs().max(1.0));
            }
            Ok(worst)
        }),
        check("graph", "sparse product vs dense product", 1e-12, || {
            let mut r = rng(7);
            let mut worst: f64 = 0.0;
            for _ in 0..10 {
                let l = normalized_laplacian(&random_graph(&mut r, 6, 0.5)?);
                let x = random_matrix(&mut r, 6, 4);
                worst = worst.max(spmm(&l, &x)?.max_abs_diff(&l.to_dense().matmul(&x)?));
            }
            Ok(worst)
        }),
    ]
}

/// `sum(X ⊙ C)` for a fixed random `C`, so every entry of `X` matters.
fn probe(tape: &mut Tape, x: Var, seed: u64) -> bifilter::Result<Var> {
    let (rows, cols) = tape.value(x).shape();
    let c = tape.constant(random_matrix(&mut rng(seed), rows, cols));
    let m = tape.mul(x, c)?;
    Ok(tape.sum(m))
}

/// Central finite differences for every tape primitive.
pub fn autodiff_family() -> Vec<OracleCheck> {
    type Build = Box<dyn Fn(&mut Tape, &[Var]) -> bifilter::Result<Var>>;
    let mut r = rng(8);
    let a = random_matrix(&mut r, 4, 3);
    let b = random_matrix(&mut r, 3, 5);
    let a2 = random_matrix(&mut r, 4, 3);
    let sq = random_matrix(&mut r, 3, 3).add(&DenseMatrix::identity(3).scale(3.0));
    let l = Arc::new(normalized_laplacian(
        &random_graph(&mut r, 4, 0.6).expect("valid graph"),
    ));
    let chol = Arc::new(Cholesky::factor(&l.scaled_plus_identity(1.0, 0.7).to_dense()).expect("SPD"));

    let cases: Vec<(&str, Vec<DenseMatrix>, Build)> = vec![
        (
            "matmul",
            vec![a.clone(), b.clone()],
            Box::new(|t, v| {
                let m = t.matmul(v[0], v[1])?;
                probe(t, m, 1)
            }),
        ),
        (
            "sparse_left",
            vec![a.clone()],
            Box::new(move |t, v| {
                let m = t.sparse_left(&l, v[0])?;
                probe(t, m, 2)
            }),
        ),
        (
            "solve_left",
            vec![a.clone()],
            Box::new(move |t, v| {
                let m = t.solve_left(&chol, v[0])?;
                probe(t, m, 3)
            }),
        ),
        (
            "solve_right",
            vec![a.clone(), sq],
            Box::new(|t, v| {
                let m = t.solve_right(v[0], v[1])?;
                probe(t, m, 4)
            }),
        ),
        (
            "add/sub/mul/scale",
            vec![a.clone(), a2],
            Box::new(|t, v| {
                let s = t.add(v[0], v[1])?;
                let d = t.sub(s, v[1])?;
                let m = t.mul(d, v[1])?;
                let k = t.scale(m, -1.5);
                probe(t, k, 5)
            }),
        ),
        (
            "transpose",
            vec![a.clone()],
            Box::new(|t, v| {
                let m = t.transpose(v[0]);
                probe(t, m, 6)
            }),
        ),
        (
            "sigmoid/relu",
            vec![a.clone()],
            Box::new(|t, v| {
                let s = t.sigmoid(v[0]);
                let r = t.relu(v[0]);
                let m = t.add(s, r)?;
                probe(t, m, 7)
            }),
        ),
        (
            "row_softmax",
            vec![a.clone()],
            Box::new(|t, v| {
                let m = t.row_softmax(v[0]);
                probe(t, m, 8)
            }),
        ),
        (
            "rows/mean",
            vec![a.clone()],
            Box::new(|t, v| {
                let m = t.rows(v[0], &[2, 0, 2])?;
                let p = probe(t, m, 9)?;
                let q = t.mean(v[0]);
                t.add(p, q)
            }),
        ),
        ("abs_sum", vec![a.clone()], Box::new(|t, v| Ok(t.abs_sum(v[0])))),
        (
            "sym_normalize",
            vec![random_matrix(&mut r, 4, 4)],
            Box::new(|t, v| {
                let s = t.sigmoid(v[0]);
                let st = t.transpose(s);
                let w = t.add(s, st)?;
                let m = t.sym_normalize(w)?;
                probe(t, m, 10)
            }),
        ),
        (
            "cross_entropy",
            vec![a.clone()],
            Box::new(|t, v| t.cross_entropy(v[0], &[0, 1, 3], &[2, 0, 1])),
        ),
        (
            "pair_dot/bce",
            vec![a],
            Box::new(|t, v| {
                let s = t.pair_dot(v[0], &[(0, 1), (2, 3), (1, 3)])?;
                t.bce_with_logits(s, &[1.0, 0.0, 1.0])
            }),
        ),
    ];
    cases
        .into_iter()
        .map(|(name, params, build)| check("autodiff", name, 1e-6, || grad_check(&params, build)))
        .collect()
}

/// Gradient checks through the feature-graph construction and a full
/// two-layer model (10 nodes, 6 features, k = 2, learnable `L₂`).
pub fn model_family() -> Vec<OracleCheck> {
    let mut r = rng(9);
    let u0 = DenseMatrix::from_fn(6, 6, |i, j| if j > i { r.random_range(-1.0..1.0) } else { 0.0 });
    let probe_l2 = check("model", "learnable L2 construction", 1e-6, || {
        grad_check(std::slice::from_ref(&u0), |t, v| {
            let (l2, _) = bifilter::model::build_learnable_l2(t, v[0])?;
            probe(t, l2, 11)
        })
    });
    let full = check("model", "two-layer BiGCN loss", 1e-4, || {
        let g = random_graph(&mut r, 10, 0.35)?;
        let x = random_matrix(&mut r, 10, 6);
        let cfg = ModelConfig {
            layer_dims: vec![6, 4, 3],
            dropout: 0.0,
            l2_mode: L2Mode::Learnable,
            filter: FilterParams::from_step(1.8, 3.0, 2, FilterVariant::Taylor),
            l1_reg_weight: 1e-2,
            architecture: Architecture::BiGcn,
        };
        let prop = Propagation::new(normalized_laplacian(&g), &cfg, &x)?;
        let u1 = DenseMatrix::from_fn(4, 4, |i, j| if j > i { 0.3 * (i as f64 - j as f64) } else { 0.0 });
        let params = vec![random_matrix(&mut r, 6, 4), u0.clone(), random_matrix(&mut r, 4, 3), u1];
        grad_check(&params, |t, v| {
            let xv = t.constant(x.clone());
            let layers = [
                LayerVars { w: v[0], u: Some(v[1]) },
                LayerVars { w: v[2], u: Some(v[3]) },
            ];
            let out = forward(t, &layers, xv, &prop, &cfg, Mode::Eval)?;
            let mut loss = t.cross_entropy(out.output, &[0, 3, 5, 8], &[2, 0, 1, 1])?;
            for w2 in out.l2_weights {
                let pen = t.abs_sum(w2);
                let pen = t.scale(pen, cfg.l1_reg_weight);
                loss = t.add(loss, pen)?;
            }
            Ok(loss)
        })
    });
    let symmetric = check("model", "learnable L2 symmetric and PSD", 1e-10, || {
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let u = DenseMatrix::from_fn(5, 5, |i, j| if j > i { r.random_range(-4.0..4.0) } else { 0.0 });
            let l2 = learnable_l2(&u)?;
            let asym = l2.sub(&l2.transpose()).max_abs();
            let min_eig = symmetric_eig(&l2)?.eigenvalues[0];
            worst = worst.max(asym).max((-min_eig).max(0.0));
        }
        Ok(worst)
    });
    vec![probe_l2, full, symmetric]
}

/// Rayleigh quotient never increases under the exact smoother; residual is
/// the violation count over 100 random signals.
pub fn low_pass_family() -> OracleCheck {
    check("low_pass", "Rayleigh quotient is non-increasing", 0.0, || {
        let mut r = rng(10);
        let mut violations = 0usize;
        for i in 0..100 {
            let n = 3 + i % 8;
            let l = normalized_laplacian(&random_graph(&mut r, n, 0.45)?);
            let f = random_matrix(&mut r, n, 1);
            let y = exact_smoother(&l, r.random_range(0.05..4.0), &f)?;
            let rq = |v: &DenseMatrix| -> bifilter::Result<f64> {
                Ok(smoothness(&l, v)? / v.as_slice().iter().map(|x| x * x).sum::<f64>())
            };
            if rq(&y)? > rq(&f)? + 1e-12 {
                violations += 1;
            }
        }
        Ok(violations as f64)
    })
}

/// Every registered family, with `admm` standing in for the library solver.
pub fn oracle_check_with(admm: &AdmmFn) -> Vec<OracleCheck> {
    let mut out = vec![sylvester_family(admm), one_step_family(admm), degeneration_family()];
    out.extend(spectral_family());
    out.extend(graph_family());
    out.extend(autodiff_family());
    out.extend(model_family());
    out.push(low_pass_family());
    out
}

pub fn oracle_check() -> Vec<OracleCheck> {
    oracle_check_with(&library_admm)
}

pub fn format_report(checks: &[OracleCheck]) -> String {
    let mut s = String::new();
    for c in checks {
        s.push_str(&format!(
            "{} {:<13} {:<45} residual {:.3e} (tol {:.0e})\n",
            if c.passed() { "PASS" } else { "FAIL" },
            c.family,
            c.name,
            c.residual,
            c.tolerance
        ));
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    let mut families: Vec<&str> = checks.iter().map(|c| c.family).collect();
    families.dedup();
    s.push_str(&format!(
        "{} checks in {} families, {} failed\n",
        checks.len(),
        families.len(),
        failed
    ));
    s
}
