mod common;

use bifilter::graph::{laplacian, normalized_laplacian, smoothness, spmm};
use bifilter::spectral::{exact_smoother, gft, igft, symmetric_eig};
use bifilter::{DenseMatrix, SparseMatrix};
use common::{random_graph, random_matrix, rng};
use proptest::prelude::*;
use rand::Rng;

fn rayleigh(l: &SparseMatrix, y: &DenseMatrix) -> f64 {
    smoothness(l, y).unwrap() / y.as_slice().iter().map(|v| v * v).sum::<f64>()
}

fn objective(l: &SparseMatrix, lambda: f64, f: &DenseMatrix, y: &DenseMatrix) -> f64 {
    let fit: f64 = y.sub(f).as_slice().iter().map(|v| v * v).sum();
    fit + lambda * smoothness(l, y).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn laplacian_rows_sum_to_zero(n in 1usize..12, p in 0.0f64..1.0, seed: u64) {
        let g = random_graph(n, p, true, seed);
        let l = laplacian(&g);
        prop_assert!(l.is_symmetric(0.0));
        for s in l.row_sums() {
            prop_assert!(s.abs() < 1e-12);
        }
    }

    #[test]
    fn normalized_laplacian_is_psd(n in 1usize..12, p in 0.0f64..1.0, seed: u64) {
        let g = random_graph(n, p, true, seed);
        let l = normalized_laplacian(&g);
        prop_assert!(l.is_symmetric(1e-15));
        let mut r = rng(seed);
        for _ in 0..100 {
            let v = DenseMatrix::from_fn(n, 1, |_, _| r.random_range(-1.0..1.0));
            prop_assert!(smoothness(&l, &v).unwrap() >= -1e-10);
        }
        let eig = symmetric_eig(&l.to_dense()).unwrap();
        prop_assert!(eig.eigenvalues[0] > -1e-10);
        prop_assert!(*eig.eigenvalues.last().unwrap() < 2.0 + 1e-10);
    }

    #[test]
    fn smoothness_is_pairwise_difference_sum(n in 2usize..10, d in 1usize..4, seed: u64) {
        let g = random_graph(n, 0.5, true, seed);
        let x = random_matrix(n, d, seed);
        let mut direct = 0.0;
        for i in 0..n {
            for j in 0..n {
                let a = g.adjacency().get(i, j);
                let diff: f64 = x.row(i).iter().zip(x.row(j)).map(|(p, q)| (p - q).powi(2)).sum();
                direct += 0.5 * a * diff;
            }
        }
        let s = smoothness(&laplacian(&g), &x).unwrap();
        prop_assert!((s - direct).abs() <= 1e-10 * direct.abs().max(1.0));
    }

    #[test]
    fn spmm_matches_dense_product(rows in 1usize..9, inner in 1usize..9, cols in 1usize..5, seed: u64) {
        let mut r = rng(seed);
        let mut t = Vec::new();
        for i in 0..rows {
            for j in 0..inner {
                if r.random::<f64>() < 0.4 {
                    t.push((i, j, r.random_range(-2.0..2.0)));
                }
            }
        }
        let s = SparseMatrix::from_triplets(rows, inner, t).unwrap();
        let x = random_matrix(inner, cols, seed);
        let dense = s.to_dense().matmul(&x).unwrap();
        prop_assert!(spmm(&s, &x).unwrap().max_abs_diff(&dense) < 1e-12);
    }

    #[test]
    fn eig_reconstructs_and_gft_round_trips(n in 1usize..9, seed: u64) {
        let m = random_matrix(n, n, seed);
        let sym = m.add(&m.transpose());
        let eig = symmetric_eig(&sym).unwrap();
        prop_assert!(eig.reconstruct().sub(&sym).frobenius_norm() <= 1e-8 * sym.frobenius_norm().max(1e-300));
        let u = &eig.eigenvectors;
        let gram = u.t_matmul(u).unwrap();
        prop_assert!(gram.sub(&DenseMatrix::identity(n)).frobenius_norm() < 1e-8);
        prop_assert!(eig.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
        let x = random_matrix(n, 1, seed ^ 1).into_vec();
        let back = igft(u, &gft(u, &x).unwrap()).unwrap();
        for (a, b) in back.iter().zip(&x) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }
}

#[test]
fn smoother_never_raises_rayleigh_quotient() {
    let mut violations = 0;
    for t in 0..100u64 {
        let n = 3 + (t as usize % 8);
        let g = random_graph(n, 0.45, t % 2 == 0, t);
        let l = normalized_laplacian(&g);
        let f = random_matrix(n, 1, t + 1000);
        let lambda = 0.1 + (t % 7) as f64 * 0.5;
        let y = exact_smoother(&l, lambda, &f).unwrap();
        if rayleigh(&l, &y) > rayleigh(&l, &f) + 1e-12 {
            violations += 1;
        }
    }
    assert_eq!(violations, 0);
}

#[test]
fn smoother_output_is_the_argmin() {
    for t in 0..10u64 {
        let n = 4 + t as usize % 5;
        let g = random_graph(n, 0.5, true, 50 + t);
        let l = laplacian(&g);
        let f = random_matrix(n, 3, 60 + t);
        let lambda = 0.7;
        let y = exact_smoother(&l, lambda, &f).unwrap();
        let best = objective(&l, lambda, &f, &y);
        for k in 0..20u64 {
            let dir = random_matrix(n, 3, 1000 * t + k);
            let mut moved = y.clone();
            moved.axpy(1e-3, &dir);
            assert!(objective(&l, lambda, &f, &moved) >= best);
        }
    }
}

#[test]
fn four_cycle_spectrum() {
    let g = bifilter::Graph::from_unit_edges(4, &[(0, 1), (1, 2), (2, 3), (0, 3)]).unwrap();
    let eig = symmetric_eig(&normalized_laplacian(&g).to_dense()).unwrap();
    for (got, want) in eig.eigenvalues.iter().zip([0.0, 1.0, 1.0, 2.0]) {
        assert!((got - want).abs() < 1e-10);
    }
}
