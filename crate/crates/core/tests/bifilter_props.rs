mod common;

use bifilter::filter::{admm_one_step_closed_form, degenerate_filter};
use bifilter::graph::{normalized_laplacian, spmm};
use bifilter::spectral::{sylvester_oracle, sylvester_residual};
use bifilter::{admm_bifilter, DenseMatrix, FilterParams, FilterVariant};
use common::{random_graph, random_matrix, random_permutation, random_psd};
use proptest::prelude::*;

fn variant(taylor: bool) -> FilterVariant {
    if taylor {
        FilterVariant::Taylor
    } else {
        FilterVariant::Exact
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exact_admm_converges_to_sylvester_solution(
        n in 2usize..9,
        d in 1usize..9,
        p in 1.0f64..10.0,
        lambda1 in 0.0f64..2.0,
        lambda2 in 0.0f64..2.0,
        seed: u64,
    ) {
        let l1 = normalized_laplacian(&random_graph(n, 0.5, true, seed));
        let l2 = random_psd(d, seed);
        let f = random_matrix(n, d, seed ^ 7);
        let params = FilterParams::new(lambda1, lambda2, p, 500, FilterVariant::Exact);
        let (y, trace) = admm_bifilter(&f, &l1, &l2, &params).unwrap();
        prop_assert_eq!(trace.len(), 500);
        prop_assert!(*trace.primal_residual.last().unwrap() < 1e-6);
        let oracle = sylvester_oracle(&l1, &l2, lambda1, lambda2, &f).unwrap();
        prop_assert!(sylvester_residual(&l1, &l2, lambda1, lambda2, &f, &oracle).unwrap() < 1e-8);
        prop_assert!(y.relative_error(&oracle) < 1e-6);
    }

    #[test]
    fn one_step_taylor_matches_closed_form(
        n in 2usize..9,
        d in 1usize..7,
        p in 0.1f64..10.0,
        lambda1 in 0.0f64..2.0,
        lambda2 in 0.0f64..2.0,
        seed: u64,
    ) {
        let l1 = normalized_laplacian(&random_graph(n, 0.5, false, seed));
        let l2 = random_psd(d, seed);
        let f = random_matrix(n, d, seed ^ 3);
        let params = FilterParams::new(lambda1, lambda2, p, 1, FilterVariant::Taylor);
        let (_, trace) = admm_bifilter(&f, &l1, &l2, &params).unwrap();
        let (y1, y2) = admm_one_step_closed_form(&f, &l1, &l2, &params).unwrap();
        prop_assert!(trace.y1[0].max_abs_diff(&y1) < 1e-12);
        prop_assert!(trace.y2[0].max_abs_diff(&y2) < 1e-12);
    }

    #[test]
    fn identity_l2_is_single_direction(
        n in 2usize..9,
        d in 1usize..6,
        lambda1 in 0.0f64..3.0,
        lambda2 in 0.0f64..3.0,
        seed: u64,
    ) {
        let l1 = normalized_laplacian(&random_graph(n, 0.5, true, seed));
        let f = random_matrix(n, d, seed);
        let oracle = sylvester_oracle(&l1, &DenseMatrix::identity(d), lambda1, lambda2, &f).unwrap();
        let degenerate = degenerate_filter(&f, &l1, lambda1, lambda2).unwrap();
        prop_assert!(oracle.max_abs_diff(&degenerate) < 1e-10);
    }

    #[test]
    fn relabeling_nodes_permutes_output(
        n in 2usize..9,
        d in 1usize..5,
        k in 1usize..6,
        taylor: bool,
        seed: u64,
    ) {
        let g = random_graph(n, 0.5, true, seed);
        let perm = random_permutation(n, seed);
        let l1 = normalized_laplacian(&g);
        let l1p = normalized_laplacian(&g.permuted(&perm).unwrap());
        let l2 = random_psd(d, seed);
        let f = random_matrix(n, d, seed ^ 11);
        let mut fp = DenseMatrix::zeros(n, d);
        for (i, &pi) in perm.iter().enumerate() {
            fp.row_mut(pi).copy_from_slice(f.row(i));
        }
        let params = FilterParams::new(0.6, 0.4, 3.0, k, variant(taylor));
        let (y, _) = admm_bifilter(&f, &l1, &l2, &params).unwrap();
        let (yp, _) = admm_bifilter(&fp, &l1p, &l2, &params).unwrap();
        for (i, &pi) in perm.iter().enumerate() {
            for j in 0..d {
                prop_assert!((yp[(pi, j)] - y[(i, j)]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn taylor_y1_keeps_the_low_pass_component(
        n in 2usize..8,
        d in 1usize..5,
        k in 1usize..6,
        p in 0.5f64..8.0,
        seed: u64,
    ) {
        let l1 = normalized_laplacian(&random_graph(n, 0.5, false, seed));
        let l2 = random_psd(d, seed);
        let f = random_matrix(n, d, seed ^ 5);
        let params = FilterParams::from_step(0.8, p, k, FilterVariant::Taylor);
        let (_, trace) = admm_bifilter(&f, &l1, &l2, &params).unwrap();
        let op = l1.scaled_plus_identity(1.0, -params.column_step());
        let base = spmm(&op, &f).unwrap().scale(1.0 / (1.0 + p));
        // by linearity Y₁ᵏ splits into the F-driven term and the (pY₂ + Z) term
        let (prev_y2, prev_z) = if k == 1 {
            (f.clone(), DenseMatrix::zeros(n, d))
        } else {
            (trace.y2[k - 2].clone(), trace.z[k - 2].clone())
        };
        let mut rest_in = prev_y2.scale(p);
        rest_in.axpy(1.0, &prev_z);
        let rest = spmm(&op, &rest_in).unwrap().scale(1.0 / (1.0 + p));
        prop_assert!(trace.y1[k - 1].max_abs_diff(&base.add(&rest)) < 1e-12);
        if k == 1 {
            prop_assert!(trace.y1[0].max_abs_diff(&spmm(&op, &f).unwrap()) < 1e-12);
        }
    }
}

#[test]
fn zero_smoothing_is_identity_for_both_variants() {
    let l1 = normalized_laplacian(&random_graph(6, 0.5, false, 1));
    let l2 = random_psd(3, 2);
    let f = random_matrix(6, 3, 3);
    for v in [FilterVariant::Exact, FilterVariant::Taylor] {
        let (y, trace) = admm_bifilter(&f, &l1, &l2, &FilterParams::new(0.0, 0.0, 2.0, 4, v)).unwrap();
        assert!(y.max_abs_diff(&f) < 1e-15);
        assert!(trace.z.iter().all(|z| z.max_abs() < 1e-15));
    }
}
