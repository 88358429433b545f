mod common;

use std::collections::HashMap;

use bifilter::noise::{
    apply_feature_rate, apply_noise_level, apply_noise_rate, structure_mistakes_with_count, NoiseCase, NoiseSpec,
};
use bifilter::DenseMatrix;
use common::{random_graph, random_matrix};
use proptest::prelude::*;

const Z99: f64 = 2.576;

#[test]
fn noise_level_variance() {
    let x = DenseMatrix::zeros(1000, 100);
    let noisy = apply_noise_level(&x, 0.5, 17).unwrap();
    let n = noisy.as_slice().len() as f64;
    let mean = noisy.sum() / n;
    let var = noisy.as_slice().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((var - 0.25).abs() / 0.25 < 0.03, "{var}");
}

#[test]
fn noise_rate_row_fraction() {
    let x = DenseMatrix::zeros(10_000, 2);
    let (noisy, mask) = apply_noise_rate(&x, 0.4, 23).unwrap();
    let hits = mask.iter().filter(|&&m| m).count() as f64;
    let sd = (10_000.0f64 * 0.4 * 0.6).sqrt();
    assert!((hits - 4000.0).abs() < Z99 * sd, "{hits}");
    for (r, &m) in mask.iter().enumerate() {
        assert_eq!(noisy.row(r).iter().any(|&v| v != 0.0), m);
    }
}

#[test]
fn structure_flip_count() {
    let g = random_graph(200, 0.05, false, 3);
    let (_, flipped) = structure_mistakes_with_count(&g, 0.01, 29).unwrap();
    let pairs = 200.0 * 199.0 / 2.0;
    let sd = (pairs * 0.01 * 0.99f64).sqrt();
    assert!((flipped as f64 - pairs * 0.01).abs() < Z99 * sd, "{flipped}");
}

#[test]
fn feature_subsets_are_uniform() {
    // m = 5 keeping 2 columns: 10 equally likely subsets
    let x = DenseMatrix::zeros(1, 5);
    let draws = 10_000u64;
    let mut counts: HashMap<Vec<usize>, u64> = HashMap::new();
    for seed in 0..draws {
        *counts.entry(apply_feature_rate(&x, 0.4, seed).unwrap().1).or_default() += 1;
    }
    assert_eq!(counts.len(), 10);
    let expected = draws as f64 / 10.0;
    let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 99th percentile of chi-square with 9 degrees of freedom
    assert!(chi2 < 21.666, "{chi2}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn perturbations_are_pure_and_keep_shapes(
        n in 2usize..30,
        m in 1usize..8,
        level in 0.0f64..0.9,
        rate in 0.0f64..1.0,
        seed: u64,
    ) {
        let x = random_matrix(n, m, seed);
        let a = apply_noise_level(&x, level, seed).unwrap();
        prop_assert_eq!(a.shape(), x.shape());
        prop_assert_eq!(&a, &apply_noise_level(&x, level, seed).unwrap());
        let (b, mask) = apply_noise_rate(&x, rate, seed).unwrap();
        prop_assert_eq!(b.shape(), x.shape());
        prop_assert_eq!(mask.len(), n);
        prop_assert_eq!(&b, &apply_noise_rate(&x, rate, seed).unwrap().0);
    }

    #[test]
    fn structure_mistakes_keep_a_valid_graph(n in 2usize..40, r in 0.0f64..0.015, seed: u64) {
        let g = random_graph(n, 0.2, false, seed);
        let spec = NoiseSpec { case: NoiseCase::StructureMistakes, parameter: r, seed };
        let x = DenseMatrix::zeros(n, 1);
        let (h, _) = spec.apply(&g, &x).unwrap();
        prop_assert!(h.adjacency().is_symmetric(0.0));
        for u in 0..n {
            prop_assert!(!h.has_edge(u, u));
        }
        prop_assert_eq!(&h, &spec.apply(&g, &x).unwrap().0);
    }
}
