#![allow(dead_code)]

use bifilter::rng::{stream_rng, Stream};
use bifilter::{DenseMatrix, Graph};
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    stream_rng(seed, Stream::Fixture)
}

/// Erdős–Rényi graph with weights in [0.5, 2) (or unit weights).
pub fn random_graph(n: usize, p: f64, weighted: bool, seed: u64) -> Graph {
    let mut r = rng(seed);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in (u + 1)..n {
            if r.random::<f64>() < p {
                let w = if weighted { r.random_range(0.5..2.0) } else { 1.0 };
                edges.push((u, v, w));
            }
        }
    }
    Graph::from_edges(n, &edges).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, seed: u64) -> DenseMatrix {
    let mut r = rng(seed ^ 0x5eed);
    DenseMatrix::from_fn(rows, cols, |_, _| r.random_range(-1.0..1.0))
}

/// Symmetric PSD `M Mᵀ / cols`.
pub fn random_psd(d: usize, seed: u64) -> DenseMatrix {
    let m = random_matrix(d, d + 2, seed);
    m.matmul_t(&m).unwrap().scale(1.0 / (d + 2) as f64)
}

pub fn random_permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut r = rng(seed ^ 0xbeef);
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut r);
    p
}
