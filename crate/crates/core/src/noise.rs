//! Seeded feature and structure perturbations.
//!
//! Each case draws from its own generator stream (see [`crate::rng`]), so the
//! same `(input, parameter, seed)` always gives the same output and
//! different cases with one seed do not share random numbers.

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::rng::{stream_rng, Stream};

/// `X + N`, `N` i.i.d. `N(0, n_l²)`.
pub fn apply_noise_level(x: &DenseMatrix, n_l: f64, seed: u64) -> Result<DenseMatrix> {
    if !(n_l >= 0.0) {
        return Err(Error::InvalidArgument(format!("noise level {n_l} < 0")));
    }
    let mut rng = stream_rng(seed, Stream::NoiseLevel);
    let mut out = x.clone();
    for v in out.as_mut_slice() {
        let z: f64 = StandardNormal.sample(&mut rng);
        *v += n_l * z;
    }
    Ok(out)
}

/// Row `i` gets i.i.d. `N(0, v_i²)` noise with probability `n_r`, where
/// `v_i ~ U(0, 1)`.
pub fn apply_noise_rate(x: &DenseMatrix, n_r: f64, seed: u64) -> Result<(DenseMatrix, Vec<bool>)> {
    if !(0.0..=1.0).contains(&n_r) {
        return Err(Error::InvalidArgument(format!("noise rate {n_r} outside [0, 1]")));
    }
    let mut rng = stream_rng(seed, Stream::NoiseRate);
    let mut out = x.clone();
    let mut mask = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        // both draws happen for every row so the stream layout does not depend on n_r
        let hit = rng.random::<f64>() < n_r;
        let v: f64 = rng.random();
        mask.push(hit);
        if hit {
            for e in out.row_mut(r) {
                let z: f64 = StandardNormal.sample(&mut rng);
                *e += v * z;
            }
        }
    }
    Ok((out, mask))
}

/// Toggles each unordered node pair independently with probability `r`.
pub fn apply_structure_mistakes(g: &Graph, r: f64, seed: u64) -> Result<Graph> {
    Ok(structure_mistakes_with_count(g, r, seed)?.0)
}

/// Like [`apply_structure_mistakes`], also returning the number of toggled pairs.
pub fn structure_mistakes_with_count(g: &Graph, r: f64, seed: u64) -> Result<(Graph, usize)> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::InvalidArgument(format!("error ratio {r} outside [0, 1]")));
    }
    let n = g.n();
    let mut rng = stream_rng(seed, Stream::StructureMistakes);
    let mut edges = Vec::new();
    let mut flipped = 0;
    for u in 0..n {
        for v in (u + 1)..n {
            let flip = rng.random::<f64>() < r;
            let present = g.has_edge(u, v);
            if flip {
                flipped += 1;
                if !present {
                    edges.push((u, v, 1.0));
                }
            } else if present {
                edges.push((u, v, g.adjacency().get(u, v)));
            }
        }
    }
    Ok((Graph::from_edges(n, &edges)?, flipped))
}

/// Number of columns kept for a feature rate.
pub fn kept_columns(m: usize, r_f: f64) -> usize {
    // tolerate representation error in products like 0.3 * 10
    (r_f * m as f64 - 1e-9).ceil().max(0.0) as usize
}

/// Keeps a uniformly sampled, order-preserving subset of `⌈r_f·m⌉` columns.
pub fn apply_feature_rate(x: &DenseMatrix, r_f: f64, seed: u64) -> Result<(DenseMatrix, Vec<usize>)> {
    if !(r_f > 0.0 && r_f <= 1.0) {
        return Err(Error::InvalidArgument(format!("feature rate {r_f} outside (0, 1]")));
    }
    let m = x.cols();
    let k = kept_columns(m, r_f);
    if k == 0 {
        return Err(Error::InvalidArgument(format!(
            "feature rate {r_f} keeps no columns of {m}"
        )));
    }
    let mut rng = stream_rng(seed, Stream::FeatureRate);
    let mut cols = sample(&mut rng, m, k).into_vec();
    cols.sort_unstable();
    Ok((x.select_columns(&cols), cols))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum NoiseCase {
    NoiseLevel,
    NoiseRate,
    StructureMistakes,
    FeatureRate,
}

impl NoiseCase {
    pub fn name(self) -> &'static str {
        match self {
            NoiseCase::NoiseLevel => "noise_level",
            NoiseCase::NoiseRate => "noise_rate",
            NoiseCase::StructureMistakes => "structure_mistakes",
            NoiseCase::FeatureRate => "feature_rate",
        }
    }

    /// Admissible parameter range.
    pub fn check(self, value: f64) -> Result<()> {
        let ok = match self {
            NoiseCase::NoiseLevel => (0.0..=0.9).contains(&value),
            NoiseCase::NoiseRate => (0.0..=1.0).contains(&value),
            NoiseCase::StructureMistakes => (0.0..=0.015).contains(&value),
            NoiseCase::FeatureRate => value > 0.0 && value <= 1.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!(
                "{} value {value} out of range",
                self.name()
            )))
        }
    }
}

impl std::str::FromStr for NoiseCase {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "noise_level" => Ok(NoiseCase::NoiseLevel),
            "noise_rate" => Ok(NoiseCase::NoiseRate),
            "structure_mistakes" => Ok(NoiseCase::StructureMistakes),
            "feature_rate" => Ok(NoiseCase::FeatureRate),
            other => Err(Error::InvalidArgument(format!("unknown noise case {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseSpec {
    pub case: NoiseCase,
    pub parameter: f64,
    pub seed: u64,
}

impl NoiseSpec {
    /// Applies the perturbation to a `(graph, features)` pair.
    pub fn apply(&self, g: &Graph, x: &DenseMatrix) -> Result<(Graph, DenseMatrix)> {
        self.case.check(self.parameter)?;
        Ok(match self.case {
            NoiseCase::NoiseLevel => (g.clone(), apply_noise_level(x, self.parameter, self.seed)?),
            NoiseCase::NoiseRate => (g.clone(), apply_noise_rate(x, self.parameter, self.seed)?.0),
            NoiseCase::StructureMistakes => (apply_structure_mistakes(g, self.parameter, self.seed)?, x.clone()),
            NoiseCase::FeatureRate => (g.clone(), apply_feature_rate(x, self.parameter, self.seed)?.0),
        })
    }
}
