//! Bi-directional low-pass graph filtering.
//!
//! A node feature matrix `F` (n×d) is smoothed jointly along the node graph
//! (Laplacian `L₁`, n×n) and a graph over feature dimensions (Laplacian `L₂`,
//! d×d). The joint problem is solved approximately by a few ADMM iterations,
//! which makes the filter cheap enough to sit inside a graph convolution layer
//! (BiGCN). The crate also carries everything needed to train and evaluate
//! such layers at desk scale: a small reverse-mode autodiff tape, Adam, noise
//! generators, a synthetic stochastic block model benchmark and metrics.

pub mod autodiff;
pub mod data;
pub mod dense;
pub mod error;
pub mod filter;
pub mod graph;
pub mod metrics;
pub mod model;
pub mod noise;
pub mod rng;
pub mod spectral;
pub mod train;

pub use dense::DenseMatrix;
pub use error::{Error, Result};
pub use filter::{admm_bifilter, FilterParams, FilterVariant};
pub use graph::{Graph, SparseMatrix};
