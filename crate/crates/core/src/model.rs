//! BiGCN layers and the single-direction GCN baseline.
//!
//! A BiGCN layer computes `σ(ADMM(H, L₁, L₂) W)`: the input is smoothed over
//! the node graph and over a graph of its own feature dimensions, then
//! projected. The feature graph either comes from a trainable strictly upper
//! triangular matrix `U` per layer, from a thresholded correlation of the
//! input features (first layer only), or is absent (`L₂ = I`).

use std::sync::Arc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{row_softmax, Tape, Var};
use crate::dense::{Cholesky, DenseMatrix};
use crate::error::{Error, Result};
use crate::filter::{FilterParams, FilterVariant};
use crate::graph::SparseMatrix;
use crate::spectral::factor_shifted;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum L2Mode {
    Learnable,
    FixedCorrelation,
    Identity,
}

impl std::str::FromStr for L2Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learnable" => Ok(L2Mode::Learnable),
            "fixed_correlation" => Ok(L2Mode::FixedCorrelation),
            "identity" => Ok(L2Mode::Identity),
            other => Err(Error::InvalidArgument(format!("unknown l2 mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for L2Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            L2Mode::Learnable => "learnable",
            L2Mode::FixedCorrelation => "fixed_correlation",
            L2Mode::Identity => "identity",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Architecture {
    BiGcn,
    /// `σ(K H W)` with `K = I − λL₁` (Taylor) or `(I + λL₁)⁻¹` (exact).
    Gcn {
        lambda: f64,
        variant: FilterVariant,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    /// Input width, hidden widths, output width.
    pub layer_dims: Vec<usize>,
    pub dropout: f64,
    pub l2_mode: L2Mode,
    pub filter: FilterParams,
    pub l1_reg_weight: f64,
    pub architecture: Architecture,
}

impl ModelConfig {
    pub fn n_layers(&self) -> usize {
        self.layer_dims.len().saturating_sub(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_dims.len() < 2 {
            return Err(Error::InvalidArgument(
                "layer_dims needs an input and an output width".into(),
            ));
        }
        if self.layer_dims.contains(&0) {
            return Err(Error::InvalidArgument("layer widths must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument(format!(
                "dropout {} outside [0, 1)",
                self.dropout
            )));
        }
        if !(self.l1_reg_weight >= 0.0) {
            return Err(Error::InvalidArgument("l1_reg_weight must be >= 0".into()));
        }
        match self.architecture {
            Architecture::BiGcn => self.filter.validate(),
            Architecture::Gcn { lambda, .. } if !(lambda >= 0.0) => {
                Err(Error::InvalidArgument("baseline lambda must be >= 0".into()))
            }
            Architecture::Gcn { .. } => Ok(()),
        }
    }

    fn learns_l2(&self) -> bool {
        self.architecture == Architecture::BiGcn && self.l2_mode == L2Mode::Learnable
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams {
    pub w: DenseMatrix,
    /// Strictly upper triangular, present only for a learnable `L₂`.
    pub u: Option<DenseMatrix>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub layers: Vec<LayerParams>,
}

impl ModelParams {
    /// Glorot-uniform `W`, zero `U`.
    pub fn init(config: &ModelConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layer_dims
            .windows(2)
            .map(|dims| {
                let (din, dout) = (dims[0], dims[1]);
                let limit = (6.0 / (din + dout) as f64).sqrt();
                let w = DenseMatrix::from_fn(din, dout, |_, _| rng.random_range(-limit..limit));
                let u = config.learns_l2().then(|| DenseMatrix::zeros(din, din));
                LayerParams { w, u }
            })
            .collect();
        Ok(ModelParams { layers })
    }

    /// Parameters in checkpoint order: `layer{i}.w`, then `layer{i}.u` if any.
    pub fn named(&self) -> Vec<(String, &DenseMatrix)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            out.push((format!("layer{i}.w"), &layer.w));
            if let Some(u) = &layer.u {
                out.push((format!("layer{i}.u"), u));
            }
        }
        out
    }

    pub fn from_named(named: Vec<(String, DenseMatrix)>) -> Result<Self> {
        let mut layers: Vec<LayerParams> = Vec::new();
        for (name, value) in named {
            let parsed = name
                .strip_prefix("layer")
                .and_then(|rest| rest.split_once('.'))
                .and_then(|(i, kind)| i.parse::<usize>().ok().map(|i| (i, kind)));
            let Some((i, kind)) = parsed else {
                return Err(Error::Checkpoint(format!("unexpected parameter name {name:?}")));
            };
            match kind {
                "w" if i == layers.len() => layers.push(LayerParams { w: value, u: None }),
                "u" if i + 1 == layers.len() && layers[i].u.is_none() => layers[i].u = Some(value),
                _ => return Err(Error::Checkpoint(format!("parameter {name:?} out of order"))),
            }
        }
        Ok(ModelParams { layers })
    }

    /// Checks shapes against a configuration.
    pub fn check(&self, config: &ModelConfig) -> Result<()> {
        if self.layers.len() != config.n_layers() {
            return Err(Error::dims("model layers", config.n_layers(), self.layers.len()));
        }
        for (layer, dims) in self.layers.iter().zip(config.layer_dims.windows(2)) {
            if layer.w.shape() != (dims[0], dims[1]) {
                return Err(Error::dims(
                    "layer weight",
                    format!("{}x{}", dims[0], dims[1]),
                    format!("{}x{}", layer.w.rows(), layer.w.cols()),
                ));
            }
            match (&layer.u, config.learns_l2()) {
                (Some(u), true) if u.shape() == (dims[0], dims[0]) => {}
                (None, false) => {}
                _ => return Err(Error::dims("layer U", "matching l2 mode", "mismatch")),
            }
        }
        Ok(())
    }

    /// Zeroes everything on or below the diagonal of each `U`.
    pub fn enforce_structure(&mut self) {
        for layer in &mut self.layers {
            if let Some(u) = &mut layer.u {
                let cols = u.cols();
                for r in 0..u.rows() {
                    u.row_mut(r)[..=r.min(cols - 1)].fill(0.0);
                }
            }
        }
    }
}

/// Tape handles of one layer's parameters.
#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub w: Var,
    pub u: Option<Var>,
}

pub fn register_params(tape: &mut Tape, params: &ModelParams) -> Vec<LayerVars> {
    params
        .layers
        .iter()
        .map(|l| LayerVars {
            w: tape.param(l.w.clone()),
            u: l.u.as_ref().map(|u| tape.param(u.clone())),
        })
        .collect()
}

fn strict_upper_mask(d: usize) -> DenseMatrix {
    DenseMatrix::from_fn(d, d, |i, j| if j > i { 1.0 } else { 0.0 })
}

/// Learnable feature Laplacian from `U`. Returns `(L₂, W₂)` where `W₂` is the
/// masked sigmoid that carries the L1 penalty.
pub fn build_learnable_l2(tape: &mut Tape, u: Var) -> Result<(Var, Var)> {
    let d = tape.value(u).rows();
    if d < 2 || !tape.value(u).is_square() {
        return Err(Error::InvalidArgument(format!(
            "learnable L2 needs a square U with d >= 2, got {:?}",
            tape.value(u).shape()
        )));
    }
    let mask = tape.constant(strict_upper_mask(d));
    let s = tape.sigmoid(u);
    let w2 = tape.mul(s, mask)?;
    let w2t = tape.transpose(w2);
    let a2 = tape.add(w2, w2t)?;
    let norm = tape.sym_normalize(a2)?;
    let eye = tape.constant(DenseMatrix::identity(d));
    Ok((tape.sub(eye, norm)?, w2))
}

/// Value-only form of [`build_learnable_l2`].
pub fn learnable_l2(u: &DenseMatrix) -> Result<DenseMatrix> {
    let mut tape = Tape::new();
    let uv = tape.constant(u.clone());
    let (l2, _) = build_learnable_l2(&mut tape, uv)?;
    Ok(tape.value(l2).clone())
}

/// Thresholded-correlation feature Laplacian of the columns of `x`.
pub fn build_fixed_l2(x: &DenseMatrix) -> Result<DenseMatrix> {
    let d = x.cols();
    if d < 2 {
        return Err(Error::InvalidArgument(format!("fixed L2 needs d >= 2, got {d}")));
    }
    let gram = x.t_matmul(x)?;
    let norms: Vec<f64> = (0..d).map(|i| gram[(i, i)].max(0.0).sqrt()).collect();
    let cos = DenseMatrix::from_fn(d, d, |i, j| {
        if norms[i] > 0.0 && norms[j] > 0.0 {
            gram[(i, j)] / (norms[i] * norms[j])
        } else {
            0.0
        }
    });
    let p = row_softmax(&cos);
    let mean = p.sum() / (d * d) as f64;
    let mut a = DenseMatrix::from_fn(d, d, |i, j| {
        if i != j && (p[(i, j)] > mean || p[(j, i)] > mean) {
            1.0
        } else {
            0.0
        }
    });
    let s: Vec<f64> = (0..d)
        .map(|i| {
            let deg: f64 = a.row(i).iter().sum();
            if deg > 0.0 {
                1.0 / deg.sqrt()
            } else {
                0.0
            }
        })
        .collect();
    for i in 0..d {
        for j in 0..d {
            let v = a[(i, j)] * s[i] * s[j];
            a.as_mut_slice()[i * d + j] = if i == j { 1.0 } else { -v };
        }
    }
    Ok(a)
}

/// Graph-side operators, built once per graph and configuration.
pub struct Propagation {
    l1: Arc<SparseMatrix>,
    /// `I − c L₁` for the Taylor column step or the Taylor baseline.
    taylor: Arc<SparseMatrix>,
    /// Factor of `I + c L₁` for the exact column step or the exact baseline.
    exact: Option<Arc<Cholesky>>,
    fixed_l2: Option<DenseMatrix>,
}

impl Propagation {
    /// `features` is only read for [`L2Mode::FixedCorrelation`].
    pub fn new(l1: SparseMatrix, config: &ModelConfig, features: &DenseMatrix) -> Result<Self> {
        config.validate()?;
        if l1.n_rows() != features.rows() {
            return Err(Error::dims("propagation", features.rows(), l1.n_rows()));
        }
        let (c, variant) = match config.architecture {
            Architecture::BiGcn => (config.filter.column_step(), config.filter.variant),
            Architecture::Gcn { lambda, variant } => (lambda, variant),
        };
        let taylor = Arc::new(l1.scaled_plus_identity(1.0, -c));
        let exact = match variant {
            FilterVariant::Exact => Some(Arc::new(factor_shifted(&l1, 1.0, c)?)),
            FilterVariant::Taylor => None,
        };
        let fixed_l2 = match (config.architecture, config.l2_mode) {
            (Architecture::BiGcn, L2Mode::FixedCorrelation) => Some(build_fixed_l2(features)?),
            _ => None,
        };
        Ok(Propagation {
            l1: Arc::new(l1),
            taylor,
            exact,
            fixed_l2,
        })
    }

    pub fn l1(&self) -> &SparseMatrix {
        &self.l1
    }

    pub fn fixed_l2(&self) -> Option<&DenseMatrix> {
        self.fixed_l2.as_ref()
    }

    fn column(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        match &self.exact {
            Some(ch) => tape.solve_left(ch, x),
            None => tape.sparse_left(&self.taylor, x),
        }
    }
}

/// Right-hand (feature) side of the filter.
pub enum RowOperator {
    Identity,
    Laplacian(Var),
}

/// Unrolled, differentiable bi-directional filter.
pub fn bifilter_on_tape(
    tape: &mut Tape,
    f: Var,
    prop: &Propagation,
    l2: &RowOperator,
    params: &FilterParams,
) -> Result<Var> {
    let (n, d) = tape.value(f).shape();
    if prop.l1.n_rows() != n {
        return Err(Error::dims("bifilter L1", n, prop.l1.n_rows()));
    }
    let (c2, p) = (params.row_step(), params.p);
    let inv = 1.0 / (1.0 + p);

    let row = match l2 {
        RowOperator::Identity => None,
        RowOperator::Laplacian(l) => {
            if tape.value(*l).shape() != (d, d) {
                return Err(Error::dims(
                    "bifilter L2",
                    format!("{d}x{d}"),
                    format!("{:?}", tape.value(*l).shape()),
                ));
            }
            let eye = tape.constant(DenseMatrix::identity(d));
            let scaled = tape.scale(*l, c2);
            Some(match params.variant {
                FilterVariant::Exact => tape.add(eye, scaled)?,
                FilterVariant::Taylor => tape.sub(eye, scaled)?,
            })
        }
    };
    let identity_factor = match params.variant {
        FilterVariant::Exact => 1.0 / (1.0 + c2),
        FilterVariant::Taylor => 1.0 - c2,
    };

    let mut y1 = f;
    let mut y2 = f;
    let mut z: Option<Var> = None;
    for _ in 0..params.k {
        let py2 = tape.scale(y2, p);
        let mut rhs = tape.add(f, py2)?;
        if let Some(z) = z {
            rhs = tape.add(rhs, z)?;
        }
        let col = prop.column(tape, rhs)?;
        y1 = tape.scale(col, inv);

        let py1 = tape.scale(y1, p);
        let mut rhs = tape.add(f, py1)?;
        if let Some(z) = z {
            rhs = tape.sub(rhs, z)?;
        }
        let filtered = match (row, params.variant) {
            (None, _) => tape.scale(rhs, identity_factor),
            (Some(b), FilterVariant::Exact) => tape.solve_right(rhs, b)?,
            (Some(t), FilterVariant::Taylor) => tape.matmul(rhs, t)?,
        };
        y2 = tape.scale(filtered, inv);

        let gap = tape.sub(y2, y1)?;
        let pgap = tape.scale(gap, p);
        z = Some(match z {
            Some(z) => tape.add(z, pgap)?,
            None => pgap,
        });
    }
    let sum = tape.add(y1, y2)?;
    Ok(tape.scale(sum, 0.5))
}

pub enum Mode<'a> {
    Train(&'a mut ChaCha8Rng),
    Eval,
}

pub struct Forward {
    pub output: Var,
    /// Masked `W₂` of each learnable layer.
    pub l2_weights: Vec<Var>,
}

fn dropout(tape: &mut Tape, h: Var, rate: f64, mode: &mut Mode<'_>) -> Result<Var> {
    match mode {
        Mode::Train(rng) if rate > 0.0 => {
            let keep = 1.0 - rate;
            let (r, c) = tape.value(h).shape();
            let mask = DenseMatrix::from_fn(r, c, |_, _| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 });
            let m = tape.constant(mask);
            tape.mul(h, m)
        }
        _ => Ok(h),
    }
}

/// Stacked layers; relu between layers, identity after the last.
pub fn forward(
    tape: &mut Tape,
    vars: &[LayerVars],
    x: Var,
    prop: &Propagation,
    config: &ModelConfig,
    mut mode: Mode<'_>,
) -> Result<Forward> {
    if vars.len() != config.n_layers() {
        return Err(Error::dims("forward layers", config.n_layers(), vars.len()));
    }
    let mut h = x;
    let mut l2_weights = Vec::new();
    for (i, layer) in vars.iter().enumerate() {
        let input = dropout(tape, h, config.dropout, &mut mode)?;
        let filtered = match config.architecture {
            Architecture::Gcn { .. } => prop.column(tape, input)?,
            Architecture::BiGcn => {
                let row = match (config.l2_mode, layer.u) {
                    (L2Mode::Learnable, Some(u)) => {
                        let (l2, w2) = build_learnable_l2(tape, u)?;
                        l2_weights.push(w2);
                        RowOperator::Laplacian(l2)
                    }
                    (L2Mode::Learnable, None) => return Err(Error::InvalidArgument(format!("layer {i} has no U"))),
                    (L2Mode::FixedCorrelation, _) if i == 0 => {
                        let l2 = prop.fixed_l2.clone().expect("built with the config");
                        RowOperator::Laplacian(tape.constant(l2))
                    }
                    _ => RowOperator::Identity,
                };
                bifilter_on_tape(tape, input, prop, &row, &config.filter)?
            }
        };
        let projected = tape.matmul(filtered, layer.w)?;
        h = if i + 1 < vars.len() {
            tape.relu(projected)
        } else {
            projected
        };
    }
    Ok(Forward { output: h, l2_weights })
}

/// Evaluation-mode forward pass returning the output value.
pub fn predict(params: &ModelParams, x: &DenseMatrix, prop: &Propagation, config: &ModelConfig) -> Result<DenseMatrix> {
    params.check(config)?;
    let mut tape = Tape::new();
    let vars = register_params(&mut tape, params);
    let xv = tape.constant(x.clone());
    let out = forward(&mut tape, &vars, xv, prop, config, Mode::Eval)?;
    Ok(tape.value(out.output).clone())
}

fn single_layer(
    config: &ModelConfig,
    h: &DenseMatrix,
    l1: &SparseMatrix,
    params: &LayerParams,
    output_layer: bool,
) -> Result<DenseMatrix> {
    let mut cfg = config.clone();
    cfg.layer_dims = vec![params.w.rows(), params.w.cols()];
    cfg.dropout = 0.0;
    let prop = Propagation::new(l1.clone(), &cfg, h)?;
    let mut tape = Tape::new();
    let w = tape.constant(params.w.clone());
    let u = params.u.as_ref().map(|u| tape.constant(u.clone()));
    let x = tape.constant(h.clone());
    let out = forward(&mut tape, &[LayerVars { w, u }], x, &prop, &cfg, Mode::Eval)?;
    let v = tape.value(out.output).clone();
    Ok(if output_layer { v } else { v.map(|x| x.max(0.0)) })
}

/// One BiGCN layer, evaluation mode.
pub fn bigcn_layer(
    h: &DenseMatrix,
    l1: &SparseMatrix,
    params: &LayerParams,
    config: &ModelConfig,
    output_layer: bool,
) -> Result<DenseMatrix> {
    let mut cfg = config.clone();
    cfg.architecture = Architecture::BiGcn;
    single_layer(&cfg, h, l1, params, output_layer)
}

/// One baseline layer `σ(K H W)`, evaluation mode.
pub fn gcn_baseline_layer(
    h: &DenseMatrix,
    l1: &SparseMatrix,
    w: &DenseMatrix,
    lambda: f64,
    variant: FilterVariant,
    output_layer: bool,
) -> Result<DenseMatrix> {
    let cfg = ModelConfig {
        layer_dims: vec![w.rows(), w.cols()],
        dropout: 0.0,
        l2_mode: L2Mode::Identity,
        filter: FilterParams::new(0.0, 0.0, 1.0, 1, variant),
        l1_reg_weight: 0.0,
        architecture: Architecture::Gcn { lambda, variant },
    };
    let params = LayerParams { w: w.clone(), u: None };
    single_layer(&cfg, h, l1, &params, output_layer)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::grad_check;
    use crate::filter::admm_bifilter;
    use crate::graph::{normalized_laplacian, Graph};
    use crate::rng::{stream_rng, Stream};
    use crate::spectral::symmetric_eig;

    fn toy_graph(n: usize) -> SparseMatrix {
        let mut edges: Vec<(usize, usize)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        edges.push((0, n - 1));
        edges.push((0, n / 2));
        normalized_laplacian(&Graph::from_unit_edges(n, &edges).unwrap())
    }

    fn features(n: usize, d: usize, seed: u64) -> DenseMatrix {
        DenseMatrix::from_fn(n, d, |i, j| (((i * 13 + j * 7) as u64 + seed) as f64 * 0.731).sin())
    }

    fn bigcn_config(dims: Vec<usize>, mode: L2Mode, variant: FilterVariant) -> ModelConfig {
        ModelConfig {
            layer_dims: dims,
            dropout: 0.0,
            l2_mode: mode,
            filter: FilterParams::from_step(0.6, 2.0, 2, variant),
            l1_reg_weight: 0.0,
            architecture: Architecture::BiGcn,
        }
    }

    #[test]
    fn zero_u_gives_uniform_feature_graph() {
        let l2 = learnable_l2(&DenseMatrix::zeros(3, 3)).unwrap();
        let expected = DenseMatrix::from_rows(&[[1.0, -0.5, -0.5], [-0.5, 1.0, -0.5], [-0.5, -0.5, 1.0]]);
        assert!(l2.max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn very_negative_u_stays_finite() {
        let u = DenseMatrix::from_fn(4, 4, |i, j| if j > i { -800.0 } else { 0.0 });
        let l2 = learnable_l2(&u).unwrap();
        assert!(l2.is_finite());
        let u = DenseMatrix::from_fn(4, 4, |i, j| if j > i { -30.0 } else { 0.0 });
        assert!(learnable_l2(&u).unwrap().is_finite());
    }

    #[test]
    fn learnable_l2_spectrum_in_range() {
        let mut rng = stream_rng(3, Stream::Fixture);
        for _ in 0..20 {
            let u = DenseMatrix::from_fn(5, 5, |i, j| if j > i { rng.random_range(-4.0..4.0) } else { 0.0 });
            let eig = symmetric_eig(&learnable_l2(&u).unwrap()).unwrap();
            assert!(eig.eigenvalues.iter().all(|&e| (-1e-10..=2.0 + 1e-10).contains(&e)));
        }
    }

    #[test]
    fn learnable_l2_rejects_scalar() {
        assert!(learnable_l2(&DenseMatrix::zeros(1, 1)).is_err());
    }

    #[test]
    fn fixed_l2_connects_identical_columns() {
        let x = DenseMatrix::from_rows(&[[1.0, 1.0, 0.0], [2.0, 2.0, 0.0], [0.0, 0.0, 3.0]]);
        let l2 = build_fixed_l2(&x).unwrap();
        assert!(l2[(0, 1)] < -0.99);
        assert_eq!(l2[(0, 2)], 0.0);
        assert_eq!(l2[(1, 2)], 0.0);
        assert_eq!(l2[(2, 2)], 1.0);
    }

    #[test]
    fn fixed_l2_orthonormal_columns_is_identity() {
        let x = DenseMatrix::identity(4);
        assert_eq!(build_fixed_l2(&x).unwrap(), DenseMatrix::identity(4));
    }

    #[test]
    fn fixed_l2_zero_column() {
        let x = DenseMatrix::from_rows(&[[1.0, 0.0, 1.0], [1.0, 0.0, 1.0]]);
        let l2 = build_fixed_l2(&x).unwrap();
        assert!(l2.is_finite());
        assert_eq!(l2[(1, 1)], 1.0);
        assert!(build_fixed_l2(&DenseMatrix::zeros(3, 1)).is_err());
    }

    #[test]
    fn zero_lambda_identity_weight_is_identity_map() {
        let l1 = toy_graph(6);
        let h = features(6, 3, 1);
        let mut cfg = bigcn_config(vec![3, 3], L2Mode::Learnable, FilterVariant::Taylor);
        cfg.filter = FilterParams::new(0.0, 0.0, 2.0, 2, FilterVariant::Taylor);
        let params = LayerParams {
            w: DenseMatrix::identity(3),
            u: Some(DenseMatrix::zeros(3, 3)),
        };
        let out = bigcn_layer(&h, &l1, &params, &cfg, true).unwrap();
        assert!(out.max_abs_diff(&h) < 1e-15);
        let out = gcn_baseline_layer(&h, &l1, &DenseMatrix::identity(3), 0.0, FilterVariant::Taylor, true).unwrap();
        assert!(out.max_abs_diff(&h) < 1e-15);
    }

    #[test]
    fn baseline_keeps_constant_rows_on_connected_graph() {
        let g = Graph::from_unit_edges(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        let l1 = normalized_laplacian(&g); // regular graph: constant vector in the kernel
        let h = DenseMatrix::filled(4, 2, 0.7);
        let out = gcn_baseline_layer(&h, &l1, &DenseMatrix::identity(2), 0.9, FilterVariant::Taylor, true).unwrap();
        assert!(out.max_abs_diff(&h) < 1e-15);
    }

    #[test]
    fn tape_filter_matches_value_filter() {
        let l1 = toy_graph(7);
        let f = features(7, 4, 2);
        let u = DenseMatrix::from_fn(4, 4, |i, j| if j > i { 0.3 * (i + j) as f64 - 1.0 } else { 0.0 });
        let l2 = learnable_l2(&u).unwrap();
        for variant in [FilterVariant::Exact, FilterVariant::Taylor] {
            let params = FilterParams::from_step(0.7, 1.5, 3, variant);
            let cfg = ModelConfig {
                filter: params,
                ..bigcn_config(vec![4, 2], L2Mode::Learnable, variant)
            };
            let prop = Propagation::new(l1.clone(), &cfg, &f).unwrap();
            let mut tape = Tape::new();
            let fv = tape.constant(f.clone());
            let lv = tape.constant(l2.clone());
            let out = bifilter_on_tape(&mut tape, fv, &prop, &RowOperator::Laplacian(lv), &params).unwrap();
            let (reference, _) = admm_bifilter(&f, &l1, &l2, &params).unwrap();
            assert!(tape.value(out).max_abs_diff(&reference) < 1e-12, "{variant}");

            let mut tape = Tape::new();
            let fv = tape.constant(f.clone());
            let out = bifilter_on_tape(&mut tape, fv, &prop, &RowOperator::Identity, &params).unwrap();
            let (reference, _) = admm_bifilter(&f, &l1, &DenseMatrix::identity(4), &params).unwrap();
            assert!(tape.value(out).max_abs_diff(&reference) < 1e-12, "{variant}");
        }
    }

    #[test]
    fn identity_mode_folds_into_exact_baseline() {
        let l1 = toy_graph(6);
        let h = features(6, 3, 4);
        let w = features(3, 2, 5);
        let (lambda1, lambda2) = (0.8, 0.5);
        let mut cfg = bigcn_config(vec![3, 2], L2Mode::Identity, FilterVariant::Exact);
        cfg.filter = FilterParams::new(lambda1, lambda2, 1.0, 400, FilterVariant::Exact);
        let params = LayerParams { w: w.clone(), u: None };
        let bi = bigcn_layer(&h, &l1, &params, &cfg, true).unwrap();
        let base = gcn_baseline_layer(&h, &l1, &w, lambda1 / (1.0 + lambda2), FilterVariant::Exact, true)
            .unwrap()
            .scale(1.0 / (1.0 + lambda2));
        assert!(bi.max_abs_diff(&base) < 1e-8);
    }

    #[test]
    fn large_penalty_limit_matches_taylor_baseline() {
        let l1 = toy_graph(6);
        let h = features(6, 3, 6);
        let w = features(3, 2, 7);
        let (lambda, p) = (0.9, 1e6);
        let mut cfg = bigcn_config(vec![3, 2], L2Mode::Identity, FilterVariant::Taylor);
        cfg.filter = FilterParams::new(lambda * (1.0 + p) / 2.0, 0.0, p, 1, FilterVariant::Taylor);
        let bi = bigcn_layer(&h, &l1, &LayerParams { w: w.clone(), u: None }, &cfg, true).unwrap();
        let base = gcn_baseline_layer(&h, &l1, &w, lambda, FilterVariant::Taylor, true).unwrap();
        assert!(bi.max_abs_diff(&base) < 1e-5);
    }

    #[test]
    fn layer_gradients_match_finite_differences() {
        let l1 = toy_graph(6);
        let x = features(6, 4, 8);
        let cfg = bigcn_config(vec![4, 3], L2Mode::Learnable, FilterVariant::Taylor);
        let prop = Propagation::new(l1, &cfg, &x).unwrap();
        let w = features(4, 3, 9);
        let u = DenseMatrix::from_fn(4, 4, |i, j| if j > i { 0.2 * (j as f64 - i as f64) } else { 0.0 });
        let err = grad_check(&[w, u], |tape, v| {
            let xv = tape.constant(x.clone());
            let out = forward(
                tape,
                &[LayerVars { w: v[0], u: Some(v[1]) }],
                xv,
                &prop,
                &cfg,
                Mode::Eval,
            )?;
            tape.cross_entropy(out.output, &[0, 2, 5], &[1, 0, 2])
        })
        .unwrap();
        assert!(err < 1e-5, "{err}");
    }

    #[test]
    fn eval_is_repeatable_and_train_is_seeded() {
        let l1 = toy_graph(8);
        let x = features(8, 5, 10);
        let mut cfg = bigcn_config(vec![5, 4, 3], L2Mode::Learnable, FilterVariant::Taylor);
        cfg.dropout = 0.5;
        let prop = Propagation::new(l1, &cfg, &x).unwrap();
        let params = ModelParams::init(&cfg, &mut stream_rng(1, Stream::Init)).unwrap();
        assert_eq!(
            predict(&params, &x, &prop, &cfg).unwrap(),
            predict(&params, &x, &prop, &cfg).unwrap()
        );
        let run = || {
            let mut tape = Tape::new();
            let vars = register_params(&mut tape, &params);
            let xv = tape.constant(x.clone());
            let mut rng = stream_rng(5, Stream::Dropout);
            let out = forward(&mut tape, &vars, xv, &prop, &cfg, Mode::Train(&mut rng)).unwrap();
            tape.value(out.output).clone()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn one_layer_identity_zero_lambda_model() {
        let l1 = toy_graph(5);
        let x = features(5, 3, 11);
        let mut cfg = bigcn_config(vec![3, 3], L2Mode::Identity, FilterVariant::Taylor);
        cfg.filter = FilterParams::new(0.0, 0.0, 1.0, 2, FilterVariant::Taylor);
        let prop = Propagation::new(l1, &cfg, &x).unwrap();
        let params = ModelParams {
            layers: vec![LayerParams {
                w: DenseMatrix::identity(3),
                u: None,
            }],
        };
        assert!(predict(&params, &x, &prop, &cfg).unwrap().max_abs_diff(&x) < 1e-15);
    }

    #[test]
    fn fixed_mode_uses_feature_graph_on_first_layer() {
        let l1 = toy_graph(6);
        let x = features(6, 4, 12);
        let cfg = bigcn_config(vec![4, 2], L2Mode::FixedCorrelation, FilterVariant::Exact);
        let prop = Propagation::new(l1.clone(), &cfg, &x).unwrap();
        let l2 = prop.fixed_l2().unwrap().clone();
        let w = features(4, 2, 13);
        let params = ModelParams {
            layers: vec![LayerParams { w: w.clone(), u: None }],
        };
        let (filtered, _) = admm_bifilter(&x, &l1, &l2, &cfg.filter).unwrap();
        let expected = filtered.matmul(&w).unwrap();
        assert!(predict(&params, &x, &prop, &cfg).unwrap().max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn named_round_trip_and_structure() {
        let cfg = bigcn_config(vec![4, 3, 2], L2Mode::Learnable, FilterVariant::Taylor);
        let mut params = ModelParams::init(&cfg, &mut stream_rng(2, Stream::Init)).unwrap();
        params.layers[0].u.as_mut().unwrap().as_mut_slice().fill(1.0);
        params.enforce_structure();
        let u = params.layers[0].u.as_ref().unwrap();
        assert_eq!(u[(1, 0)], 0.0);
        assert_eq!(u[(1, 1)], 0.0);
        assert_eq!(u[(0, 1)], 1.0);
        let named: Vec<(String, DenseMatrix)> = params.named().into_iter().map(|(n, m)| (n, m.clone())).collect();
        assert_eq!(named[1].0, "layer0.u");
        assert_eq!(ModelParams::from_named(named).unwrap(), params);
        params.check(&cfg).unwrap();
        let mut other = cfg.clone();
        other.l2_mode = L2Mode::Identity;
        assert!(params.check(&other).is_err());
    }

    #[test]
    fn config_validation() {
        let mut cfg = bigcn_config(vec![4], L2Mode::Identity, FilterVariant::Taylor);
        assert!(cfg.validate().is_err());
        cfg.layer_dims = vec![4, 2];
        cfg.dropout = 1.0;
        assert!(cfg.validate().is_err());
        cfg.dropout = 0.5;
        assert!(cfg.validate().is_ok());
        assert_eq!("fixed_correlation".parse::<L2Mode>().unwrap(), L2Mode::FixedCorrelation);
        assert!("bogus".parse::<L2Mode>().is_err());
    }
}
