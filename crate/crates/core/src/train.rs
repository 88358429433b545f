//! Full-batch training with Adam and validation-based model selection.

use std::collections::HashSet;

use log::debug;

use crate::autodiff::{Tape, Var};
use crate::data::{sample_non_edges, Dataset, EdgeSplit, Split};
use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::graph::normalized_laplacian;
use crate::metrics::{accuracy, roc_auc};
use crate::model::{forward, predict, register_params, LayerVars, Mode, ModelConfig, ModelParams, Propagation};
use crate::rng::{stream_rng, Stream};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    /// Coupled L2 penalty on layer weights.
    pub weight_decay: f64,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping; node task only.
    pub patience: usize,
    /// Evaluation period in epochs.
    pub eval_every: usize,
    pub seed: u64,
}

impl TrainConfig {
    pub fn node_default(seed: u64) -> Self {
        TrainConfig {
            learning_rate: 0.01,
            weight_decay: 5e-4,
            max_epochs: 1000,
            patience: 100,
            eval_every: 1,
            seed,
        }
    }

    pub fn link_default(seed: u64) -> Self {
        TrainConfig {
            max_epochs: 100,
            eval_every: 10,
            ..Self::node_default(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) {
            return Err(Error::InvalidArgument(
                "learning_rate must be > 0 and weight_decay >= 0".into(),
            ));
        }
        if self.max_epochs == 0 || self.eval_every == 0 {
            return Err(Error::InvalidArgument("max_epochs and eval_every must be >= 1".into()));
        }
        if self.patience > self.max_epochs {
            return Err(Error::InvalidArgument("patience exceeds max_epochs".into()));
        }
        Ok(())
    }
}

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct AdamState {
    m: Vec<DenseMatrix>,
    v: Vec<DenseMatrix>,
    step: u64,
}

impl AdamState {
    pub fn new<'a>(shapes: impl IntoIterator<Item = &'a DenseMatrix>) -> Self {
        let m: Vec<DenseMatrix> = shapes
            .into_iter()
            .map(|p| DenseMatrix::zeros(p.rows(), p.cols()))
            .collect();
        AdamState {
            v: m.clone(),
            m,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One bias-corrected Adam update. `decay[i]` selects the parameters that get
/// `weight_decay · θ` added to their gradient.
pub fn adam_step(
    params: &mut [&mut DenseMatrix],
    grads: &[&DenseMatrix],
    decay: &[bool],
    state: &mut AdamState,
    learning_rate: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != decay.len() || params.len() != state.m.len() {
        return Err(Error::dims("adam_step", state.m.len(), params.len()));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(Error::dims(
                "adam_step",
                format!("{:?}", state.m[i].shape()),
                format!("{:?}/{:?}", p.shape(), g.shape()),
            ));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite {
                what: "adam gradient",
                iteration: state.step as usize,
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - ADAM_BETA1.powi(t);
    let c2 = 1.0 - ADAM_BETA2.powi(t);
    for (i, p) in params.iter_mut().enumerate() {
        let wd = if decay[i] { weight_decay } else { 0.0 };
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let theta = p.as_mut_slice();
        for (k, &gk) in grads[i].as_slice().iter().enumerate() {
            let g = gk + wd * theta[k];
            let mk = &mut m.as_mut_slice()[k];
            *mk = ADAM_BETA1 * *mk + (1.0 - ADAM_BETA1) * g;
            let vk = &mut v.as_mut_slice()[k];
            *vk = ADAM_BETA2 * *vk + (1.0 - ADAM_BETA2) * g * g;
            let m_hat = *mk / c1;
            let v_hat = *vk / c2;
            theta[k] -= learning_rate * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// One row of the metric history.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_metric: f64,
    pub test_metric: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best_params: ModelParams,
    pub best_epoch: usize,
    pub best_val: f64,
    /// Test metric of the best-validation checkpoint.
    pub test_metric: f64,
    pub history: Vec<EpochRecord>,
}

impl TrainOutcome {
    /// `epoch,train_loss,val_metric,test_metric` with a header line.
    pub fn history_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,val_metric,test_metric\n");
        for r in &self.history {
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.epoch, r.train_loss, r.val_metric, r.test_metric
            ));
        }
        s
    }
}

/// Task loss plus the L1 penalty on every learnable feature-graph weight.
fn regularized(tape: &mut Tape, task: Var, l2_weights: &[Var], weight: f64) -> Result<Var> {
    let mut loss = task;
    if weight > 0.0 {
        for &w2 in l2_weights {
            let pen = tape.abs_sum(w2);
            let scaled = tape.scale(pen, weight);
            loss = tape.add(loss, scaled)?;
        }
    }
    Ok(loss)
}

fn apply_update(
    params: &mut ModelParams,
    vars: &[LayerVars],
    tape: &Tape,
    loss: Var,
    adam: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<()> {
    let mut grads = tape.backward(loss)?;
    let mut owned = Vec::new();
    let mut decay = Vec::new();
    for lv in vars {
        owned.push(grads.take(lv.w).expect("trainable"));
        decay.push(true);
        if let Some(u) = lv.u {
            owned.push(grads.take(u).expect("trainable"));
            decay.push(false);
        }
    }
    let mut slots: Vec<&mut DenseMatrix> = Vec::new();
    for layer in params.layers.iter_mut() {
        slots.push(&mut layer.w);
        if let Some(u) = layer.u.as_mut() {
            slots.push(u);
        }
    }
    let grad_refs: Vec<&DenseMatrix> = owned.iter().collect();
    adam_step(
        &mut slots,
        &grad_refs,
        &decay,
        adam,
        cfg.learning_rate,
        cfg.weight_decay,
    )?;
    params.enforce_structure();
    Ok(())
}

fn adam_for(params: &ModelParams) -> AdamState {
    AdamState::new(params.named().into_iter().map(|(_, m)| m))
}

fn check_loss(loss: f64, epoch: usize) -> Result<()> {
    if !loss.is_finite() {
        return Err(Error::Diverged {
            epoch,
            reason: format!("training loss is {loss}"),
        });
    }
    Ok(())
}

/// Semi-supervised node classification with early stopping on validation
/// accuracy. Parameters are initialized from the seed.
pub fn train_node(ds: &Dataset, model: &ModelConfig, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let params = ModelParams::init(model, &mut stream_rng(cfg.seed, Stream::Init))?;
    train_node_from(ds, model, cfg, params)
}

/// [`train_node`] from given initial parameters.
pub fn train_node_from(
    ds: &Dataset,
    model: &ModelConfig,
    cfg: &TrainConfig,
    mut params: ModelParams,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    ds.validate()?;
    params.check(model)?;
    if model.layer_dims[0] != ds.features.cols() {
        return Err(Error::dims("input width", ds.features.cols(), model.layer_dims[0]));
    }
    let train_rows = ds.indices(Split::Train);
    let val_rows = ds.indices(Split::Val);
    let test_rows = ds.indices(Split::Test);
    if train_rows.is_empty() || val_rows.is_empty() || test_rows.is_empty() {
        return Err(Error::EmptyMask("train/val/test"));
    }
    let (train_y, val_y, test_y) = (
        ds.labels_of(&train_rows),
        ds.labels_of(&val_rows),
        ds.labels_of(&test_rows),
    );
    let prop = Propagation::new(normalized_laplacian(&ds.graph), model, &ds.features)?;
    let mut dropout_rng = stream_rng(cfg.seed, Stream::Dropout);
    let mut adam = adam_for(&params);

    let mut best: Option<(usize, f64, f64, ModelParams)> = None;
    let mut history = Vec::new();
    for epoch in 0..cfg.max_epochs {
        let mut tape = Tape::new();
        let vars = register_params(&mut tape, &params);
        let x = tape.constant(ds.features.clone());
        let out = forward(&mut tape, &vars, x, &prop, model, Mode::Train(&mut dropout_rng))?;
        let task = tape.cross_entropy(out.output, &train_rows, &train_y)?;
        let loss = regularized(&mut tape, task, &out.l2_weights, model.l1_reg_weight)?;
        let loss_value = tape.scalar(loss);
        check_loss(loss_value, epoch)?;
        apply_update(&mut params, &vars, &tape, loss, &mut adam, cfg)?;

        if (epoch + 1) % cfg.eval_every != 0 && epoch + 1 != cfg.max_epochs {
            continue;
        }
        let logits = predict(&params, &ds.features, &prop, model)?;
        if !logits.is_finite() {
            return Err(Error::Diverged {
                epoch,
                reason: "non-finite logits".into(),
            });
        }
        let val = accuracy(&logits, &val_rows, &val_y)?;
        let test = accuracy(&logits, &test_rows, &test_y)?;
        history.push(EpochRecord {
            epoch,
            train_loss: loss_value,
            val_metric: val,
            test_metric: test,
        });
        debug!("epoch {epoch}: loss {loss_value:.4} val {val:.4} test {test:.4}");
        match &best {
            Some((_, b, _, _)) if val <= *b => {}
            _ => best = Some((epoch, val, test, params.clone())),
        }
        let best_epoch = best.as_ref().map_or(0, |b| b.0);
        if epoch - best_epoch >= cfg.patience {
            break;
        }
    }
    let (best_epoch, best_val, test_metric, best_params) = best.expect("at least one evaluation");
    Ok(TrainOutcome {
        best_params,
        best_epoch,
        best_val,
        test_metric,
        history,
    })
}

fn link_scores(z: &DenseMatrix, pairs: &[(usize, usize)]) -> Vec<f64> {
    pairs
        .iter()
        .map(|&(u, v)| z.row(u).iter().zip(z.row(v)).map(|(a, b)| a * b).sum())
        .collect()
}

/// ROC-AUC of inner-product scores on positive and negative pairs.
pub fn link_auc(z: &DenseMatrix, pos: &[(usize, usize)], neg: &[(usize, usize)]) -> Result<f64> {
    let mut scores = link_scores(z, pos);
    scores.extend(link_scores(z, neg));
    let labels: Vec<bool> = (0..pos.len() + neg.len()).map(|i| i < pos.len()).collect();
    roc_auc(&scores, &labels)
}

/// Link prediction with an inner-product decoder. Each epoch draws one
/// negative per training positive from the non-edges of the message graph.
pub fn train_link(
    features: &DenseMatrix,
    split: &EdgeSplit,
    model: &ModelConfig,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut params = ModelParams::init(model, &mut stream_rng(cfg.seed, Stream::Init))?;
    if model.layer_dims[0] != features.cols() || features.rows() != split.message.n() {
        return Err(Error::dims("link inputs", model.layer_dims[0], features.cols()));
    }
    if split.train_pos.is_empty() || split.val_pos.is_empty() || split.test_pos.is_empty() {
        return Err(Error::EmptyMask("edge split"));
    }
    let prop = Propagation::new(normalized_laplacian(&split.message), model, features)?;
    let mut dropout_rng = stream_rng(cfg.seed, Stream::Dropout);
    let mut neg_rng = stream_rng(cfg.seed, Stream::NegativeSampling);
    let mut adam = adam_for(&params);
    let no_exclusions = HashSet::new();

    let mut best: Option<(usize, f64, f64, ModelParams)> = None;
    let mut history = Vec::new();
    for epoch in 0..cfg.max_epochs {
        let negatives = sample_non_edges(&split.message, split.train_pos.len(), &no_exclusions, &mut neg_rng)?;
        let mut pairs = split.train_pos.clone();
        pairs.extend_from_slice(&negatives);
        let labels: Vec<f64> = (0..pairs.len())
            .map(|i| if i < split.train_pos.len() { 1.0 } else { 0.0 })
            .collect();

        let mut tape = Tape::new();
        let vars = register_params(&mut tape, &params);
        let x = tape.constant(features.clone());
        let out = forward(&mut tape, &vars, x, &prop, model, Mode::Train(&mut dropout_rng))?;
        let logits = tape.pair_dot(out.output, &pairs)?;
        let task = tape.bce_with_logits(logits, &labels)?;
        let loss = regularized(&mut tape, task, &out.l2_weights, model.l1_reg_weight)?;
        let loss_value = tape.scalar(loss);
        check_loss(loss_value, epoch)?;
        apply_update(&mut params, &vars, &tape, loss, &mut adam, cfg)?;

        if (epoch + 1) % cfg.eval_every != 0 && epoch + 1 != cfg.max_epochs {
            continue;
        }
        let z = predict(&params, features, &prop, model)?;
        if !z.is_finite() {
            return Err(Error::Diverged {
                epoch,
                reason: "non-finite embeddings".into(),
            });
        }
        let val = link_auc(&z, &split.val_pos, &split.val_neg)?;
        let test = link_auc(&z, &split.test_pos, &split.test_neg)?;
        history.push(EpochRecord {
            epoch,
            train_loss: loss_value,
            val_metric: val,
            test_metric: test,
        });
        debug!("epoch {epoch}: loss {loss_value:.4} val auc {val:.4} test auc {test:.4}");
        match &best {
            Some((_, b, _, _)) if val <= *b => {}
            _ => best = Some((epoch, val, test, params.clone())),
        }
    }
    let (best_epoch, best_val, test_metric, best_params) = best.expect("at least one evaluation");
    Ok(TrainOutcome {
        best_params,
        best_epoch,
        best_val,
        test_metric,
        history,
    })
}

/// Test accuracy of fixed parameters on a dataset.
pub fn evaluate_node(ds: &Dataset, model: &ModelConfig, params: &ModelParams) -> Result<f64> {
    let prop = Propagation::new(normalized_laplacian(&ds.graph), model, &ds.features)?;
    let logits = predict(params, &ds.features, &prop, model)?;
    let rows = ds.indices(Split::Test);
    accuracy(&logits, &rows, &ds.labels_of(&rows))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> DenseMatrix {
        DenseMatrix::filled(1, 1, v)
    }

    #[test]
    fn zero_gradient_only_decays() {
        let mut p = scalar(2.0);
        let mut st = AdamState::new([&p]);
        adam_step(&mut [&mut p], &[&scalar(0.0)], &[false], &mut st, 0.1, 0.5).unwrap();
        assert_eq!(p[(0, 0)], 2.0);
        adam_step(&mut [&mut p], &[&scalar(0.0)], &[true], &mut st, 0.1, 0.5).unwrap();
        assert!(p[(0, 0)] < 2.0);
    }

    #[test]
    fn constant_gradient_step_is_learning_rate() {
        let mut p = scalar(0.0);
        let mut st = AdamState::new([&p]);
        let mut prev = 0.0;
        for _ in 0..200 {
            adam_step(&mut [&mut p], &[&scalar(3.7)], &[false], &mut st, 0.01, 0.0).unwrap();
            let step = prev - p[(0, 0)];
            assert!((step - 0.01).abs() < 1e-6, "{step}");
            prev = p[(0, 0)];
        }
    }

    #[test]
    fn scalar_quadratic_converges() {
        // f(θ) = (θ − 3)²
        let mut p = scalar(-1.0);
        let mut st = AdamState::new([&p]);
        for _ in 0..500 {
            let g = scalar(2.0 * (p[(0, 0)] - 3.0));
            adam_step(&mut [&mut p], &[&g], &[false], &mut st, 0.1, 0.0).unwrap();
        }
        assert!((p[(0, 0)] - 3.0).abs() < 1e-4, "{}", p[(0, 0)]);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut p = scalar(1.0);
        let mut st = AdamState::new([&p]);
        let r = adam_step(&mut [&mut p], &[&scalar(f64::NAN)], &[false], &mut st, 0.1, 0.0);
        assert!(matches!(r, Err(Error::NonFinite { .. })));
        assert_eq!(p[(0, 0)], 1.0);
    }

    #[test]
    fn config_checks() {
        assert!(TrainConfig::node_default(0).validate().is_ok());
        let mut c = TrainConfig::link_default(0);
        assert_eq!((c.max_epochs, c.eval_every), (100, 10));
        c.patience = 1000;
        assert!(c.validate().is_err());
    }
}
