use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Split;
use crate::numerics::{argmax, softmax_cross_entropy, ParameterStore, Tensor2, TrainConfig};

/// A node classifier trained by the shared loop.
pub trait Classifier {
    fn store(&self) -> &ParameterStore;
    fn store_mut(&mut self) -> &mut ParameterStore;
    /// Evaluation-mode logits, one row per node.
    fn logits(&self) -> Result<Tensor2>;
    /// Training-mode pass: mean cross-entropy over `nodes`, with gradients
    /// added to the store.
    fn accumulate_loss_grad(
        &mut self,
        nodes: &[usize],
        labels: &[Option<usize>],
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<f64>;
}

/// Mean cross-entropy over `nodes` and its gradient w.r.t. all logits.
pub(crate) fn cross_entropy(logits: &Tensor2, nodes: &[usize], labels: &[Option<usize>]) -> Result<(f64, Tensor2)> {
    if nodes.is_empty() {
        return Err(Error::Empty("training node set"));
    }
    let inv = 1.0 / nodes.len() as f64;
    let mut d = Tensor2::zeros(logits.rows(), logits.cols());
    let mut loss = 0.0;
    for &u in nodes {
        let y = labels.get(u).copied().flatten().ok_or(Error::Split(format!("node {u} is unlabeled")))?;
        let (l, g) = softmax_cross_entropy(logits.row(u), y)?;
        loss += l * inv;
        for (o, gi) in d.row_mut(u).iter_mut().zip(g) {
            *o += gi * inv;
        }
    }
    Ok((loss, d))
}

/// Fraction of `nodes` whose argmax logit (ties to the lower class) equals
/// the label.
pub fn accuracy(logits: &Tensor2, nodes: &[usize], labels: &[Option<usize>]) -> Result<f64> {
    if nodes.is_empty() {
        return Err(Error::Empty("evaluation node set"));
    }
    let mut hits = 0usize;
    for &u in nodes {
        let y = labels.get(u).copied().flatten().ok_or(Error::Split(format!("node {u} is unlabeled")))?;
        if argmax(logits.row(u)) == y {
            hits += 1;
        }
    }
    Ok(hits as f64 / nodes.len() as f64)
}

pub fn evaluate<C: Classifier + ?Sized>(model: &C, nodes: &[usize], labels: &[Option<usize>]) -> Result<f64> {
    accuracy(&model.logits()?, nodes, labels)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub best_val_accuracy: f64,
    /// 1-based epoch of the restored snapshot
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub train_losses: Vec<f64>,
}

/// SGD with momentum on mean cross-entropy over `split.train`.
///
/// After every epoch the validation accuracy is measured; a strict
/// improvement snapshots the parameters. Training stops once `patience`
/// epochs pass without improvement, or at `max_epochs`, and the best snapshot
/// is restored.
pub fn train_classifier<C: Classifier + ?Sized>(
    model: &mut C,
    labels: &[Option<usize>],
    split: &Split,
    cfg: &TrainConfig,
    rng: &mut ChaCha8Rng,
) -> Result<TrainOutcome> {
    if split.train.is_empty() {
        return Err(Error::Empty("training split"));
    }
    if split.val.is_empty() {
        return Err(Error::Empty("validation split"));
    }
    let opt = cfg.classifier_sgd();
    let mut best_acc = f64::NEG_INFINITY;
    let mut best_epoch = 0;
    let mut snapshot = model.store().clone();
    let mut since = 0;
    let mut losses = Vec::new();
    let mut order = split.train.clone();
    let mut epoch = 0;
    while epoch < cfg.max_epochs {
        epoch += 1;
        let mut epoch_loss = 0.0;
        match cfg.batch_size {
            Some(b) if b < order.len() => {
                order.shuffle(rng);
                let chunks = order.chunks(b).count() as f64;
                for chunk in order.chunks(b) {
                    epoch_loss += step(model, chunk, labels, cfg, &opt, rng)? / chunks;
                }
            }
            _ => epoch_loss = step(model, &split.train, labels, cfg, &opt, rng)?,
        }
        losses.push(epoch_loss);
        let acc = evaluate(model, &split.val, labels)?;
        if acc > best_acc {
            best_acc = acc;
            best_epoch = epoch;
            snapshot.copy_values_from(model.store());
            since = 0;
        } else {
            since += 1;
            if since >= cfg.patience {
                break;
            }
        }
    }
    model.store_mut().copy_values_from(&snapshot);
    Ok(TrainOutcome { best_val_accuracy: best_acc, best_epoch, epochs_run: epoch, train_losses: losses })
}

fn step<C: Classifier + ?Sized>(
    model: &mut C,
    nodes: &[usize],
    labels: &[Option<usize>],
    cfg: &TrainConfig,
    opt: &crate::numerics::Sgd,
    rng: &mut ChaCha8Rng,
) -> Result<f64> {
    model.store_mut().zero_grads();
    let loss = model.accumulate_loss_grad(nodes, labels, cfg.dropout, rng)?;
    if !loss.is_finite() {
        return Err(Error::Undefined("classifier loss diverged"));
    }
    model.store_mut().sgd_momentum_step(opt);
    Ok(loss)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        let logits = Tensor2::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0], vec![0.0, 3.0]]).unwrap();
        let labels = vec![Some(0), Some(1), Some(0), Some(0)];
        assert_eq!(accuracy(&logits, &[0, 1, 2], &labels).unwrap(), 1.0);
        assert_eq!(accuracy(&logits, &[0, 1, 2, 3], &labels).unwrap(), 0.75);
        assert!(accuracy(&logits, &[], &labels).is_err());
    }

    #[test]
    fn cross_entropy_averages_rows() {
        let logits = Tensor2::from_rows(&[vec![0.0, 0.0], vec![5.0, 1.0], vec![3.0, 3.0]]).unwrap();
        let labels = vec![Some(0), Some(1), None];
        let (l, d) = cross_entropy(&logits, &[0, 1], &labels).unwrap();
        let want = 0.5 * (std::f64::consts::LN_2 + (4.0f64 + (-4.0f64).exp().ln_1p()));
        assert!((l - want).abs() < 1e-12);
        assert_eq!(d.row(2), &[0.0, 0.0]);
        assert!((d.row(0)[0] + 0.25).abs() < 1e-15);
        assert!(cross_entropy(&logits, &[2], &labels).is_err());
    }
}
