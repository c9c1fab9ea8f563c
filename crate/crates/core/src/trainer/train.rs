use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{batch_gradients, evaluate, nadam_step, regularizer_value, OptimizerState, TrainConfig};
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::tensor::Float;
use crate::textpipe::TensorizedDocument;

/// Stream tag mixed into the seed for epoch shuffles.
const SHUFFLE_STREAM: u64 = 0x7368_7566;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean batch objective over the epoch.
    pub train_loss: f64,
    /// Validation objective after the epoch; absent without validation data.
    pub val_loss: Option<f64>,
    pub val_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn train_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.train_loss).collect()
    }

    /// `epoch,train_loss,val_loss,val_acc` with one row per epoch; missing
    /// validation values are left empty.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_acc\n");
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for e in &self.epochs {
            let _ = writeln!(out, "{},{},{},{}", e.epoch, e.train_loss, opt(e.val_loss), opt(e.val_acc));
        }
        out
    }
}

pub fn train<T: Float>(
    params: ModelParams<T>,
    train_docs: &[TensorizedDocument],
    val_docs: &[TensorizedDocument],
    cfg: &TrainConfig,
) -> Result<(ModelParams<T>, TrainHistory)> {
    train_with(params, train_docs, val_docs, cfg, |_| {})
}

/// Mini-batch training: each epoch shuffles the training set from the seed,
/// walks it in batches of `batch_size` (the last one may be shorter) and
/// applies one Nadam step per batch. `on_epoch` sees every record as it is
/// produced.
pub fn train_with<T: Float>(
    mut params: ModelParams<T>,
    train_docs: &[TensorizedDocument],
    val_docs: &[TensorizedDocument],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<(ModelParams<T>, TrainHistory)> {
    cfg.validate()?;
    if train_docs.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ SHUFFLE_STREAM);
    let mut state = OptimizerState::new(&params);
    let mut history = TrainHistory::default();
    let mut order: Vec<usize> = (0..train_docs.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size) {
            let docs: Vec<&TensorizedDocument> = chunk.iter().map(|&i| &train_docs[i]).collect();
            let batch = batch_gradients(&params, &docs, cfg)?;
            nadam_step(&mut params, &batch.grads, &mut state, cfg)?;
            total += batch.loss;
            batches += 1;
        }
        let (val_loss, val_acc) = if val_docs.is_empty() {
            (None, None)
        } else {
            let r = evaluate(&params, val_docs)?;
            (Some(r.loss + regularizer_value(&params, cfg.l2, cfg.l2_power)), Some(r.accuracy))
        };
        let record = EpochRecord {
            epoch,
            train_loss: total / batches as f64,
            val_loss,
            val_acc,
        };
        log::debug!(
            "epoch {epoch}: train_loss {:.5} val_acc {}",
            record.train_loss,
            val_acc.map_or("-".into(), |a| format!("{a:.4}"))
        );
        on_epoch(&record);
        history.epochs.push(record);
    }
    Ok((params, history))
}
