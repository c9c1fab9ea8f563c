use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{argmax, predict, ModelParams};
use crate::tensor::Float;
use crate::textpipe::TensorizedDocument;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub accuracy: f64,
    /// Mean negative log-likelihood of the true class.
    pub loss: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub total: usize,
}

/// Accuracy of argmax predictions (ties to the lowest class id), mean
/// negative log-likelihood and confusion counts.
pub fn evaluate<T: Float>(params: &ModelParams<T>, docs: &[TensorizedDocument]) -> Result<EvalReport> {
    if docs.is_empty() {
        return Err(Error::Data("cannot evaluate on an empty set".into()));
    }
    let c = params.config().num_classes;
    let outcomes: Vec<(usize, usize, f64)> = docs
        .par_iter()
        .map(|doc| {
            let pred = predict(params, doc)?;
            let p = pred.probs[doc.label].as_f64().max(1e-12);
            Ok((doc.label, argmax(&pred.probs), -p.ln()))
        })
        .collect::<Result<_>>()?;
    let mut confusion = vec![vec![0usize; c]; c];
    let mut correct = 0;
    let mut loss = 0.0;
    for &(y, k, l) in &outcomes {
        confusion[y][k] += 1;
        correct += usize::from(y == k);
        loss += l;
    }
    let n = docs.len();
    Ok(EvalReport {
        accuracy: correct as f64 / n as f64,
        loss: loss / n as f64,
        confusion,
        total: n,
    })
}
