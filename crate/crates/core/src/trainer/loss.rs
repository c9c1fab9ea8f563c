use rayon::prelude::*;

use super::TrainConfig;
use crate::error::Result;
use crate::model::{bind, forward_document, ModelParams};
use crate::tensor::{Float, Gradients, Tape, Var};
use crate::textpipe::TensorizedDocument;

/// `λ·Σ‖θᵢ‖²` for `power` 2, `λ·‖θ‖` (norm of all of `params` together)
/// for `power` 1.
pub fn regularizer<T: Float>(tape: &mut Tape<'_, T>, params: &[Var], lambda: f64, power: u8) -> Result<Var> {
    let mut parts = Vec::with_capacity(params.len());
    for &p in params {
        parts.push(tape.sum_squares(p)?);
    }
    let total = tape.concat(&parts)?;
    let mut r = tape.sum(total)?;
    if power == 1 {
        r = tape.sqrt(r)?;
    }
    Ok(tape.scale(r, T::of(lambda))?)
}

/// Value of [`regularizer`] over the trainable parameters, in `f64`.
pub fn regularizer_value<T: Float>(params: &ModelParams<T>, lambda: f64, power: u8) -> f64 {
    let sq: f64 = params
        .tensors()
        .iter()
        .filter(|t| t.requires_grad())
        .map(|t| t.data().iter().map(|x| x.as_f64() * x.as_f64()).sum::<f64>())
        .sum();
    lambda * if power == 1 { sq.sqrt() } else { sq }
}

/// `J = −(1/B)·Σ ln max(p_true, 1e-12) + regularizer(params)`.
pub fn compute_loss<T: Float>(
    tape: &mut Tape<'_, T>,
    probs: &[Var],
    labels: &[usize],
    params: &[Var],
    lambda: f64,
    power: u8,
) -> Result<Var> {
    assert_eq!(probs.len(), labels.len(), "one label per prediction");
    let mut nlls = Vec::with_capacity(probs.len());
    for (&p, &y) in probs.iter().zip(labels) {
        nlls.push(tape.nll(p, y)?);
    }
    let nlls = tape.concat(&nlls)?;
    let total = tape.sum(nlls)?;
    let mut loss = tape.scale(total, T::of(1.0 / probs.len() as f64))?;
    if lambda != 0.0 && !params.is_empty() {
        let r = regularizer(tape, params, lambda, power)?;
        loss = tape.add(loss, r)?;
    }
    Ok(loss)
}

#[derive(Debug, Clone)]
pub struct BatchGradients<T> {
    /// Batch objective `J`, including the regularizer.
    pub loss: f64,
    pub grads: Gradients<T>,
}

/// Gradient of [`compute_loss`] over `docs`, computed one document per tape
/// in parallel and merged in document order.
pub fn batch_gradients<T: Float>(
    params: &ModelParams<T>,
    docs: &[&TensorizedDocument],
    cfg: &TrainConfig,
) -> Result<BatchGradients<T>> {
    let per_doc: Vec<(f64, Gradients<T>)> = docs
        .par_iter()
        .map(|doc| {
            let mut tape = Tape::new();
            let p = bind(&mut tape, params);
            let out = forward_document(&mut tape, params, &p, doc)?;
            let nll = tape.nll(out.probs, doc.label)?;
            Ok((tape.scalar(nll).as_f64(), tape.backward(nll)?))
        })
        .collect::<Result<_>>()?;
    let scale = 1.0 / docs.len() as f64;
    let mut grads = Gradients::default();
    let mut loss = 0.0;
    for (l, g) in &per_doc {
        loss += l;
        grads.add_scaled(g, T::of(scale));
    }
    loss *= scale;
    if cfg.l2 != 0.0 {
        let mut tape = Tape::new();
        let vars: Vec<Var> = params
            .ids()
            .filter(|&id| params.get(id).requires_grad())
            .map(|id| tape.param(id, params.get(id)))
            .collect();
        if !vars.is_empty() {
            let r = regularizer(&mut tape, &vars, cfg.l2, cfg.l2_power)?;
            loss += tape.scalar(r).as_f64();
            grads.add_scaled(&tape.backward(r)?, T::one());
        }
    }
    Ok(BatchGradients { loss, grads })
}
