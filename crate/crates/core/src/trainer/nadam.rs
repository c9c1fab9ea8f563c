use super::TrainConfig;
use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::tensor::{Float, Gradients};

/// First and second moments per parameter, and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState<T> {
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
    pub t: u64,
}

impl<T: Float> OptimizerState<T> {
    pub fn new(params: &ModelParams<T>) -> Self {
        let zeros = || params.tensors().iter().map(|x| vec![T::zero(); x.numel()]).collect();
        Self {
            m: zeros(),
            v: zeros(),
            t: 0,
        }
    }
}

/// One Nadam update of every trainable parameter:
///
/// ```text
/// m ← β1·m + (1−β1)·g        v ← β2·v + (1−β2)·g²
/// m̂ = m/(1−β1ᵗ)              v̂ = v/(1−β2ᵗ)
/// θ ← θ − lr·(β1·m̂ + (1−β1)·g/(1−β1ᵗ)) / (√v̂ + ε)
/// ```
///
/// Parameters without a gradient entry see `g = 0`. Frozen tensors and the
/// padding row of each embedding table are left untouched. Every gradient
/// is checked for finiteness before anything is modified.
pub fn nadam_step<T: Float>(
    params: &mut ModelParams<T>,
    grads: &Gradients<T>,
    state: &mut OptimizerState<T>,
    cfg: &TrainConfig,
) -> Result<()> {
    for (id, g) in grads.iter() {
        let finite = match g {
            crate::tensor::ParamGrad::Dense(v) => v.iter().all(|x| x.is_finite()),
            crate::tensor::ParamGrad::Rows { rows, .. } => rows.values().flatten().all(|x| x.is_finite()),
        };
        if !finite {
            return Err(Error::NonFiniteGradient(params.name(id).to_string()));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let bc1 = 1.0 - b1.powi(t);
    let bc2 = 1.0 - b2.powi(t);
    let (b1t, b2t) = (T::of(b1), T::of(b2));
    let (one_b1, one_b2) = (T::of(1.0 - b1), T::of(1.0 - b2));
    let (bc1t, bc2t) = (T::of(bc1), T::of(bc2));
    let (lr, eps) = (T::of(cfg.learning_rate), T::of(cfg.epsilon));

    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        if !params.get(id).requires_grad() {
            continue;
        }
        let numel = params.get(id).numel();
        let g = grads.dense(id, numel);
        let frozen = if params.is_frozen_row(id, 0) {
            params.get(id).row_width()
        } else {
            0
        };
        let (m, v) = (&mut state.m[id.0], &mut state.v[id.0]);
        let theta = params.get_mut(id).data_mut();
        for k in frozen..numel {
            let gk = g[k];
            m[k] = b1t * m[k] + one_b1 * gk;
            v[k] = b2t * v[k] + one_b2 * gk * gk;
            let m_hat = m[k] / bc1t;
            let v_hat = v[k] / bc2t;
            let num = b1t * m_hat + one_b1 * gk / bc1t;
            theta[k] = theta[k] - lr * num / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}
