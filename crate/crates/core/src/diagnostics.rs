//! Full-model gradient check against 64-bit central finite differences.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fixtures::tiny_fixture;
use crate::model::{bind, forward_document, ModelParams};
use crate::tensor::gradcheck::{finite_diff_check, Evaluation, FdOptions, GroupReport};
use crate::tensor::{Tape, Var};
use crate::textpipe::TensorizedDocument;
use crate::trainer::compute_loss;

/// Relative-error bound every checked coordinate must meet.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GradcheckOptions {
    pub seed: u64,
    /// Regularization coefficient included in the checked objective.
    pub lambda: f64,
    pub l2_power: u8,
    pub fd: FdOptions,
    /// Scales the analytic gradient of this parameter group before the
    /// comparison; a negative control for the checker itself.
    pub corrupt: Option<(String, f64)>,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            lambda: 1e-3,
            l2_power: 2,
            fd: FdOptions {
                step: 1e-5,
                max_coords: 256,
                seed: 0,
                floor: 1e-6,
            },
            corrupt: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradcheckReport {
    pub groups: Vec<GroupReport>,
    pub max_rel_error: f64,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
    pub seconds: f64,
}

fn objective<'p>(
    tape: &mut Tape<'p, f64>,
    params: &'p ModelParams<f64>,
    docs: &[TensorizedDocument],
    opts: &GradcheckOptions,
) -> Result<Var> {
    let p = bind(tape, params);
    let mut probs = Vec::with_capacity(docs.len());
    for d in docs {
        probs.push(forward_document(tape, params, &p, d)?.probs);
    }
    let labels: Vec<usize> = docs.iter().map(|d| d.label).collect();
    let trainable: Vec<Var> = params
        .ids()
        .filter(|&id| params.get(id).requires_grad())
        .map(|id| p.var(id))
        .collect();
    compute_loss(tape, &probs, &labels, &trainable, opts.lambda, opts.l2_power)
}

/// Checks the gradient of the full training objective (mean NLL over a
/// two-document batch plus the regularizer) of the tiny style-mode model,
/// coordinate by coordinate. Perturbations that flip a ReLU or max branch
/// are skipped and counted per group.
pub fn model_gradcheck(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    let start = Instant::now();
    let (params32, docs) = tiny_fixture(opts.seed)?;
    let mut params: ModelParams<f64> = params32.cast();

    let mut analytic: Vec<Vec<f64>> = {
        let mut tape = Tape::new();
        let loss = objective(&mut tape, &params, &docs, opts)?;
        let grads = tape.backward(loss)?;
        params.ids().map(|id| grads.dense(id, params.get(id).numel())).collect()
    };
    if let Some((name, factor)) = &opts.corrupt {
        let id = params
            .find(name)
            .ok_or_else(|| Error::Config(format!("no parameter group named {name:?}")))?;
        analytic[id.0].iter_mut().for_each(|g| *g *= factor);
    }
    let fd = finite_diff_check(&mut params, &analytic, &opts.fd, |p| -> Result<Evaluation> {
        let mut tape = Tape::with_branch_tracking();
        let loss = objective(&mut tape, p, &docs, opts)?;
        Ok(Evaluation {
            value: tape.scalar(loss),
            signature: tape.branch_signature(),
        })
    })?;
    let max_rel_error = fd.max_rel_error();
    Ok(GradcheckReport {
        checked: fd.checked(),
        max_rel_error,
        tolerance: GRADCHECK_TOLERANCE,
        passed: max_rel_error < GRADCHECK_TOLERANCE,
        groups: fd.groups,
        seconds: start.elapsed().as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fresh_model_passes_and_lists_every_group() {
        let r = model_gradcheck(&GradcheckOptions::default()).unwrap();
        assert!(r.passed, "max relative error {}", r.max_rel_error);
        let (params, _) = tiny_fixture(0).unwrap();
        let names: Vec<&str> = r.groups.iter().map(|g| g.name.as_str()).collect();
        let want: Vec<&str> = params.named().map(|(n, _)| n).collect();
        assert_eq!(names, want);
    }

    #[test]
    fn corrupted_gradient_fails() {
        let opts = GradcheckOptions {
            corrupt: Some(("syntactic.lstm.fwd.w_hh".into(), 1.5)),
            ..GradcheckOptions::default()
        };
        let r = model_gradcheck(&opts).unwrap();
        assert!(!r.passed);
        let worst = r.groups.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error)).unwrap();
        assert_eq!(worst.name, "syntactic.lstm.fwd.w_hh");
    }

    #[test]
    fn unknown_corrupt_group_is_rejected() {
        let opts = GradcheckOptions {
            corrupt: Some(("no.such.group".into(), 2.0)),
            ..GradcheckOptions::default()
        };
        assert!(matches!(model_gradcheck(&opts), Err(Error::Config(_))));
    }
}
