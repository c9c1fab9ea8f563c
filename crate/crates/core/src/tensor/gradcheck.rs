//! Central finite-difference oracle for analytic gradients.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{Tensor, TensorError};

/// A named, indexable collection of `f64` parameter tensors.
pub trait ParamSet {
    fn len(&self) -> usize;
    fn name(&self, i: usize) -> &str;
    fn tensor(&self, i: usize) -> &Tensor<f64>;
    fn tensor_mut(&mut self, i: usize) -> &mut Tensor<f64>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ParamSet for Vec<(String, Tensor<f64>)> {
    fn len(&self) -> usize {
        <[_]>::len(self)
    }
    fn name(&self, i: usize) -> &str {
        &self[i].0
    }
    fn tensor(&self, i: usize) -> &Tensor<f64> {
        &self[i].1
    }
    fn tensor_mut(&mut self, i: usize) -> &mut Tensor<f64> {
        &mut self[i].1
    }
}

/// One objective evaluation: its value and the branch fingerprint of the pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub signature: u64,
}

impl Evaluation {
    pub fn smooth(value: f64) -> Self {
        Self {
            value,
            signature: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FdOptions {
    pub step: f64,
    /// Groups larger than this are checked on a seeded random sample of this many coordinates.
    pub max_coords: usize,
    pub seed: u64,
    pub floor: f64,
}

impl Default for FdOptions {
    fn default() -> Self {
        Self {
            step: 1e-3,
            max_coords: 256,
            seed: 0,
            floor: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GroupReport {
    pub name: String,
    pub numel: usize,
    pub checked: usize,
    /// Coordinates whose ±step perturbation crossed a non-differentiable point.
    pub skipped_kinks: usize,
    pub max_rel_error: f64,
    pub worst_index: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct FdReport {
    pub groups: Vec<GroupReport>,
}

impl FdReport {
    pub fn max_rel_error(&self) -> f64 {
        self.groups
            .iter()
            .map(|g| g.max_rel_error)
            .fold(0.0, f64::max)
    }

    pub fn checked(&self) -> usize {
        self.groups.iter().map(|g| g.checked).sum()
    }
}

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares `analytic[i]` (one dense gradient per parameter tensor) against
/// `(f(θ+h) − f(θ−h)) / 2h` evaluated in `f64`.
///
/// Coordinates where either perturbed pass takes a different branch than the
/// baseline are skipped and counted. The objective is evaluated twice at the
/// baseline; differing values abort the check.
pub fn finite_diff_check<P, F, E>(
    params: &mut P,
    analytic: &[Vec<f64>],
    opts: &FdOptions,
    mut f: F,
) -> Result<FdReport, E>
where
    P: ParamSet,
    F: FnMut(&P) -> Result<Evaluation, E>,
    E: From<TensorError>,
{
    assert_eq!(analytic.len(), params.len(), "one analytic gradient per tensor");
    let base = f(params)?;
    let again = f(params)?;
    if base.value.to_bits() != again.value.to_bits() || base.signature != again.signature {
        return Err(TensorError::NonDeterministic {
            first: base.value,
            second: again.value,
        }
        .into());
    }

    let mut groups = Vec::with_capacity(params.len());
    for (gi, grad) in analytic.iter().enumerate() {
        let numel = params.tensor(gi).numel();
        assert_eq!(grad.len(), numel, "analytic gradient length for {}", params.name(gi));
        let coords: Vec<usize> = if numel <= opts.max_coords {
            (0..numel).collect()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ (gi as u64).wrapping_mul(0x9e37));
            let mut idx = rand::seq::index::sample(&mut rng, numel, opts.max_coords).into_vec();
            idx.sort_unstable();
            idx
        };

        let mut report = GroupReport {
            name: params.name(gi).to_string(),
            numel,
            checked: 0,
            skipped_kinks: 0,
            max_rel_error: 0.0,
            worst_index: 0,
        };
        for c in coords {
            let orig = params.tensor(gi).data()[c];
            params.tensor_mut(gi).data_mut()[c] = orig + opts.step;
            let plus = f(params);
            params.tensor_mut(gi).data_mut()[c] = orig - opts.step;
            let minus = f(params);
            params.tensor_mut(gi).data_mut()[c] = orig;
            let (plus, minus) = (plus?, minus?);
            if plus.signature != base.signature || minus.signature != base.signature {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus.value - minus.value) / (2.0 * opts.step);
            let err = relative_error(grad[c], numeric, opts.floor);
            report.checked += 1;
            if err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst_index = c;
            }
        }
        groups.push(report);
    }
    Ok(FdReport { groups })
}
