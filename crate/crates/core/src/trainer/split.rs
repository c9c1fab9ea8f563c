use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Document indices of a train/validation partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub stratified: bool,
}

/// Number of training documents: `⌈(1−f)·n⌉`, kept within `[1, n−1]`.
fn train_count(n: usize, val_fraction: f64) -> usize {
    let raw = ((1.0 - val_fraction) * n as f64 - 1e-9).ceil() as usize;
    raw.clamp(1, n - 1)
}

/// Seeded train/validation split of documents labelled by author.
///
/// When every author has at least two documents, each author contributes to
/// validation in proportion to its size (largest remainder, ties to the lower
/// author id) and keeps at least one training document. Otherwise the split
/// falls back to a plain shuffle with a warning.
pub fn split_data(labels: &[usize], val_fraction: f64, seed: u64) -> Result<Split> {
    let n = labels.len();
    if n < 2 {
        return Err(Error::Data(format!("need at least 2 documents to split, got {n}")));
    }
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Config("val_fraction must lie strictly between 0 and 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_train = train_count(n, val_fraction);
    let n_val = n - n_train;

    let classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut by_author: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        by_author[y].push(i);
    }
    let present: Vec<usize> = (0..classes).filter(|&a| !by_author[a].is_empty()).collect();
    if present.iter().any(|&a| by_author[a].len() < 2) {
        log::warn!("an author has a single document; falling back to an unstratified split");
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        let validation = idx.split_off(n_train);
        return Ok(Split {
            train: idx,
            validation,
            stratified: false,
        });
    }

    let mut quota = vec![0usize; classes];
    let mut remainders = Vec::with_capacity(present.len());
    for &a in &present {
        let exact = n_val as f64 * by_author[a].len() as f64 / n as f64;
        quota[a] = (exact.floor() as usize).min(by_author[a].len() - 1);
        remainders.push((exact - exact.floor(), a));
    }
    remainders.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    let mut missing = n_val - quota.iter().sum::<usize>();
    while missing > 0 {
        let before = missing;
        for &(_, a) in &remainders {
            if missing > 0 && quota[a] + 1 < by_author[a].len() {
                quota[a] += 1;
                missing -= 1;
            }
        }
        if missing == before {
            break;
        }
    }

    let mut train = Vec::with_capacity(n_train);
    let mut validation = Vec::with_capacity(n_val);
    for &a in &present {
        let mut docs = by_author[a].clone();
        docs.shuffle(&mut rng);
        let keep = docs.len() - quota[a];
        validation.extend_from_slice(&docs[keep..]);
        docs.truncate(keep);
        train.extend(docs);
    }
    train.shuffle(&mut rng);
    validation.shuffle(&mut rng);
    Ok(Split {
        train,
        validation,
        stratified: true,
    })
}
