//! Class-stratified mini-batches.

use presence_csi::Case;
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use crate::{Result, TrainError};

/// Minimum originals per class in every batch, so each anchor has a positive.
pub const MIN_PER_CLASS: usize = 2;

/// Splits a shuffled epoch into `ceil(N / batch_size)` batches (fewer if a
/// class is too small), each holding an equal share of every class present.
/// Every sample appears exactly once.
pub fn stratified_batches(labels: &[Case], batch_size: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<usize>>> {
    if batch_size < MIN_PER_CLASS * Case::ALL.len() {
        return Err(TrainError::Config(format!("batch size {batch_size} cannot hold {MIN_PER_CLASS} samples per class")));
    }
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); Case::ALL.len()];
    for (i, label) in labels.iter().enumerate() {
        per_class[label.index()].push(i);
    }
    for list in &mut per_class {
        list.shuffle(rng);
    }
    let present: Vec<&Vec<usize>> = per_class.iter().filter(|l| !l.is_empty()).collect();
    let smallest = present.iter().map(|l| l.len()).min().unwrap_or(0);
    let count = labels.len().div_ceil(batch_size).min(smallest / MIN_PER_CLASS);
    if count == 0 {
        return Err(TrainError::Dataset(format!("need at least {MIN_PER_CLASS} samples of every present class")));
    }
    let mut batches = vec![Vec::with_capacity(batch_size); count];
    for list in present {
        let (base, extra) = (list.len() / count, list.len() % count);
        let mut offset = 0;
        for (b, batch) in batches.iter_mut().enumerate() {
            let take = base + usize::from(b < extra);
            batch.extend_from_slice(&list[offset..offset + take]);
            offset += take;
        }
    }
    Ok(batches)
}
