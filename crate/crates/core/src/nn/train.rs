use rand::seq::SliceRandom;

use super::adam::Adam;
use super::model::Model;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

/// Identifies the shuffling stream for a run of epochs. The permutation of
/// epoch `k` is drawn from `(seed, stream, k)` alone, so the same global
/// epoch index always sees the same order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EpochOrder {
    pub seed: u64,
    pub stream: u64,
    pub first_epoch: u64,
}

pub fn epoch_permutation(len: usize, order: EpochOrder, epoch: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..len).collect();
    perm.shuffle(&mut rng::stream(order.seed, &[order.stream, epoch]));
    perm
}

/// Trains `model` in place with mini-batch Adam and returns the mean batch
/// loss of each epoch.
///
/// Batches that would be shorter than `batch_size` are dropped; a dataset
/// smaller than one batch is trained as a single batch.
pub fn train_epochs(
    model: &mut Model,
    optimizer: &mut Adam,
    data: &LabeledDataset,
    config: &TrainConfig,
    order: EpochOrder,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyData);
    }
    if config.batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let batch = config.batch_size.min(data.len());
    let mut losses = Vec::with_capacity(config.epochs);
    for e in 0..config.epochs as u64 {
        let perm = epoch_permutation(data.len(), order, order.first_epoch + e);
        let mut total = 0.0;
        let mut count = 0;
        for chunk in perm.chunks_exact(batch) {
            let x = data.features().select_rows(chunk)?;
            let y: Vec<usize> = chunk.iter().map(|&i| data.labels()[i]).collect();
            let (loss, grads) = model.loss_and_grad(&x, &y)?;
            optimizer.step(model.params_mut(), &grads, config.lr)?;
            total += loss;
            count += 1;
        }
        losses.push(total / count as f64);
    }
    Ok(losses)
}
