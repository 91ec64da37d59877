use rand::seq::SliceRandom;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng;

/// Shuffles all sample indices once and cuts consecutive chunks of the
/// requested sizes. Returns the chunks and the unused remainder.
pub fn split_iid_indices(len: usize, sizes: &[usize], seed: u64) -> Result<(Vec<Vec<usize>>, Vec<usize>)> {
    let requested: usize = sizes.iter().sum();
    if requested > len {
        return Err(Error::Size {
            requested,
            available: len,
        });
    }
    let mut perm: Vec<usize> = (0..len).collect();
    perm.shuffle(&mut rng::stream(seed, &[0x5711]));
    let mut parts = Vec::with_capacity(sizes.len());
    let mut start = 0;
    for &size in sizes {
        parts.push(perm[start..start + size].to_vec());
        start += size;
    }
    Ok((parts, perm[start..].to_vec()))
}

/// Disjoint IID partitions of `dataset`, one per entry of `sizes`.
pub fn split_iid(dataset: &LabeledDataset, sizes: &[usize], seed: u64) -> Result<Vec<LabeledDataset>> {
    if sizes.contains(&0) {
        return Err(Error::Config("partition sizes must be positive".into()));
    }
    let (parts, _) = split_iid_indices(dataset.len(), sizes, seed)?;
    parts.iter().map(|p| dataset.subset(p)).collect()
}
