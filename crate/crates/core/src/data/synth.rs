use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor::Tensor;

/// Gaussian clusters with unit per-coordinate noise.
///
/// When `num_classes <= dim` the class means sit on scaled coordinate axes,
/// so every pair of means is exactly `separation` apart. Otherwise the means
/// are random points on a sphere of radius `separation / sqrt(2)`, which puts
/// pairs `separation` apart on average.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec {
    pub num_classes: usize,
    pub samples_per_class: usize,
    pub dim: usize,
    pub separation: f64,
    pub seed: u64,
}

pub fn synth_blobs(spec: &BlobSpec) -> Result<LabeledDataset> {
    let BlobSpec {
        num_classes,
        samples_per_class,
        dim,
        separation,
        seed,
    } = *spec;
    if num_classes == 0 || samples_per_class == 0 || dim == 0 {
        return Err(Error::Config("blob counts must be positive".into()));
    }
    if !(separation.is_finite() && separation >= 0.0) {
        return Err(Error::Config("blob separation must be finite and non-negative".into()));
    }
    let radius = separation / 2f64.sqrt();
    let mut mean_rng = rng::stream(seed, &[0xB10B, 0]);
    let means: Vec<Vec<f64>> = (0..num_classes)
        .map(|c| {
            if num_classes <= dim {
                (0..dim).map(|j| if j == c { radius } else { 0.0 }).collect()
            } else {
                let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut mean_rng)).collect();
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                v.into_iter().map(|x| x * radius / norm).collect()
            }
        })
        .collect();

    let total = num_classes * samples_per_class;
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut rng::stream(seed, &[0xB10B, 1]));
    let mut noise = rng::stream(seed, &[0xB10B, 2]);
    let mut data = Vec::with_capacity(total * dim);
    let mut labels = Vec::with_capacity(total);
    for slot in order {
        let class = slot / samples_per_class;
        labels.push(class);
        for &m in &means[class] {
            let z: f64 = StandardNormal.sample(&mut noise);
            data.push(m + z);
        }
    }
    LabeledDataset::new(Tensor::new(vec![total, dim], data)?, labels, num_classes)
}
