//! Labeled datasets, loaders, synthetic generators, client splitting and
//! label-shift resampling.

mod census;
mod idx;
mod shift;
mod split;
mod synth;

pub use census::{census_width, load_census, CensusEncoder};
pub use idx::{load_idx, read_idx_images, read_idx_labels};
pub use shift::{apply_label_shift, label_shift_indices, ShiftSpec, ShiftTarget};
pub use split::{split_iid, split_iid_indices};
pub use synth::{synth_blobs, BlobSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Features plus integer class labels. Immutable after construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DatasetRepr", into = "DatasetRepr")]
pub struct LabeledDataset {
    features: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
    histogram: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct DatasetRepr {
    features: Tensor,
    labels: Vec<usize>,
    num_classes: usize,
}

impl TryFrom<DatasetRepr> for LabeledDataset {
    type Error = Error;

    fn try_from(r: DatasetRepr) -> Result<Self> {
        LabeledDataset::new(r.features, r.labels, r.num_classes)
    }
}

impl From<LabeledDataset> for DatasetRepr {
    fn from(d: LabeledDataset) -> Self {
        DatasetRepr {
            features: d.features,
            labels: d.labels,
            num_classes: d.num_classes,
        }
    }
}

impl LabeledDataset {
    pub fn new(features: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.shape().len() < 2 {
            return Err(Error::Tensor("features need a sample dimension plus a feature shape".into()));
        }
        if features.rows() != labels.len() {
            return Err(Error::Consistency(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        let mut histogram = vec![0; num_classes];
        for &label in &labels {
            if label >= num_classes {
                return Err(Error::Label { label, num_classes });
            }
            histogram[label] += 1;
        }
        Ok(Self {
            features,
            labels,
            num_classes,
            histogram,
        })
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn label_histogram(&self) -> &[usize] {
        &self.histogram
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-sample feature shape.
    pub fn feature_shape(&self) -> &[usize] {
        &self.features.shape()[1..]
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let features = self.features.select_rows(indices)?;
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        Self::new(features, labels, self.num_classes)
    }

    /// Sample indices for each class, in ascending sample order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        by_class
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn histogram_counts_labels() {
        let f = Tensor::new(vec![4, 1], vec![0.; 4]).unwrap();
        let d = LabeledDataset::new(f, vec![0, 2, 2, 1], 3).unwrap();
        assert_eq!(d.label_histogram(), &[1, 1, 2]);
        assert_eq!(d.label_histogram().iter().sum::<usize>(), d.len());
    }

    #[test]
    fn rejects_out_of_range_labels() {
        let f = Tensor::new(vec![2, 1], vec![0.; 2]).unwrap();
        assert!(matches!(
            LabeledDataset::new(f, vec![0, 3], 3),
            Err(Error::Label { label: 3, .. })
        ));
    }

    #[test]
    fn serde_round_trip_revalidates() {
        let f = Tensor::new(vec![2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let d = LabeledDataset::new(f, vec![1, 0], 2).unwrap();
        let json = serde_json::to_string(&d).unwrap();
        assert_eq!(serde_json::from_str::<LabeledDataset>(&json).unwrap(), d);
        let bad = json.replace("\"num_classes\":2", "\"num_classes\":1");
        assert!(serde_json::from_str::<LabeledDataset>(&bad).is_err());
    }
}
