use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng;

/// How `ShiftSpec::ratio` is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShiftTarget {
    /// `ratio` is the group-a fraction of the shifted dataset.
    #[default]
    Absolute,
    /// The pool's group-a odds are multiplied by `ratio / (1 - ratio)`; a
    /// 60-40 spec scales the odds by 1.5 whatever the pool's balance is.
    RelativeOdds,
}

/// A label shift between two complementary groups of classes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShiftSpec {
    pub group_a: Vec<usize>,
    pub group_b: Vec<usize>,
    pub ratio: f64,
    #[serde(default)]
    pub target: ShiftTarget,
}

impl ShiftSpec {
    /// Even classes against odd classes.
    pub fn even_odd(num_classes: usize, ratio: f64) -> Self {
        Self {
            group_a: (0..num_classes).filter(|c| c % 2 == 0).collect(),
            group_b: (0..num_classes).filter(|c| c % 2 == 1).collect(),
            ratio,
            target: ShiftTarget::Absolute,
        }
    }

    /// Binary-label grouping: group a is class 1.
    pub fn binary(ratio: f64) -> Self {
        Self {
            group_a: vec![1],
            group_b: vec![0],
            ratio,
            target: ShiftTarget::RelativeOdds,
        }
    }

    pub fn validate(&self, num_classes: usize) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::Config(format!("shift ratio {} must lie strictly between 0 and 1", self.ratio)));
        }
        if self.group_a.is_empty() || self.group_b.is_empty() {
            return Err(Error::Config("both shift groups need at least one class".into()));
        }
        let mut seen = vec![false; num_classes];
        for &c in self.group_a.iter().chain(&self.group_b) {
            if c >= num_classes {
                return Err(Error::Config(format!("shift class {c} out of range for {num_classes} classes")));
            }
            if seen[c] {
                return Err(Error::Config(format!("class {c} appears twice in the shift groups")));
            }
            seen[c] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::Config(format!("class {missing} belongs to neither shift group")));
        }
        Ok(())
    }

    /// Group-a fraction to aim for when drawing from `pool`.
    pub fn target_fraction(&self, pool: &LabeledDataset) -> f64 {
        match self.target {
            ShiftTarget::Absolute => self.ratio,
            ShiftTarget::RelativeOdds => {
                let hist = pool.label_histogram();
                let a: usize = self.group_a.iter().map(|&c| hist[c]).sum();
                let p0 = a as f64 / pool.len() as f64;
                if p0 <= 0.0 || p0 >= 1.0 {
                    return p0;
                }
                let odds = p0 / (1.0 - p0) * self.ratio / (1.0 - self.ratio);
                odds / (1.0 + odds)
            }
        }
    }
}

/// Splits `total` across classes in proportion to `weights` with the
/// largest-remainder rule; ties go to the lower class position.
fn allocate(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: usize = weights.iter().sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let mut counts: Vec<usize> = weights.iter().map(|&w| total * w / sum).collect();
    let mut rest = total - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    // remainder of total*w/sum, compared exactly in integers
    order.sort_by_key(|&i| std::cmp::Reverse((total * weights[i]) % sum));
    for &i in &order {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts
}

/// Draws `out_size` pool indices without replacement so that exactly
/// `round(fraction * out_size)` belong to group a, keeping the pool's class
/// proportions within each group.
pub fn label_shift_indices(pool: &LabeledDataset, spec: &ShiftSpec, out_size: usize, seed: u64) -> Result<Vec<usize>> {
    spec.validate(pool.num_classes())?;
    if out_size == 0 {
        return Err(Error::Config("shifted dataset size must be positive".into()));
    }
    let fraction = spec.target_fraction(pool);
    let count_a = (fraction * out_size as f64).round() as usize;
    let by_class = pool.indices_by_class();
    let mut chosen = Vec::with_capacity(out_size);
    for (name, group, wanted) in [("group a", &spec.group_a, count_a), ("group b", &spec.group_b, out_size - count_a)] {
        let available: Vec<usize> = group.iter().map(|&c| by_class[c].len()).collect();
        let total: usize = available.iter().sum();
        if total < wanted {
            return Err(Error::InsufficientSamples {
                group: name.to_string(),
                needed: wanted,
                available: total,
            });
        }
        for ((&class, &avail), take) in group.iter().zip(&available).zip(allocate(wanted, &available)) {
            debug_assert!(take <= avail);
            let mut idx = by_class[class].clone();
            idx.shuffle(&mut rng::stream(seed, &[0x5A1F, class as u64]));
            chosen.extend_from_slice(&idx[..take]);
        }
    }
    chosen.shuffle(&mut rng::stream(seed, &[0x5A1F, u64::MAX]));
    Ok(chosen)
}

/// Resamples `pool` into a dataset of `out_size` samples with the label
/// distribution described by `spec`. Samples are copied, never modified.
pub fn apply_label_shift(pool: &LabeledDataset, spec: &ShiftSpec, out_size: usize, seed: u64) -> Result<LabeledDataset> {
    let idx = label_shift_indices(pool, spec, out_size, seed)?;
    pool.subset(&idx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn pool(per_class: &[usize]) -> LabeledDataset {
        let labels: Vec<usize> = per_class
            .iter()
            .enumerate()
            .flat_map(|(c, &n)| std::iter::repeat_n(c, n))
            .collect();
        let n = labels.len();
        let features = Tensor::new(vec![n, 1], (0..n).map(|i| i as f64).collect()).unwrap();
        LabeledDataset::new(features, labels, per_class.len()).unwrap()
    }

    #[test]
    fn eighty_twenty_even_odd() {
        let p = pool(&[100; 10]);
        let out = apply_label_shift(&p, &ShiftSpec::even_odd(10, 0.8), 200, 4).unwrap();
        assert_eq!(out.len(), 200);
        let even: usize = out.labels().iter().filter(|&&l| l % 2 == 0).count();
        assert_eq!(even, 160);
        // proportions inside each group follow the balanced pool
        assert_eq!(out.label_histogram(), &[32, 8, 32, 8, 32, 8, 32, 8, 32, 8]);
    }

    #[test]
    fn within_group_proportions_follow_the_pool() {
        let p = pool(&[300, 100, 100, 100]);
        let spec = ShiftSpec {
            group_a: vec![0, 2],
            group_b: vec![1, 3],
            ratio: 0.5,
            target: ShiftTarget::Absolute,
        };
        let out = apply_label_shift(&p, &spec, 200, 1).unwrap();
        assert_eq!(out.label_histogram(), &[75, 50, 25, 50]);
    }

    #[test]
    fn relative_odds_scale_the_pool_balance() {
        // pool is 25% group a: odds 1/3, scaled by 1.5 -> 0.5 -> fraction 1/3.
        let p = pool(&[300, 100]);
        let spec = ShiftSpec::binary(0.6);
        assert!((spec.target_fraction(&p) - 1.0 / 3.0).abs() < 1e-12);
        let out = apply_label_shift(&p, &spec, 90, 2).unwrap();
        assert_eq!(out.label_histogram(), &[60, 30]);
    }

    #[test]
    fn samples_are_copied_from_the_pool() {
        let p = pool(&[50; 4]);
        let out = apply_label_shift(&p, &ShiftSpec::even_odd(4, 0.7), 60, 3).unwrap();
        let mut seen = std::collections::HashSet::new();
        for i in 0..out.len() {
            let v = out.features().row(i)[0];
            let src = v as usize;
            assert_eq!(p.labels()[src], out.labels()[i]);
            assert!(seen.insert(src), "sample drawn twice");
        }
    }

    #[test]
    fn exhausted_group_is_an_error() {
        let p = pool(&[10, 100]);
        let spec = ShiftSpec {
            group_a: vec![0],
            group_b: vec![1],
            ratio: 0.8,
            target: ShiftTarget::Absolute,
        };
        assert!(matches!(
            apply_label_shift(&p, &spec, 50, 0),
            Err(Error::InsufficientSamples { needed: 40, available: 10, .. })
        ));
    }

    #[test]
    fn invalid_specs_are_rejected() {
        let mut s = ShiftSpec::even_odd(4, 1.0);
        assert!(s.validate(4).is_err());
        s.ratio = 0.5;
        assert!(s.validate(4).is_ok());
        s.group_b.push(0);
        assert!(s.validate(4).is_err());
        assert!(ShiftSpec::even_odd(4, 0.5).validate(5).is_err());
    }

    #[test]
    fn largest_remainder_allocation() {
        assert_eq!(allocate(10, &[1, 1, 1]), vec![4, 3, 3]);
        assert_eq!(allocate(7, &[2, 5]), vec![2, 5]);
        assert_eq!(allocate(0, &[3, 3]), vec![0, 0]);
    }
}
