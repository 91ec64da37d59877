use crate::error::{Error, Result};
use crate::nn::ParamVector;

/// Uniform FedAvg: element-wise arithmetic mean, summed in the given order.
pub fn fedavg_aggregate(updates: &[ParamVector]) -> Result<ParamVector> {
    let first = updates
        .first()
        .ok_or_else(|| Error::Layout("no updates to aggregate".into()))?;
    let mut sum = vec![0.0; first.len()];
    for u in updates {
        first.ensure_same_layout(u)?;
        for (s, v) in sum.iter_mut().zip(u.values()) {
            *s += v;
        }
    }
    let n = updates.len() as f64;
    sum.iter_mut().for_each(|s| *s /= n);
    first.with_values(sum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{arch, random_params, Model};
    use rand::SeedableRng;

    fn params(seed: u64) -> ParamVector {
        let m = Model::new(vec![3], arch::tabular_net(2), 0).unwrap();
        random_params(m.layout(), 1.0, &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn mean_of_equal_vectors_is_exact() {
        let w = params(1);
        assert_eq!(fedavg_aggregate(&[w.clone(), w.clone()]).unwrap(), w);
    }

    #[test]
    fn opposite_vectors_cancel() {
        let w = params(2);
        let neg = w.with_values(w.values().iter().map(|v| -v).collect()).unwrap();
        let avg = fedavg_aggregate(&[w, neg]).unwrap();
        assert!(avg.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matches_scalar_loop_mean() {
        let vs = [params(3), params(4), params(5)];
        let avg = fedavg_aggregate(&vs).unwrap();
        for i in 0..avg.len() {
            let mut acc = 0.0;
            for v in &vs {
                acc += v.values()[i];
            }
            assert!((avg.values()[i] - acc / 3.0).abs() <= 1e-15);
        }
    }

    #[test]
    fn layout_mismatch_and_empty_input_fail() {
        let other = Model::new(vec![4], arch::tabular_net(2), 0).unwrap();
        assert!(fedavg_aggregate(&[params(1), other.params().clone()]).is_err());
        assert!(fedavg_aggregate(&[]).is_err());
    }
}
