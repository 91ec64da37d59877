mod common;

use std::collections::BTreeMap;

use common::{random_vec, rng};
use shiftleak::attacker::SolPoint;
use shiftleak::data::{apply_label_shift, split_iid, synth_blobs, BlobSpec, LabeledDataset, ShiftSpec};
use shiftleak::fl::{
    fedavg_aggregate, run_centralized, run_federation, ExperimentConfig, FederationData, FederationParams, RoundContext,
    RoundObserver, RoundRecord, Seeds,
};
use shiftleak::nn::{arch, Model, ParamVector};
use shiftleak::{Error, Result};

fn pool(seed: u64) -> LabeledDataset {
    synth_blobs(&BlobSpec {
        num_classes: 4,
        samples_per_class: 150,
        dim: 5,
        separation: 3.0,
        seed,
    })
    .unwrap()
}

fn model() -> Model {
    Model::new(vec![5], arch::tabular_net(4), 17).unwrap()
}

fn data(n: usize, d: usize) -> FederationData {
    let mut sizes = vec![100];
    sizes.extend(std::iter::repeat_n(d, n));
    let mut parts = split_iid(&pool(1), &sizes, 2).unwrap();
    let validation = parts.remove(0);
    FederationData {
        swaps: vec![BTreeMap::new(); n],
        initial: parts,
        validation,
    }
}

fn params(rounds: usize) -> FederationParams {
    FederationParams {
        rounds,
        local_epochs: 1,
        batch_size: 16,
        lr: 1e-3,
        order_seed: 4,
        observer_client: 0,
        parallel: false,
    }
}

fn bits(p: &ParamVector) -> Vec<u64> {
    p.values().iter().map(|v| v.to_bits()).collect()
}

fn same_records(a: &[RoundRecord], b: &[RoundRecord]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            bits(&x.global) == bits(&y.global)
                && x.val_loss.to_bits() == y.val_loss.to_bits()
                && x.clients == y.clients
        })
}

#[test]
fn fedavg_matches_a_scalar_loop() {
    let m = model();
    let mut r = rng(30);
    for n in [1usize, 2, 3, 7, 10] {
        let updates: Vec<ParamVector> = (0..n)
            .map(|_| m.params().with_values(random_vec(m.num_params(), &mut r)).unwrap())
            .collect();
        let avg = fedavg_aggregate(&updates).unwrap();
        for i in 0..m.num_params() {
            let mut acc = 0.0;
            for u in &updates {
                acc += u.values()[i];
            }
            let want = acc / n as f64;
            assert!((avg.values()[i] - want).abs() <= 1e-15 * want.abs().max(1.0));
        }
    }
    let other = Model::new(vec![6], arch::tabular_net(4), 0).unwrap();
    assert!(matches!(
        fedavg_aggregate(&[m.params().clone(), other.params().clone()]),
        Err(Error::Layout(_))
    ));
}

#[test]
fn one_client_federation_is_centralized_training() {
    let fed_data = data(1, 120);
    let schedule: BTreeMap<usize, LabeledDataset> = [(1, fed_data.initial[0].clone())].into();
    let validation = fed_data.validation.clone();
    let p = params(4);
    let fed = run_federation(&model(), fed_data, &p, &mut []).unwrap();
    let central = run_centralized(&model(), &schedule, &validation, 4, p.batch_size, p.lr, p.order_seed, &mut []).unwrap();
    assert!(same_records(&fed, &central));
}

struct Recorder {
    pairs: Vec<(ParamVector, Option<ParamVector>)>,
}

impl RoundObserver for Recorder {
    fn observe(&mut self, ctx: &RoundContext<'_>) -> Result<Vec<SolPoint>> {
        self.pairs.push((ctx.global.params().clone(), ctx.own_previous_update.cloned()));
        Ok(Vec::new())
    }
}

#[test]
fn identical_clients_send_the_global_model() {
    let mut d = data(1, 64);
    let only = d.initial[0].clone();
    d.initial = vec![only.clone(), only.clone(), only];
    d.swaps = vec![BTreeMap::new(); 3];
    // Full-batch steps: client order streams differ, but every client takes
    // the same step up to summation order.
    let p = FederationParams {
        batch_size: 64,
        ..params(4)
    };
    let mut rec = Recorder { pairs: Vec::new() };
    run_federation(&model(), d, &p, &mut [&mut rec]).unwrap();
    assert!(rec.pairs[0].1.is_none());
    for (global, own) in &rec.pairs[1..] {
        let own = own.as_ref().unwrap();
        for (g, o) in global.values().iter().zip(own.values()) {
            assert!((g - o).abs() <= 1e-12, "{g} vs {o}");
        }
    }
}

#[test]
fn parallel_training_changes_nothing() {
    let serial = run_federation(&model(), data(3, 80), &params(3), &mut []).unwrap();
    let p = FederationParams {
        parallel: true,
        ..params(3)
    };
    let parallel = run_federation(&model(), data(3, 80), &p, &mut []).unwrap();
    assert!(same_records(&serial, &parallel));
    let again = run_federation(&model(), data(3, 80), &params(3), &mut []).unwrap();
    assert!(same_records(&serial, &again));
}

#[test]
fn swaps_take_effect_at_their_round() {
    let base = data(2, 80);
    let shifted = apply_label_shift(&pool(9), &ShiftSpec::even_odd(4, 0.8), 80, 3).unwrap();
    let mut with_swap = base.clone();
    with_swap.swaps[1].insert(4, shifted);
    let plain = run_federation(&model(), base, &params(6), &mut []).unwrap();
    let swapped = run_federation(&model(), with_swap, &params(6), &mut []).unwrap();
    for rec in &swapped {
        assert_eq!(rec.clients[1].swapped, rec.round == 4);
        assert!(!rec.clients[0].swapped);
    }
    // The broadcast of round 4 predates any training on the new data.
    assert!(same_records(&plain[..3], &swapped[..3]));
    assert_eq!(bits(&plain[3].global), bits(&swapped[3].global));
    assert_eq!(plain[3].val_loss.to_bits(), swapped[3].val_loss.to_bits());
    assert_ne!(bits(&plain[4].global), bits(&swapped[4].global));
}

#[test]
fn swap_must_keep_the_dataset_size() {
    let mut d = data(2, 80);
    d.swaps[0].insert(2, d.initial[0].subset(&(0..40).collect::<Vec<_>>()).unwrap());
    let err = run_federation(&model(), d, &params(3), &mut []).unwrap_err();
    assert_eq!(err.round, 0);
    assert!(matches!(err.source, Error::Consistency(_)));
}

struct FailAt(usize);

impl RoundObserver for FailAt {
    fn observe(&mut self, ctx: &RoundContext<'_>) -> Result<Vec<SolPoint>> {
        if ctx.round == self.0 {
            return Err(Error::Timeline("stop".into()));
        }
        Ok(Vec::new())
    }
}

#[test]
fn observer_failure_keeps_completed_rounds() {
    let err = run_federation(&model(), data(2, 80), &params(5), &mut [&mut FailAt(3)]).unwrap_err();
    assert_eq!(err.round, 3);
    assert_eq!(err.records.len(), 2);
    assert_eq!(err.records.iter().map(|r| r.round).collect::<Vec<_>>(), vec![1, 2]);
    assert!(matches!(err.source, Error::Timeline(_)));
}

fn config() -> ExperimentConfig {
    ExperimentConfig {
        r: 20,
        s: 11,
        d: 100,
        n: 5,
        m: 2,
        l: 1,
        shift: ShiftSpec::even_odd(10, 0.7),
        seeds: Seeds::default(),
        attacker: 0,
        batch_size: 64,
        lr: 1e-4,
        benign_swaps: false,
        no_shift: false,
    }
}

#[test]
fn config_invariants() {
    assert!(config().violations(false).is_empty());
    assert_eq!(config().shifting_clients(), vec![1, 2]);
    let c = ExperimentConfig {
        attacker: 1,
        ..config()
    };
    assert_eq!(c.shifting_clients(), vec![0, 2]);

    let boundary = ExperimentConfig { s: 2, ..config() };
    assert!(boundary.violations(false).is_empty());
    let cases = [
        (ExperimentConfig { s: 1, ..config() }, "s = 1"),
        (ExperimentConfig { s: 21, ..config() }, "s = 21"),
        (ExperimentConfig { m: 5, ..config() }, "m = 5"),
        (ExperimentConfig { m: 0, ..config() }, "m = 0"),
        (ExperimentConfig { n: 1, m: 0, ..config() }, "n = 1"),
        (ExperimentConfig { attacker: 5, ..config() }, "attacker = 5"),
        (ExperimentConfig { d: 0, ..config() }, "d = 0"),
        (ExperimentConfig { l: 0, ..config() }, "l = 0"),
        (ExperimentConfig { lr: f64::NAN, ..config() }, "lr = NaN"),
    ];
    for (cfg, needle) in cases {
        let v = cfg.violations(false);
        assert!(v.iter().any(|m| m.contains(needle)), "{needle}: {v:?}");
    }
    let mut bad_ratio = config();
    bad_ratio.shift.ratio = 1.0;
    assert!(bad_ratio.violations(false).iter().any(|m| m.contains("shift.ratio")));

    let central = ExperimentConfig { n: 1, m: 0, ..config() };
    assert!(central.violations(true).is_empty());
    assert!(!config().violations(true).is_empty());
}

#[test]
fn seeds_offset_per_repeat() {
    let s = Seeds::default().offset(3);
    assert_eq!((s.model, s.data, s.order), (4, 5, 6));
    let json = serde_json::to_string(&config()).unwrap();
    let back: ExperimentConfig = serde_json::from_str(&json).unwrap();
    assert_eq!(back, config());
}
