mod common;

use common::{ols_oracle, rng};
use proptest::prelude::*;
use rand_distr::{Distribution, Normal};
use shiftleak::attacker::{Series, SeriesKey, InfoKind, Metric};
use shiftleak::detect::{
    detection_round, extrapolate, fit_window, score_divergence, score_series, sensitivity_table, DEFAULT_WINDOW,
};
use shiftleak::Error;
use std::collections::BTreeMap;

fn series_from(values: impl IntoIterator<Item = f64>) -> Series {
    values.into_iter().enumerate().map(|(i, v)| (i + 1, v)).collect()
}

fn noise(seed: u64, len: usize, sigma: f64) -> Vec<f64> {
    let mut r = rng(seed);
    let n = Normal::new(0.0, sigma).unwrap();
    (0..len).map(|_| n.sample(&mut r)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn constant_series_never_diverge(c in -1e3f64..1e3, e in 2usize..12, extra in 1usize..5) {
        let s = series_from(std::iter::repeat_n(c, e + extra));
        for t in e + 1..=e + extra {
            let r = score_divergence("c", &s, t, e).unwrap();
            prop_assert_eq!(r.expected, c);
            prop_assert_eq!(r.divergence, 0.0);
            prop_assert_eq!(r.z_score, 0.0);
        }
    }

    #[test]
    fn affine_series_are_extrapolated_exactly(a in -100.0f64..100.0, b in -10.0f64..10.0, e in 2usize..12) {
        let s = series_from((1..=e + 1).map(|t| a + b * t as f64));
        let expected = a + b * (e + 1) as f64;
        let got = extrapolate(&s, e + 1, e).unwrap();
        prop_assert!((got - expected).abs() <= 1e-10 * expected.abs().max(1.0), "{got} vs {expected}");
        let fit = fit_window(&s, e + 1, e).unwrap();
        prop_assert!((fit.slope - b).abs() <= 1e-10 * b.abs().max(1.0));
    }

    #[test]
    fn adding_a_constant_leaves_divergence_unchanged(seed in 0u64..10_000, c in -50.0f64..50.0) {
        let base = noise(seed, 9, 1.0);
        let s = series_from(base.iter().copied());
        let shifted = series_from(base.iter().map(|v| v + c));
        let r = score_divergence("a", &s, 9, 5).unwrap();
        let q = score_divergence("b", &shifted, 9, 5).unwrap();
        prop_assert!((r.divergence - q.divergence).abs() < 1e-9);
        prop_assert!((r.z_score - q.z_score).abs() < 1e-6 * r.z_score.max(1.0));
    }
}

#[test]
fn noisy_fit_matches_the_normal_equations() {
    for seed in 0..50 {
        let e = 3 + (seed as usize % 8);
        let values: Vec<f64> = noise(seed, e + 1, 0.3)
            .into_iter()
            .enumerate()
            .map(|(i, v)| 2.0 - 0.1 * i as f64 + v)
            .collect();
        let s = series_from(values.iter().copied());
        let x: Vec<f64> = (1..=e).map(|t| t as f64).collect();
        let (intercept, slope) = ols_oracle(&x, &values[..e]);
        let fit = fit_window(&s, e + 1, e).unwrap();
        assert!((fit.slope - slope).abs() < 1e-10);
        assert!((fit.intercept() - intercept).abs() < 1e-10);
        let expected = intercept + slope * (e + 1) as f64;
        let r = score_divergence("s", &s, e + 1, e).unwrap();
        assert!((r.expected - expected).abs() < 1e-10);
        assert!((r.divergence - (values[e] - expected).abs()).abs() < 1e-10);
        let sse: f64 = x.iter().zip(&values).map(|(t, v)| (v - intercept - slope * t).powi(2)).sum();
        assert!((r.rmse - (sse / e as f64).sqrt()).abs() < 1e-10);
    }
}

#[test]
fn a_ten_sigma_step_is_flagged() {
    let e = DEFAULT_WINDOW;
    let trials = 1000;
    let flagged = (0..trials)
        .filter(|&seed| {
            let mut values = noise(seed, e + 1, 1.0);
            values[e] += 10.0;
            score_divergence("step", &series_from(values), e + 1, e).unwrap().z_score >= 5.0
        })
        .count();
    assert!(flagged * 100 >= trials as usize * 99, "{flagged} of {trials}");
}

#[test]
fn a_continuing_line_is_not_flagged() {
    let e = DEFAULT_WINDOW;
    let mut r = rng(7);
    let trials = 1000;
    let quiet = (0..trials)
        .filter(|_| {
            let a = Normal::new(0.0, 5.0).unwrap().sample(&mut r);
            let b = Normal::new(0.0, 1.0).unwrap().sample(&mut r);
            let s = series_from((1..=e + 1).map(|t| a + b * t as f64));
            score_divergence("line", &s, e + 1, e).unwrap().z_score < 2.0
        })
        .count();
    assert!(quiet * 100 >= trials * 99, "{quiet} of {trials}");
}

fn exceed_rate(e: usize, threshold: f64, trials: u64) -> f64 {
    let hits = (0..trials)
        .filter(|&seed| {
            let s = series_from(noise(10_000 + seed, e + 1, 1.0));
            score_divergence("n", &s, e + 1, e).unwrap().z_score > threshold
        })
        .count();
    hits as f64 / trials as f64
}

#[test]
fn stationary_noise_false_alarms_with_a_long_window() {
    let rate = exceed_rate(30, 3.0, 4000);
    assert!(rate < 0.02, "rate {rate}");
}

#[test]
fn stationary_noise_false_alarms_with_the_default_window() {
    // With five points the residual scale is estimated from three degrees of
    // freedom, so the z-score has heavy tails: about one in five white-noise
    // rounds exceeds 3.
    let rate = exceed_rate(DEFAULT_WINDOW, 3.0, 4000);
    assert!((0.15..0.25).contains(&rate), "rate {rate}");
}

#[test]
fn window_requirements() {
    let s = series_from([1.0, 2.0, 3.0, 4.0]);
    assert!(matches!(fit_window(&s, 4, 1), Err(Error::Window(_))));
    assert!(matches!(fit_window(&s, 3, 3), Err(Error::Window(_))));
    let mut gap = s.clone();
    gap.remove(&2);
    assert!(matches!(fit_window(&gap, 4, 3), Err(Error::Window(_))));
    assert!(matches!(score_divergence("s", &s, 5, 3), Err(Error::Window(_))));
    let all = score_series("s", &s, 2);
    assert_eq!(all.iter().map(|r| r.round).collect::<Vec<_>>(), vec![3, 4]);
}

#[test]
fn relative_divergence_uses_the_expected_value() {
    let s = series_from([2.0, 2.0, 2.0, 2.0, 2.0, 3.0]);
    let r = score_divergence("s", &s, 6, 5).unwrap();
    assert_eq!(r.expected, 2.0);
    assert_eq!(r.divergence, 1.0);
    assert_eq!(r.relative_divergence, 0.5);
    assert_eq!(r.z_score, 1e12);
}

#[test]
fn scatter_points_are_evaluated_at_the_detection_round() {
    let s = 8;
    let round = detection_round(s);
    assert_eq!(round, 9);
    let quiet: Series = (1..=12).map(|t| (t, 1.0 + 0.01 * ((t * 7) % 3) as f64)).collect();
    let mut loud = quiet.clone();
    *loud.get_mut(&round).unwrap() += 1.0;
    let key = |layer| SeriesKey {
        kind: InfoKind::Representations,
        metric: Metric::Cmd,
        layer,
    };
    let mut sol = BTreeMap::new();
    sol.insert(key(None), loud.clone());
    sol.insert(key(Some(2)), quiet.clone());
    let table = sensitivity_table(&sol, &quiet, s, 5).unwrap();
    assert_eq!(table.len(), 2);
    assert!(table.iter().all(|p| p.round == round));
    let full = table.iter().find(|p| p.series_id == "representations/cmd/full").unwrap();
    assert!(full.above_diagonal());
    let layer = table.iter().find(|p| p.series_id == "representations/cmd/layer2").unwrap();
    assert!(!layer.above_diagonal());
    assert_eq!(layer.sol_z, layer.valloss_z);

    let mut short = BTreeMap::new();
    short.insert(key(None), (6..=12).map(|t| (t, 1.0)).collect::<Series>());
    assert!(matches!(sensitivity_table(&short, &quiet, s, 5), Err(Error::Window(_))));
}
