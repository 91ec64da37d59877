//! Trend divergence: fit a least-squares line to the `e` observations before
//! a round, extrapolate it to that round and measure how far the observed
//! value lands from the trend, in absolute terms and relative to the fit's
//! residual noise.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::attacker::{Series, SeriesKey};
use crate::error::{Error, Result};

pub const DEFAULT_WINDOW: usize = 5;

/// Residual RMSE below this is treated as this (a perfectly linear window).
pub const RMSE_FLOOR: f64 = 1e-12;

/// Ordinary least-squares line over a window of rounds, stored in centred
/// form so that adding a constant to the series only moves `mean_value`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit {
    pub mean_round: f64,
    pub mean_value: f64,
    pub slope: f64,
    /// Root mean squared residual, dividing by the window length.
    pub rmse: f64,
}

impl LineFit {
    pub fn intercept(&self) -> f64 {
        self.mean_value - self.slope * self.mean_round
    }

    /// Deviation of `value` from the line at `round`.
    pub fn residual(&self, round: usize, value: f64) -> f64 {
        (value - self.mean_value) - self.slope * (round as f64 - self.mean_round)
    }

    pub fn at(&self, round: usize) -> f64 {
        self.mean_value + self.slope * (round as f64 - self.mean_round)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub series_id: String,
    pub round: usize,
    pub expected: f64,
    pub measured: f64,
    pub divergence: f64,
    /// `divergence / |expected|`, comparable across metrics of different scale.
    pub relative_divergence: f64,
    pub z_score: f64,
    pub rmse: f64,
}

fn window(series: &Series, round: usize, e: usize) -> Result<Vec<(f64, f64)>> {
    if e < 2 {
        return Err(Error::Window(format!("window length {e}: a line needs at least two points")));
    }
    if round <= e {
        return Err(Error::Window(format!("round {round}: fewer than {e} earlier rounds")));
    }
    (round - e..round)
        .map(|t| {
            series
                .get(&t)
                .map(|&v| (t as f64, v))
                .ok_or_else(|| Error::Window(format!("round {round}: no value at round {t} (window {e})")))
        })
        .collect()
}

/// Fits a line to rounds `round - e ..= round - 1`.
pub fn fit_window(series: &Series, round: usize, e: usize) -> Result<LineFit> {
    let pts = window(series, round, e)?;
    let n = pts.len() as f64;
    let mean_round = pts.iter().map(|p| p.0).sum::<f64>() / n;
    // Offsets from the first value keep a constant window exactly constant.
    let base = pts[0].1;
    let mean_offset = pts.iter().map(|p| p.1 - base).sum::<f64>() / n;
    let mean_value = base + mean_offset;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mean_round).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mean_round) * (p.1 - base - mean_offset)).sum();
    let mut fit = LineFit {
        mean_round,
        mean_value,
        slope: sxy / sxx,
        rmse: 0.0,
    };
    let sse: f64 = pts.iter().map(|p| fit.residual(p.0 as usize, p.1).powi(2)).sum();
    fit.rmse = (sse / n).sqrt();
    Ok(fit)
}

/// Value of the window's least-squares line at `round`.
pub fn extrapolate(series: &Series, round: usize, e: usize) -> Result<f64> {
    Ok(fit_window(series, round, e)?.at(round))
}

pub fn score_divergence(series_id: &str, series: &Series, round: usize, e: usize) -> Result<DivergenceReport> {
    let measured = *series
        .get(&round)
        .ok_or_else(|| Error::Window(format!("{series_id}: no value at round {round}")))?;
    let fit = fit_window(series, round, e)?;
    let divergence = fit.residual(round, measured).abs();
    let expected = fit.at(round);
    Ok(DivergenceReport {
        series_id: series_id.to_string(),
        round,
        expected,
        measured,
        divergence,
        relative_divergence: divergence / expected.abs().max(RMSE_FLOOR),
        z_score: divergence / fit.rmse.max(RMSE_FLOOR),
        rmse: fit.rmse,
    })
}

/// Scores every round of `series` that has a full window behind it.
pub fn score_series(series_id: &str, series: &Series, e: usize) -> Vec<DivergenceReport> {
    series
        .keys()
        .filter_map(|&t| score_divergence(series_id, series, t, e).ok())
        .collect()
}

/// One point of the sensitivity scatter: the validation loss's divergence
/// against one leakage series' divergence at the same round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub series_id: String,
    pub round: usize,
    pub valloss_divergence: f64,
    pub sol_divergence: f64,
    pub valloss_z: f64,
    pub sol_z: f64,
}

impl ScatterPoint {
    /// True when the series diverges more than the validation loss (z-scores).
    pub fn above_diagonal(&self) -> bool {
        self.sol_z > self.valloss_z
    }
}

/// Round at which a shift injected at the start of round `shift_round` first
/// shows up in the broadcast model and therefore in every series.
pub fn detection_round(shift_round: usize) -> usize {
    shift_round + 1
}

/// Scores every series and the validation loss at the detection round of
/// `shift_round`. Every series must have a full window there.
pub fn sensitivity_table(
    sol: &BTreeMap<SeriesKey, Series>,
    val_loss: &Series,
    shift_round: usize,
    e: usize,
) -> Result<Vec<ScatterPoint>> {
    let round = detection_round(shift_round);
    let loss = score_divergence("val_loss", val_loss, round, e)?;
    sol.iter()
        .map(|(key, series)| {
            let id = key.to_string();
            let r = score_divergence(&id, series, round, e)?;
            Ok(ScatterPoint {
                series_id: id,
                round,
                valloss_divergence: loss.divergence,
                sol_divergence: r.divergence,
                valloss_z: loss.z_score,
                sol_z: r.z_score,
            })
        })
        .collect()
}
