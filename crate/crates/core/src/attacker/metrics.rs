//! Shift metrics between two attacker information vectors.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::info::{AttackerInfoVector, InfoKind};
use crate::error::{Error, Result};

pub const DEFAULT_CMD_ORDER: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Cosine,
    Procrustes,
    Cmd,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Cosine, Metric::Procrustes, Metric::Cmd];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Cosine => "cosine",
            Metric::Procrustes => "procrustes",
            Metric::Cmd => "cmd",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::Consistency(format!("unknown metric {s:?}")))
    }
}

/// Whole model, or a single parameterized layer (position in the block list).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Scope {
    Full,
    Layer(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricOptions {
    pub cmd_order: usize,
    /// Scale both inputs to unit norm before the Procrustes distance.
    pub procrustes_normalized: bool,
}

impl Default for MetricOptions {
    fn default() -> Self {
        Self {
            cmd_order: DEFAULT_CMD_ORDER,
            procrustes_normalized: true,
        }
    }
}

/// A set of samples stored row-major, `rows x cols`.
#[derive(Debug, Clone, Copy)]
pub struct SampleBlock<'a> {
    pub values: &'a [f64],
    pub rows: usize,
    pub cols: usize,
}

fn sum_sq(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// `a . b / (|a| |b|)`. Zero vectors are an error rather than a silent 0.
pub fn cosine_slices(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Layout(format!("lengths {} and {}", a.len(), b.len())));
    }
    let (na, nb) = (sum_sq(a), sum_sq(b));
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedSimilarity);
    }
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb).sqrt()).clamp(-1.0, 1.0))
}

/// Frobenius norm of `a - b`, i.e. `trace(XᵀX)^½` with `X = a - b`. With
/// `normalized` both inputs are first scaled to unit norm, which bounds the
/// result to `[0, 2]`.
pub fn procrustes_slices(a: &[f64], b: &[f64], normalized: bool) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Layout(format!("lengths {} and {}", a.len(), b.len())));
    }
    let (sa, sb) = if normalized {
        let (na, nb) = (sum_sq(a).sqrt(), sum_sq(b).sqrt());
        if na == 0.0 || nb == 0.0 {
            return Err(Error::Normalization);
        }
        (1.0 / na, 1.0 / nb)
    } else {
        (1.0, 1.0)
    };
    Ok(a.iter().zip(b).map(|(x, y)| (x * sa - y * sb).powi(2)).sum::<f64>().sqrt())
}

/// Per-column mean (order 1) and central moments of orders 2..=k.
fn column_moments(block: &SampleBlock<'_>, k: usize) -> Vec<Vec<f64>> {
    let r = block.rows as f64;
    let mut mean = vec![0.0; block.cols];
    for row in block.values.chunks_exact(block.cols) {
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= r);
    let mut moments = vec![vec![0.0; block.cols]; k.saturating_sub(1)];
    for row in block.values.chunks_exact(block.cols) {
        for (j, (&v, &m)) in row.iter().zip(&mean).enumerate() {
            let d = v - m;
            let mut p = d;
            for slot in moments.iter_mut() {
                p *= d;
                slot[j] += p;
            }
        }
    }
    for slot in moments.iter_mut() {
        slot.iter_mut().for_each(|c| *c /= r);
    }
    let mut out = Vec::with_capacity(k);
    out.push(mean);
    out.extend(moments);
    out
}

/// Central moment discrepancy between two sample sets, each given as
/// column blocks over the same samples:
/// `|E(a) - E(b)| + sum_{j=2..k} |C_j(a) - C_j(b)|`, without interval
/// normalization. The coordinate vector of a sample is the concatenation of
/// its rows across blocks.
pub fn cmd_blocks(a: &[SampleBlock<'_>], b: &[SampleBlock<'_>], k: usize) -> Result<f64> {
    if k == 0 {
        return Err(Error::Config("CMD order must be at least 1".into()));
    }
    if a.len() != b.len() || a.iter().zip(b).any(|(x, y)| x.cols != y.cols) {
        return Err(Error::Layout("sample sets have different coordinates".into()));
    }
    let mut sq = vec![0.0; k];
    for (x, y) in a.iter().zip(b) {
        for s in [x, y] {
            if s.rows < 2 {
                return Err(Error::MomentUndefined(s.rows));
            }
            if s.cols == 0 || s.values.len() != s.rows * s.cols {
                return Err(Error::Layout("sample block does not match its shape".into()));
            }
        }
        let (mx, my) = (column_moments(x, k), column_moments(y, k));
        for (acc, (cx, cy)) in sq.iter_mut().zip(mx.iter().zip(&my)) {
            *acc += cx.iter().zip(cy).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
        }
    }
    Ok(sq.iter().map(|s| s.sqrt()).sum())
}

/// Values of `v` restricted to `scope`.
fn scoped_values(v: &AttackerInfoVector, scope: Scope) -> Result<&[f64]> {
    match scope {
        Scope::Full => Ok(v.values()),
        Scope::Layer(i) if i < v.blocks().len() => Ok(v.block_values(i)),
        Scope::Layer(i) => Err(Error::Layout(format!("no layer block {i}"))),
    }
}

/// The sample-set view CMD uses. Representations: probe samples are rows and
/// the neurons of all selected layers are coordinates. Weights and gradients:
/// every scalar is a one-dimensional sample.
fn sample_view(v: &AttackerInfoVector, scope: Scope) -> Result<Vec<SampleBlock<'_>>> {
    match (v.kind, scope) {
        (InfoKind::Representations, Scope::Full) => Ok((0..v.blocks().len())
            .map(|i| SampleBlock {
                values: v.block_values(i),
                rows: v.blocks()[i].rows,
                cols: v.blocks()[i].cols,
            })
            .collect()),
        (InfoKind::Representations, Scope::Layer(i)) => {
            let values = scoped_values(v, scope)?;
            Ok(vec![SampleBlock {
                values,
                rows: v.blocks()[i].rows,
                cols: v.blocks()[i].cols,
            }])
        }
        (_, scope) => {
            let values = scoped_values(v, scope)?;
            Ok(vec![SampleBlock {
                values,
                rows: values.len(),
                cols: 1,
            }])
        }
    }
}

pub fn cosine_similarity(a: &AttackerInfoVector, b: &AttackerInfoVector) -> Result<f64> {
    evaluate(Metric::Cosine, a, b, Scope::Full, &MetricOptions::default())
}

/// Procrustes distance on unit-normalized inputs.
pub fn procrustes_distance(a: &AttackerInfoVector, b: &AttackerInfoVector) -> Result<f64> {
    evaluate(Metric::Procrustes, a, b, Scope::Full, &MetricOptions::default())
}

/// Procrustes distance as the plain Frobenius norm of the difference.
pub fn procrustes_distance_raw(a: &AttackerInfoVector, b: &AttackerInfoVector) -> Result<f64> {
    let opts = MetricOptions {
        procrustes_normalized: false,
        ..MetricOptions::default()
    };
    evaluate(Metric::Procrustes, a, b, Scope::Full, &opts)
}

pub fn cmd(a: &AttackerInfoVector, b: &AttackerInfoVector, k: usize) -> Result<f64> {
    let opts = MetricOptions {
        cmd_order: k,
        ..MetricOptions::default()
    };
    evaluate(Metric::Cmd, a, b, Scope::Full, &opts)
}

/// Evaluates `metric` between two info vectors of the same kind and layout.
pub fn evaluate(
    metric: Metric,
    a: &AttackerInfoVector,
    b: &AttackerInfoVector,
    scope: Scope,
    opts: &MetricOptions,
) -> Result<f64> {
    a.ensure_comparable(b)?;
    match metric {
        Metric::Cosine => cosine_slices(scoped_values(a, scope)?, scoped_values(b, scope)?),
        Metric::Procrustes => procrustes_slices(
            scoped_values(a, scope)?,
            scoped_values(b, scope)?,
            opts.procrustes_normalized,
        ),
        Metric::Cmd => cmd_blocks(&sample_view(a, scope)?, &sample_view(b, scope)?, opts.cmd_order),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_fixed_points() {
        let a = [1.0, -2.0, 3.5];
        assert_eq!(cosine_slices(&a, &a).unwrap(), 1.0);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert_eq!(cosine_slices(&a, &neg).unwrap(), -1.0);
        assert_eq!(cosine_slices(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!(matches!(cosine_slices(&[0.0, 0.0], &a[..2]), Err(Error::UndefinedSimilarity)));
    }

    #[test]
    fn procrustes_fixed_points() {
        let a = [0.3, 0.4, -1.2];
        assert_eq!(procrustes_slices(&a, &a, true).unwrap(), 0.0);
        let d = procrustes_slices(&[3.0, 0.0], &[0.0, 0.5], true).unwrap();
        assert!((d - 2f64.sqrt()).abs() < 1e-15);
        assert!((procrustes_slices(&[3.0, 0.0], &[0.0, 4.0], false).unwrap() - 5.0).abs() < 1e-15);
        assert!(matches!(procrustes_slices(&[0.0], &[1.0], true), Err(Error::Normalization)));
    }

    #[test]
    fn cmd_translation_moves_only_the_mean() {
        let a = [0.1, 2.0, -0.5, 1.0, 0.7, 0.2, -1.1, 0.9];
        let c = 0.75;
        let b: Vec<f64> = a.iter().map(|v| v + c).collect();
        fn block(v: &[f64]) -> Vec<SampleBlock<'_>> {
            vec![SampleBlock { values: v, rows: 4, cols: 2 }]
        }
        let d = cmd_blocks(&block(&a), &block(&b), 5).unwrap();
        assert!((d - c * 2f64.sqrt()).abs() < 1e-12);
        assert_eq!(cmd_blocks(&block(&a), &block(&a), 5).unwrap(), 0.0);
    }

    #[test]
    fn cmd_needs_two_samples() {
        let one = [SampleBlock {
            values: &[1.0, 2.0],
            rows: 1,
            cols: 2,
        }];
        assert!(matches!(cmd_blocks(&one, &one, 5), Err(Error::MomentUndefined(1))));
    }
}
