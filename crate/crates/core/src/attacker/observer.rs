use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use super::info::{approximate_gradients, capture_representations, extract_target, AttackerInfoVector, InfoKind};
use super::metrics::{evaluate, Metric, MetricOptions, Scope};
use crate::error::{Error, Result};
use crate::fl::{RoundContext, RoundObserver};
use crate::tensor::Tensor;

/// Identifies one source of leakage: an info kind measured with one metric,
/// over the whole model or a single layer (by index in the layer list).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SeriesKey {
    pub kind: InfoKind,
    pub metric: Metric,
    pub layer: Option<usize>,
}

impl SeriesKey {
    pub fn full(kind: InfoKind, metric: Metric) -> Self {
        Self {
            kind,
            metric,
            layer: None,
        }
    }

    /// `layer` column value of the telemetry files.
    pub fn layer_label(&self) -> String {
        self.layer.map_or_else(|| "full".to_string(), |l| l.to_string())
    }
}

impl fmt::Display for SeriesKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.layer {
            None => write!(f, "{}/{}/full", self.kind, self.metric),
            Some(l) => write!(f, "{}/{}/layer{l}", self.kind, self.metric),
        }
    }
}

/// One metric value observed in one round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolPoint {
    pub round: usize,
    pub key: SeriesKey,
    pub value: f64,
}

/// Round-indexed values of one series.
pub type Series = BTreeMap<usize, f64>;

/// Groups points into one series per key.
pub fn collect_series<'a>(points: impl IntoIterator<Item = &'a SolPoint>) -> BTreeMap<SeriesKey, Series> {
    let mut out: BTreeMap<SeriesKey, Series> = BTreeMap::new();
    for p in points {
        out.entry(p.key).or_default().insert(p.round, p.value);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttackerConfig {
    /// Subtract the attacker's own update from the global model (needs n >= 2).
    pub influence_removal: bool,
    /// Also emit one series per layer.
    pub per_layer: bool,
    pub metrics: MetricOptions,
}

impl Default for AttackerConfig {
    fn default() -> Self {
        Self {
            influence_removal: true,
            per_layer: true,
            metrics: MetricOptions::default(),
        }
    }
}

/// A metric that could not be evaluated (zero-norm input); no point is emitted.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedMetric {
    pub round: usize,
    pub key: SeriesKey,
    pub reason: String,
}

#[derive(Debug, Clone)]
struct Snapshot {
    round: usize,
    weights: AttackerInfoVector,
    representations: AttackerInfoVector,
    gradients: Option<AttackerInfoVector>,
}

/// Passive observer living in one client. It only reads what the protocol
/// hands it: the broadcast model, its own last update, the client count.
#[derive(Debug, Clone)]
pub struct Attacker {
    config: AttackerConfig,
    probe: Tensor,
    last: Option<Snapshot>,
    skipped: Vec<SkippedMetric>,
}

impl Attacker {
    /// `probe` is the fixed query set for representations, frozen for the run.
    pub fn new(config: AttackerConfig, probe: Tensor) -> Self {
        Self {
            config,
            probe,
            last: None,
            skipped: Vec::new(),
        }
    }

    pub fn skipped(&self) -> &[SkippedMetric] {
        &self.skipped
    }

    /// Most recent weights, representations and pseudo-gradient, if any.
    pub fn latest(&self) -> Option<(&AttackerInfoVector, &AttackerInfoVector, Option<&AttackerInfoVector>)> {
        self.last
            .as_ref()
            .map(|s| (&s.weights, &s.representations, s.gradients.as_ref()))
    }

    /// Round 1 stores the baseline. From round 2 the weights and
    /// representations are compared with the previous round and the first
    /// pseudo-gradient is formed; from round 3 consecutive pseudo-gradients
    /// are compared too.
    pub fn observe_round(&mut self, ctx: &RoundContext<'_>) -> Result<Vec<SolPoint>> {
        match (&self.last, ctx.round) {
            (None, 1) => {}
            (None, r) => return Err(Error::Timeline(format!("round {r} observed without round {}", r - 1))),
            (Some(s), r) if r != s.round + 1 => {
                return Err(Error::Timeline(format!("round {r} follows round {}", s.round)));
            }
            _ => {}
        }

        let params = if self.config.influence_removal && ctx.clients >= 2 && ctx.round >= 2 {
            let own = ctx
                .own_previous_update
                .ok_or_else(|| Error::Timeline(format!("round {}: own previous update missing", ctx.round)))?;
            extract_target(ctx.global.params(), own, ctx.clients)?
        } else {
            ctx.global.params().clone()
        };
        let weights = AttackerInfoVector::from_params(InfoKind::Weights, ctx.round, &params);
        let target_model = ctx.global.with_params(params)?;
        let representations = capture_representations(&target_model, &self.probe, ctx.round)?;

        let mut points = Vec::new();
        let mut gradients = None;
        if let Some(prev) = self.last.take() {
            self.compare(&prev.weights, &weights, &mut points);
            self.compare(&prev.representations, &representations, &mut points);
            let grad = approximate_gradients(&weights, &prev.weights)?;
            if let Some(prev_grad) = &prev.gradients {
                self.compare(prev_grad, &grad, &mut points);
            }
            gradients = Some(grad);
        }
        self.last = Some(Snapshot {
            round: ctx.round,
            weights,
            representations,
            gradients,
        });
        Ok(points)
    }

    fn compare(&mut self, prev: &AttackerInfoVector, cur: &AttackerInfoVector, out: &mut Vec<SolPoint>) {
        let mut scopes = vec![(Scope::Full, None)];
        if self.config.per_layer {
            scopes.extend(cur.blocks().iter().enumerate().map(|(i, b)| (Scope::Layer(i), Some(b.layer_index))));
        }
        for metric in Metric::ALL {
            for &(scope, layer) in &scopes {
                let key = SeriesKey {
                    kind: cur.kind,
                    metric,
                    layer,
                };
                match evaluate(metric, prev, cur, scope, &self.config.metrics) {
                    Ok(value) if value.is_finite() => out.push(SolPoint {
                        round: cur.round,
                        key,
                        value,
                    }),
                    Ok(value) => self.skipped.push(SkippedMetric {
                        round: cur.round,
                        key,
                        reason: format!("non-finite value {value}"),
                    }),
                    Err(e) => self.skipped.push(SkippedMetric {
                        round: cur.round,
                        key,
                        reason: e.to_string(),
                    }),
                }
            }
        }
    }
}

impl RoundObserver for Attacker {
    fn observe(&mut self, ctx: &RoundContext<'_>) -> Result<Vec<SolPoint>> {
        self.observe_round(ctx)
    }
}
