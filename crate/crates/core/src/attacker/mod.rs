//! The honest-but-curious client: acquires weights, representations and
//! pseudo-gradients each round, optionally removes its own influence from the
//! global model, and measures round-to-round change with three metrics.

mod info;
mod metrics;
mod observer;

pub use info::{approximate_gradients, capture_representations, extract_target, AttackerInfoVector, InfoBlock, InfoKind};
pub use metrics::{
    cmd, cmd_blocks, cosine_similarity, cosine_slices, evaluate, procrustes_distance, procrustes_distance_raw,
    procrustes_slices, Metric, MetricOptions, SampleBlock, Scope, DEFAULT_CMD_ORDER,
};
pub use observer::{collect_series, Attacker, AttackerConfig, Series, SeriesKey, SkippedMetric, SolPoint};
