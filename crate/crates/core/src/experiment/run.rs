use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::build::prepare;
use super::config::{read_document, ResolvedPoint, StudyConfig, StudyPreset};
use super::report::{verdict, Verdict};
use crate::attacker::{collect_series, Attacker, InfoKind, Metric, Series, SeriesKey, SkippedMetric};
use crate::detect::{score_series, sensitivity_table, DivergenceReport, ScatterPoint};
use crate::error::{Error, Result};
use crate::fl::{run_centralized, run_federation, ExperimentConfig, FederationData, FederationParams, RoundObserver, RoundRecord};
use crate::fsutil::write_atomic;

pub const MANIFEST_FORMAT: &str = "shiftleak-run-manifest";
pub const MANIFEST_VERSION: u32 = 1;

/// Everything needed to reproduce one run: the full study, which sweep point
/// and which repeat. The resolved config is echoed for readers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    pub version: u32,
    pub tool_version: String,
    pub point: String,
    pub repeat: usize,
    pub centralized: bool,
    pub num_params: usize,
    pub config: ExperimentConfig,
    pub study: StudyConfig,
}

impl RunManifest {
    pub fn from_value(value: Value) -> Result<Self> {
        let m: RunManifest = serde_json::from_value(value).map_err(|e| Error::Config(format!("run manifest: {e}")))?;
        if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
            return Err(Error::Config(format!("unsupported manifest {} v{}", m.format, m.version)));
        }
        Ok(m)
    }
}

/// What `run --config` accepts: a study, or the manifest of a finished run.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum RunInput {
    Study(StudyConfig),
    Manifest(Box<RunManifest>),
}

impl RunInput {
    pub fn load(path: &Path, preset: Option<StudyPreset>) -> Result<Self> {
        let value = read_document(path)?;
        if value.get("format").and_then(Value::as_str) == Some(MANIFEST_FORMAT) {
            return Ok(RunInput::Manifest(Box::new(RunManifest::from_value(value)?)));
        }
        StudyConfig::from_value(value, preset)
            .map(RunInput::Study)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.to_string().trim_start_matches("invalid config: "))))
    }
}

/// In-memory result of one run.
#[derive(Debug, Clone)]
pub struct RunTelemetry {
    pub point: String,
    pub repeat: usize,
    pub config: ExperimentConfig,
    pub num_params: usize,
    pub records: Vec<RoundRecord>,
    pub sol: BTreeMap<SeriesKey, Series>,
    pub val_loss: Series,
    /// Every scorable round of every series, validation loss included.
    pub divergences: Vec<DivergenceReport>,
    /// Sensitivity scatter at the detection round, when every series has a full window there.
    pub scatter: Option<Vec<ScatterPoint>>,
    pub skipped: Vec<SkippedMetric>,
}

impl RunTelemetry {
    pub fn verdict(&self, threshold: f64) -> Verdict {
        verdict(&self.divergences, threshold)
    }

    /// Divergence reports of one series id (`val_loss` or `kind/metric/scope`).
    pub fn reports<'a>(&'a self, series_id: &'a str) -> impl Iterator<Item = &'a DivergenceReport> + 'a {
        self.divergences.iter().filter(move |r| r.series_id == series_id)
    }
}

/// The config of repeat `repeat` of a point: its seeds move with the repeat.
pub fn repeat_config(point: &ResolvedPoint, repeat: usize) -> ExperimentConfig {
    let mut cfg = point.config.clone();
    cfg.seeds = cfg.seeds.offset(repeat as u64);
    cfg
}

/// Runs one repeat of one point and scores every series.
pub fn execute(study: &StudyConfig, point: &ResolvedPoint, repeat: usize) -> Result<RunTelemetry> {
    let cfg = repeat_config(point, repeat);
    let prepared = prepare(study, &cfg)?;
    let num_params = prepared.model.num_params();
    let mut attacker = Attacker::new(study.attacker, prepared.probe);
    let records = {
        let mut observers: [&mut dyn RoundObserver; 1] = [&mut attacker];
        let result = if study.is_centralized() {
            let mut schedule = BTreeMap::new();
            let mut initial = prepared.initial;
            schedule.insert(1, initial.swap_remove(0));
            let mut swaps = prepared.swaps;
            schedule.append(&mut swaps[0]);
            run_centralized(&prepared.model, &schedule, &prepared.validation, cfg.r, cfg.batch_size, cfg.lr, cfg.seeds.order, &mut observers)
        } else {
            let params = FederationParams {
                rounds: cfg.r,
                local_epochs: cfg.l,
                batch_size: cfg.batch_size,
                lr: cfg.lr,
                order_seed: cfg.seeds.order,
                observer_client: cfg.attacker,
                parallel: false,
            };
            let data = FederationData {
                initial: prepared.initial,
                swaps: prepared.swaps,
                validation: prepared.validation,
            };
            run_federation(&prepared.model, data, &params, &mut observers)
        };
        result.map_err(Error::from)?
    };

    let sol = collect_series(records.iter().flat_map(|r| &r.attacker));
    let val_loss: Series = records.iter().map(|r| (r.round, r.val_loss)).collect();
    let mut divergences = score_series("val_loss", &val_loss, study.window);
    for (key, series) in &sol {
        divergences.extend(score_series(&key.to_string(), series, study.window));
    }
    let scatter = sensitivity_table(&sol, &val_loss, cfg.s, study.window).ok();
    Ok(RunTelemetry {
        point: point.label.clone(),
        repeat,
        config: cfg,
        num_params,
        records,
        sol,
        val_loss,
        divergences,
        scatter,
        skipped: attacker.skipped().to_vec(),
    })
}

#[derive(Serialize)]
struct RoundRow<'a> {
    round: usize,
    client: &'a str,
    metric: &'a str,
    value: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub(crate) struct SolRow {
    pub round: usize,
    pub info_kind: InfoKind,
    pub metric: Metric,
    pub layer: String,
    pub value: f64,
}

#[derive(Serialize)]
struct LayerRow {
    round: usize,
    info_kind: InfoKind,
    layer: usize,
    cosine: f64,
    normalized: f64,
}

#[derive(Serialize)]
struct SkippedRow<'a> {
    round: usize,
    series_id: String,
    reason: &'a str,
}

fn csv_bytes<T: Serialize>(rows: impl IntoIterator<Item = T>, header: &[&str]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.into_inner().map_err(|e| Error::Consistency(format!("csv buffer: {e}")))
}

/// Per-layer cosine series, each scaled to [0, 1] on its own.
fn layerwise_rows(sol: &BTreeMap<SeriesKey, Series>) -> Vec<LayerRow> {
    let mut rows = Vec::new();
    for (key, series) in sol {
        let Some(layer) = key.layer else { continue };
        if key.metric != Metric::Cosine {
            continue;
        }
        let lo = series.values().copied().fold(f64::INFINITY, f64::min);
        let hi = series.values().copied().fold(f64::NEG_INFINITY, f64::max);
        for (&round, &v) in series {
            rows.push(LayerRow {
                round,
                info_kind: key.kind,
                layer,
                cosine: v,
                normalized: if hi > lo { (v - lo) / (hi - lo) } else { 0.0 },
            });
        }
    }
    rows
}

pub fn run_dir(out: &Path, point: &str, repeat: usize) -> PathBuf {
    out.join(point).join(format!("run_{repeat}"))
}

/// Writes the telemetry files of one run. Files are rewritten atomically and
/// contain nothing that depends on time or scheduling.
pub fn write_run(dir: &Path, study: &StudyConfig, t: &RunTelemetry) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = RunManifest {
        format: MANIFEST_FORMAT.into(),
        version: MANIFEST_VERSION,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        point: t.point.clone(),
        repeat: t.repeat,
        centralized: study.is_centralized(),
        num_params: t.num_params,
        config: t.config.clone(),
        study: study.clone(),
    };
    let mut json = serde_json::to_vec_pretty(&manifest)?;
    json.push(b'\n');
    write_atomic(&dir.join("manifest.json"), &json)?;

    let mut rounds = Vec::new();
    for r in &t.records {
        rounds.push(RoundRow { round: r.round, client: "global", metric: "val_loss", value: r.val_loss });
        rounds.push(RoundRow { round: r.round, client: "global", metric: "val_accuracy", value: r.val_accuracy });
    }
    let ids: Vec<String> = t.records.first().map(|r| r.clients.iter().map(|c| c.id.to_string()).collect()).unwrap_or_default();
    for r in &t.records {
        for (c, id) in r.clients.iter().zip(&ids) {
            rounds.push(RoundRow { round: r.round, client: id, metric: "swapped", value: f64::from(u8::from(c.swapped)) });
            rounds.push(RoundRow { round: r.round, client: id, metric: "train_loss", value: c.train_loss });
            rounds.push(RoundRow { round: r.round, client: id, metric: "val_loss", value: c.val_loss });
            rounds.push(RoundRow { round: r.round, client: id, metric: "val_accuracy", value: c.val_accuracy });
        }
    }
    rounds.sort_by_key(|r| r.round);
    write_atomic(&dir.join("rounds.csv"), &csv_bytes(rounds, &["round", "client", "metric", "value"])?)?;

    let mut sol: Vec<SolRow> = t
        .sol
        .iter()
        .flat_map(|(key, series)| {
            series.iter().map(move |(&round, &value)| SolRow {
                round,
                info_kind: key.kind,
                metric: key.metric,
                layer: key.layer_label(),
                value,
            })
        })
        .collect();
    sol.sort_by_key(|r| r.round);
    write_atomic(&dir.join("sol.csv"), &csv_bytes(sol, &["round", "info_kind", "metric", "layer", "value"])?)?;

    let div_header = ["series_id", "round", "expected", "measured", "divergence", "relative_divergence", "z_score", "rmse"];
    write_atomic(&dir.join("divergence.csv"), &csv_bytes(&t.divergences, &div_header)?)?;

    let scatter_header = ["series_id", "round", "valloss_divergence", "sol_divergence", "valloss_z", "sol_z"];
    let scatter_path = dir.join("scatter.csv");
    match &t.scatter {
        Some(points) => write_atomic(&scatter_path, &csv_bytes(points, &scatter_header)?)?,
        None => {
            if scatter_path.exists() {
                std::fs::remove_file(&scatter_path).map_err(|e| Error::io(&scatter_path, e))?;
            }
        }
    }

    let layer_header = ["round", "info_kind", "layer", "cosine", "normalized"];
    write_atomic(&dir.join("layerwise.csv"), &csv_bytes(layerwise_rows(&t.sol), &layer_header)?)?;

    let skipped = t.skipped.iter().map(|s| SkippedRow {
        round: s.round,
        series_id: s.key.to_string(),
        reason: &s.reason,
    });
    write_atomic(&dir.join("skipped.csv"), &csv_bytes(skipped, &["round", "series_id", "reason"])?)?;
    Ok(())
}

/// One finished run, as reported back to the caller.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub point: String,
    pub repeat: usize,
    pub dir: PathBuf,
    pub verdict: Verdict,
}

fn run_one(study: &StudyConfig, point: &ResolvedPoint, repeat: usize, out: &Path) -> Result<RunSummary> {
    let t = execute(study, point, repeat)?;
    let dir = run_dir(out, &point.label, repeat);
    write_run(&dir, study, &t)?;
    Ok(RunSummary {
        point: point.label.clone(),
        repeat,
        dir,
        verdict: t.verdict(study.threshold),
    })
}

/// Runs every point and repeat of `study` into `out`, on up to `workers`
/// threads. Results do not depend on the number of workers.
pub fn cmd_run(study: &StudyConfig, out: &Path, workers: usize) -> Result<Vec<RunSummary>> {
    let violations = study.violations();
    if !violations.is_empty() {
        return Err(Error::Config(violations.join("; ")));
    }
    let points = study.points()?;
    let jobs: Vec<(&ResolvedPoint, usize)> = points.iter().flat_map(|p| (0..study.repeats).map(move |k| (p, k))).collect();
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut echo = serde_json::to_vec_pretty(study)?;
    echo.push(b'\n');
    write_atomic(&out.join("study.json"), &echo)?;

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunSummary>>>> = Mutex::new((0..jobs.len()).map(|_| None).collect());
    let worker = || loop {
        let i = next.fetch_add(1, Ordering::Relaxed);
        let Some(&(point, repeat)) = jobs.get(i) else { break };
        let r = run_one(study, point, repeat, out);
        results.lock().expect("no worker panics while holding the lock")[i] = Some(r);
    };
    std::thread::scope(|s| {
        for _ in 1..workers.clamp(1, jobs.len().max(1)) {
            s.spawn(worker);
        }
        worker();
    });
    results
        .into_inner()
        .expect("workers have finished")
        .into_iter()
        .map(|r| r.expect("every job ran"))
        .collect()
}

/// Replays the run a manifest describes into `out`, at the same relative path.
pub fn cmd_run_manifest(manifest: &RunManifest, out: &Path) -> Result<RunSummary> {
    let points = manifest.study.points()?;
    let point = points
        .iter()
        .find(|p| p.label == manifest.point)
        .ok_or_else(|| Error::Consistency(format!("manifest point {:?} is not in its study", manifest.point)))?;
    if repeat_config(point, manifest.repeat) != manifest.config {
        return Err(Error::Consistency("manifest config does not match its study".into()));
    }
    run_one(&manifest.study, point, manifest.repeat, out)
}
