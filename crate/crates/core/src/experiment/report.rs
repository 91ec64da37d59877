use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::run::{repeat_config, RunManifest, SolRow};
use crate::detect::{DivergenceReport, ScatterPoint};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

/// Earliest round at which some leakage series reaches the threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub threshold: f64,
    /// (round, series id, z) of the first detection.
    pub detected: Option<(usize, String, f64)>,
    /// (round, series id, z) of the largest z-score anywhere.
    pub peak: Option<(usize, String, f64)>,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.detected, &self.peak) {
            (Some((round, id, z)), _) => write!(f, "shift detected at round {round} by series {id} at z={z:.3}"),
            (None, Some((round, id, z))) => write!(
                f,
                "no shift detected at z >= {} (peak z={z:.3} at round {round} by series {id})",
                self.threshold
            ),
            (None, None) => write!(f, "no shift detected (no scorable rounds)"),
        }
    }
}

/// Ignores the validation loss; ties at a round go to the largest z-score.
pub fn verdict(divergences: &[DivergenceReport], threshold: f64) -> Verdict {
    let mut detected: Option<(usize, String, f64)> = None;
    let mut peak: Option<(usize, String, f64)> = None;
    for r in divergences.iter().filter(|r| r.series_id != "val_loss") {
        if peak.as_ref().is_none_or(|p| r.z_score > p.2) {
            peak = Some((r.round, r.series_id.clone(), r.z_score));
        }
        if r.z_score >= threshold {
            let better = match &detected {
                None => true,
                Some((round, _, z)) => r.round < *round || (r.round == *round && r.z_score > *z),
            };
            if better {
                detected = Some((r.round, r.series_id.clone(), r.z_score));
            }
        }
    }
    Verdict {
        threshold,
        detected,
        peak,
    }
}

/// Mean and sample standard deviation (zero for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[derive(Debug, Clone)]
struct RunFiles {
    dir: PathBuf,
    manifest: RunManifest,
}

fn read_csv<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::format(path, format!("{other:?}")),
    })?;
    r.deserialize().map(|row| row.map_err(|e| Error::format(path, e.to_string()))).collect()
}

fn discover(dir: &Path) -> Result<Vec<RunFiles>> {
    let read = |p: &Path| std::fs::read_dir(p).map_err(|e| Error::io(p, e));
    let mut runs = Vec::new();
    for point in read(dir)? {
        let point = point.map_err(|e| Error::io(dir, e))?.path();
        if !point.is_dir() || point.file_name().is_some_and(|n| n == "report") {
            continue;
        }
        for run in read(&point)? {
            let run = run.map_err(|e| Error::io(&point, e))?.path();
            let manifest_path = run.join("manifest.json");
            if !manifest_path.is_file() {
                continue;
            }
            let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
            let value = serde_json::from_str(&text).map_err(|e| Error::format(&manifest_path, e.to_string()))?;
            runs.push(RunFiles {
                dir: run,
                manifest: RunManifest::from_value(value)?,
            });
        }
    }
    Ok(runs)
}

#[derive(Serialize)]
struct SeriesRow {
    point: String,
    series_id: String,
    round: usize,
    runs: usize,
    mean: f64,
    std: f64,
}

#[derive(Serialize)]
struct DivergenceRow {
    point: String,
    series_id: String,
    round: usize,
    runs: usize,
    z_mean: f64,
    z_std: f64,
    divergence_mean: f64,
    divergence_std: f64,
}

#[derive(Serialize)]
struct ScatterRow {
    point: String,
    series_id: String,
    round: usize,
    runs: usize,
    valloss_z_mean: f64,
    valloss_z_std: f64,
    sol_z_mean: f64,
    sol_z_std: f64,
    valloss_divergence_mean: f64,
    sol_divergence_mean: f64,
}

#[derive(Deserialize)]
struct RoundRow {
    round: usize,
    client: String,
    metric: String,
    value: f64,
}

#[derive(Debug, Clone)]
pub struct ReportSummary {
    pub runs: usize,
    pub points: usize,
    /// One line per run, `point/run_k: verdict`.
    pub verdicts: Vec<String>,
    pub out_dir: PathBuf,
}

type Grouped<V> = BTreeMap<(String, usize), Vec<V>>;

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Consistency(format!("csv buffer: {e}")))?;
    write_atomic(path, &bytes)
}

/// Aggregates the repeats under `dir` into `dir/report`: mean and standard
/// deviation per series and round, the sensitivity scatter averaged over
/// repeats, and one verdict line per run.
pub fn cmd_report(dir: &Path) -> Result<ReportSummary> {
    let mut runs = discover(dir)?;
    if runs.is_empty() {
        return Err(Error::Consistency(format!("no run telemetry under {}", dir.display())));
    }
    let study = runs[0].manifest.study.clone();
    let points = study.points()?;
    for r in &runs {
        if r.manifest.study != study {
            return Err(Error::Consistency(format!(
                "mixed-config telemetry: {} was produced by a different study than {}",
                r.dir.display(),
                runs[0].dir.display()
            )));
        }
        let point = points.iter().find(|p| p.label == r.manifest.point).ok_or_else(|| {
            Error::Consistency(format!("{}: point {:?} is not in the study", r.dir.display(), r.manifest.point))
        })?;
        if repeat_config(point, r.manifest.repeat) != r.manifest.config {
            return Err(Error::Consistency(format!("{}: config does not match its study", r.dir.display())));
        }
    }
    let order = |label: &str| points.iter().position(|p| p.label == label).unwrap_or(usize::MAX);
    runs.sort_by_key(|r| (order(&r.manifest.point), r.manifest.repeat));

    let out = dir.join("report");
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    let mut series_rows = Vec::new();
    let mut divergence_rows = Vec::new();
    let mut scatter_rows = Vec::new();
    let mut verdicts = Vec::new();

    for point in &points {
        let group: Vec<&RunFiles> = runs.iter().filter(|r| r.manifest.point == point.label).collect();
        if group.is_empty() {
            continue;
        }
        let mut values: Grouped<f64> = BTreeMap::new();
        let mut zs: Grouped<(f64, f64)> = BTreeMap::new();
        let mut scatter: Grouped<ScatterPoint> = BTreeMap::new();
        for run in &group {
            let rounds: Vec<RoundRow> = read_csv(&run.dir.join("rounds.csv"))?;
            for r in rounds.iter().filter(|r| r.client == "global" && r.metric == "val_loss") {
                values.entry(("val_loss".into(), r.round)).or_default().push(r.value);
            }
            let sol: Vec<SolRow> = read_csv(&run.dir.join("sol.csv"))?;
            for r in sol {
                let id = match r.layer.as_str() {
                    "full" => format!("{}/{}/full", r.info_kind, r.metric),
                    l => format!("{}/{}/layer{l}", r.info_kind, r.metric),
                };
                values.entry((id, r.round)).or_default().push(r.value);
            }
            let div: Vec<DivergenceReport> = read_csv(&run.dir.join("divergence.csv"))?;
            for r in &div {
                zs.entry((r.series_id.clone(), r.round)).or_default().push((r.z_score, r.divergence));
            }
            let scatter_path = run.dir.join("scatter.csv");
            if scatter_path.is_file() {
                for p in read_csv::<ScatterPoint>(&scatter_path)? {
                    scatter.entry((p.series_id.clone(), p.round)).or_default().push(p);
                }
            }
            let v = verdict(&div, study.threshold);
            let detection = crate::detect::detection_round(run.manifest.config.s);
            let loss = div
                .iter()
                .find(|r| r.series_id == "val_loss" && r.round == detection)
                .map_or_else(|| "n/a".to_string(), |r| format!("{:.3}", r.z_score));
            verdicts.push(format!(
                "{}/run_{}: {v}; validation loss z={loss} at round {detection}",
                point.label, run.manifest.repeat
            ));
        }
        for ((id, round), v) in &values {
            let (mean, std) = mean_std(v);
            series_rows.push(SeriesRow { point: point.label.clone(), series_id: id.clone(), round: *round, runs: v.len(), mean, std });
        }
        for ((id, round), v) in &zs {
            let (z_mean, z_std) = mean_std(&v.iter().map(|p| p.0).collect::<Vec<_>>());
            let (divergence_mean, divergence_std) = mean_std(&v.iter().map(|p| p.1).collect::<Vec<_>>());
            divergence_rows.push(DivergenceRow {
                point: point.label.clone(),
                series_id: id.clone(),
                round: *round,
                runs: v.len(),
                z_mean,
                z_std,
                divergence_mean,
                divergence_std,
            });
        }
        for ((id, round), v) in &scatter {
            let col = |f: fn(&ScatterPoint) -> f64| mean_std(&v.iter().map(f).collect::<Vec<_>>());
            let (valloss_z_mean, valloss_z_std) = col(|p| p.valloss_z);
            let (sol_z_mean, sol_z_std) = col(|p| p.sol_z);
            scatter_rows.push(ScatterRow {
                point: point.label.clone(),
                series_id: id.clone(),
                round: *round,
                runs: v.len(),
                valloss_z_mean,
                valloss_z_std,
                sol_z_mean,
                sol_z_std,
                valloss_divergence_mean: col(|p| p.valloss_divergence).0,
                sol_divergence_mean: col(|p| p.sol_divergence).0,
            });
        }
    }
    write_csv(&out.join("series.csv"), series_rows)?;
    write_csv(&out.join("divergence.csv"), divergence_rows)?;
    write_csv(&out.join("scatter.csv"), scatter_rows)?;
    let mut text = verdicts.join("\n");
    text.push('\n');
    write_atomic(&out.join("verdict.txt"), text.as_bytes())?;
    Ok(ReportSummary {
        runs: runs.len(),
        points: points.iter().filter(|p| runs.iter().any(|r| r.manifest.point == p.label)).count(),
        verdicts,
        out_dir: out,
    })
}
