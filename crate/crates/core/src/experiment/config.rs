use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::attacker::AttackerConfig;
use crate::data::ShiftSpec;
use crate::error::{Error, Result};
use crate::fl::{ExperimentConfig, Seeds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyPreset {
    Centralized,
    Layerwise,
    Sensitivity,
    Scalability,
    #[default]
    Custom,
}

impl StudyPreset {
    pub const ALL: [StudyPreset; 5] = [
        StudyPreset::Centralized,
        StudyPreset::Layerwise,
        StudyPreset::Sensitivity,
        StudyPreset::Scalability,
        StudyPreset::Custom,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            StudyPreset::Centralized => "centralized",
            StudyPreset::Layerwise => "layerwise",
            StudyPreset::Sensitivity => "sensitivity",
            StudyPreset::Scalability => "scalability",
            StudyPreset::Custom => "custom",
        }
    }
}

impl fmt::Display for StudyPreset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StudyPreset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StudyPreset::ALL
            .into_iter()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::Config(format!("unknown preset {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Federated,
    /// One model, epochs play the role of rounds.
    Centralized,
}

/// Where the sample pool comes from. Real datasets are read from local files
/// only; synthetic blobs are generated at whatever size the run needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DatasetSource {
    Synthetic {
        #[serde(default = "default_classes")]
        classes: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_separation")]
        separation: f64,
    },
    /// Directory holding `train-images-idx3-ubyte` and `train-labels-idx1-ubyte`.
    Mnist { dir: PathBuf },
    FashionMnist { dir: PathBuf },
    /// The Adult `adult.data` file.
    Census { path: PathBuf },
}

fn default_classes() -> usize {
    10
}

fn default_dim() -> usize {
    12
}

fn default_separation() -> f64 {
    5.0
}

impl Default for DatasetSource {
    fn default() -> Self {
        DatasetSource::Synthetic {
            classes: default_classes(),
            dim: default_dim(),
            separation: default_separation(),
        }
    }
}

impl DatasetSource {
    /// Number of classes, known without touching the files.
    pub fn num_classes(&self) -> usize {
        match self {
            DatasetSource::Synthetic { classes, .. } => *classes,
            DatasetSource::Mnist { .. } | DatasetSource::FashionMnist { .. } => 10,
            DatasetSource::Census { .. } => 2,
        }
    }

    /// The shift the built-in studies apply for this dataset.
    pub fn default_shift(&self, ratio: f64) -> ShiftSpec {
        match self {
            DatasetSource::Census { .. } => ShiftSpec::binary(ratio),
            other => ShiftSpec::even_odd(other.num_classes(), ratio),
        }
    }
}

/// One point of a sweep: a label and a partial experiment config merged over
/// the base (`{ n = 3, d = 800 }`, `{ shift = { ratio = 0.6 } }`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub label: String,
    #[serde(default = "empty_object")]
    pub set: Value,
}

fn empty_object() -> Value {
    Value::Object(Default::default())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub preset: StudyPreset,
    #[serde(default)]
    pub mode: Mode,
    #[serde(default)]
    pub dataset: DatasetSource,
    pub experiment: ExperimentConfig,
    /// Size of the attacker's fixed validation split.
    #[serde(default = "default_validation_size")]
    pub validation_size: usize,
    /// Probe samples for representations, taken from the validation split.
    #[serde(default = "default_probe_size")]
    pub probe_size: usize,
    /// Rounds in the trend-fit window.
    #[serde(default = "default_window")]
    pub window: usize,
    /// z-score at which the report calls a shift detected.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub attacker: AttackerConfig,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub sweep: Vec<SweepPoint>,
}

fn default_validation_size() -> usize {
    1000
}

fn default_probe_size() -> usize {
    256
}

fn default_window() -> usize {
    crate::detect::DEFAULT_WINDOW
}

fn default_threshold() -> f64 {
    3.0
}

fn default_repeats() -> usize {
    3
}

/// A concrete experiment of a study: base config with one sweep point applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedPoint {
    pub label: String,
    pub config: ExperimentConfig,
}

impl StudyConfig {
    /// Defaults: the reference protocol sizes (`r`, `s`, `d`, `n`, `m`, `l`,
    /// learning rate, shift ratios) on synthetic blobs with the fully connected
    /// net, so every preset runs offline in seconds to minutes.
    pub fn preset(preset: StudyPreset) -> Self {
        let dataset = DatasetSource::default();
        let base = |r, s, d, n, m, l, ratio| ExperimentConfig {
            r,
            s,
            d,
            n,
            m,
            l,
            shift: dataset.default_shift(ratio),
            seeds: Seeds::default(),
            attacker: 0,
            batch_size: 64,
            lr: 1e-4,
            benign_swaps: false,
            no_shift: false,
        };
        let (mode, experiment, sweep) = match preset {
            StudyPreset::Centralized | StudyPreset::Layerwise => (Mode::Centralized, base(20, 11, 6700, 1, 0, 1, 0.8), vec![]),
            StudyPreset::Sensitivity => (
                Mode::Federated,
                base(20, 11, 6700, 2, 1, 2, 0.8),
                [0.55, 0.6, 0.7, 0.8]
                    .iter()
                    .map(|&ratio| SweepPoint {
                        label: format!("ratio-{ratio}"),
                        set: serde_json::json!({ "shift": { "ratio": ratio } }),
                    })
                    .collect(),
            ),
            StudyPreset::Scalability => (
                Mode::Federated,
                base(20, 11, 6700, 2, 1, 2, 0.7),
                [(2, 1, 6700), (3, 1, 4400), (5, 1, 2600), (10, 3, 1300)]
                    .iter()
                    .map(|&(n, m, d)| SweepPoint {
                        label: format!("n-{n}"),
                        set: serde_json::json!({ "n": n, "m": m, "d": d }),
                    })
                    .collect(),
            ),
            StudyPreset::Custom => (Mode::Federated, base(10, 7, 500, 2, 1, 1, 0.8), vec![]),
        };
        StudyConfig {
            name: preset.as_str().to_string(),
            preset,
            mode,
            dataset,
            experiment,
            validation_size: default_validation_size(),
            probe_size: default_probe_size(),
            window: default_window(),
            threshold: default_threshold(),
            attacker: AttackerConfig::default(),
            repeats: default_repeats(),
            sweep,
        }
    }

    /// Parses TOML (`.toml`) or JSON (anything else). A `preset` key makes
    /// the file an override of that preset's defaults.
    pub fn from_str_with_format(text: &str, toml_format: bool) -> Result<Self> {
        let value: Value = if toml_format {
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        } else {
            serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?
        };
        Self::from_value(value, None)
    }

    /// Builds a study from a parsed document, layered over `preset` (or the
    /// document's own `preset` key) when one is given.
    pub fn from_value(value: Value, preset: Option<StudyPreset>) -> Result<Self> {
        let preset = match preset {
            Some(p) => Some(p),
            None => match value.get("preset") {
                Some(Value::String(s)) => Some(s.parse()?),
                Some(other) => return Err(Error::Config(format!("preset: expected a string, got {other}"))),
                None => None,
            },
        };
        let merged = match preset {
            Some(p) => {
                let mut base = serde_json::to_value(Self::preset(p))?;
                merge(&mut base, value);
                base["preset"] = Value::String(p.as_str().into());
                base
            }
            None => value,
        };
        serde_json::from_value(merged).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path, preset: Option<StudyPreset>) -> Result<Self> {
        let value = read_document(path)?;
        Self::from_value(value, preset)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), e.to_string().trim_start_matches("invalid config: "))))
    }

    /// Replaces the seeds with `model = seed, data = seed + 1, order = seed + 2`.
    pub fn set_seed(&mut self, seed: u64) {
        self.experiment.seeds = Seeds {
            model: seed,
            data: seed.wrapping_add(1),
            order: seed.wrapping_add(2),
        };
    }

    pub fn is_centralized(&self) -> bool {
        self.mode == Mode::Centralized
    }

    /// The base config alone when there is no sweep, else one point per entry.
    pub fn points(&self) -> Result<Vec<ResolvedPoint>> {
        if self.sweep.is_empty() {
            return Ok(vec![ResolvedPoint {
                label: "base".into(),
                config: self.experiment.clone(),
            }]);
        }
        self.sweep
            .iter()
            .map(|p| {
                let mut v = serde_json::to_value(&self.experiment)?;
                merge(&mut v, p.set.clone());
                let config = serde_json::from_value(v)
                    .map_err(|e| Error::Config(format!("sweep point {:?}: {e}", p.label)))?;
                Ok(ResolvedPoint {
                    label: p.label.clone(),
                    config,
                })
            })
            .collect()
    }

    /// Every broken invariant, without running anything.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.repeats == 0 {
            v.push("repeats = 0: need at least one repeat".into());
        }
        if self.window < 2 {
            v.push(format!("window = {}: a trend line needs at least two rounds", self.window));
        }
        if self.validation_size == 0 {
            v.push("validation_size = 0".into());
        }
        if self.probe_size < 2 || self.probe_size > self.validation_size {
            v.push(format!(
                "probe_size = {}: need 2 <= probe_size <= validation_size ({})",
                self.probe_size, self.validation_size
            ));
        }
        if self.attacker.metrics.cmd_order == 0 {
            v.push("attacker.metrics.cmd_order = 0".into());
        }
        if let DatasetSource::Synthetic { classes, dim, separation } = self.dataset {
            if classes < 2 || dim == 0 || !(separation.is_finite() && separation >= 0.0) {
                v.push("dataset: synthetic blobs need classes >= 2, dim >= 1 and a finite separation".into());
            }
        }
        let mut labels = std::collections::BTreeSet::new();
        for p in &self.sweep {
            if p.label.is_empty() || p.label.contains(['/', '\\']) || p.label.starts_with('.') {
                v.push(format!("sweep label {:?}: must be a plain directory name", p.label));
            }
            if !labels.insert(p.label.as_str()) {
                v.push(format!("sweep label {:?} appears twice", p.label));
            }
        }
        let points = match self.points() {
            Ok(p) => p,
            Err(e) => {
                v.push(e.to_string());
                return v;
            }
        };
        for p in points {
            let prefix = if self.sweep.is_empty() { String::new() } else { format!("[{}] ", p.label) };
            let cfg = &p.config;
            for msg in cfg.violations(self.is_centralized()) {
                v.push(format!("{prefix}{msg}"));
            }
            if let Err(e) = cfg.shift.validate(self.dataset.num_classes()) {
                v.push(format!("{prefix}shift: {}", e.to_string().trim_start_matches("invalid config: ")));
            }
            // Gradient series start one round after the others; the detection
            // round s + 1 needs a full window of them.
            if self.window >= 2 && cfg.s < self.window + 2 {
                v.push(format!(
                    "{prefix}s = {}: the trend window ({}) needs s >= window + 2",
                    cfg.s, self.window
                ));
            }
            if cfg.s + 1 > cfg.r {
                v.push(format!("{prefix}r = {}: the shift shows from round s + 1 = {}, so need r > s", cfg.r, cfg.s + 1));
            }
        }
        v
    }
}

/// Reads a TOML (`.toml`) or JSON file into a generic document.
pub fn read_document(path: &Path) -> Result<Value> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    } else {
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Recursive object merge; anything that is not an object replaces the target.
fn merge(target: &mut Value, patch: Value) {
    match (target, patch) {
        (Value::Object(t), Value::Object(p)) => {
            for (k, v) in p {
                match t.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        t.insert(k, v);
                    }
                }
            }
        }
        (slot, p) => *slot = p,
    }
}
