use std::collections::BTreeMap;
use std::path::Path;

use super::config::{DatasetSource, StudyConfig};
use crate::data::{apply_label_shift, load_census, load_idx, split_iid_indices, synth_blobs, BlobSpec, LabeledDataset};
use crate::error::{Error, Result};
use crate::fl::ExperimentConfig;
use crate::nn::{arch, Model};
use crate::rng::derive_seed;
use crate::tensor::Tensor;

const IDX_IMAGES: &str = "train-images-idx3-ubyte";
const IDX_LABELS: &str = "train-labels-idx1-ubyte";

/// Everything a run needs besides the protocol parameters.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub model: Model,
    pub validation: LabeledDataset,
    pub probe: Tensor,
    /// Initial dataset of every client (one entry for a centralized run).
    pub initial: Vec<LabeledDataset>,
    /// Per-client swap schedule, round to dataset.
    pub swaps: Vec<BTreeMap<usize, LabeledDataset>>,
}

fn require(path: &Path, instructions: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::MissingDataset {
            path: path.to_path_buf(),
            instructions: instructions.to_string(),
        })
    }
}

fn load_idx_dir(dir: &Path, name: &str) -> Result<LabeledDataset> {
    let instructions = format!(
        "download the {name} training set ({IDX_IMAGES}.gz and {IDX_LABELS}.gz), \
         check the MD5 sums listed in the README, gunzip both files into this directory"
    );
    let images = dir.join(IDX_IMAGES);
    let labels = dir.join(IDX_LABELS);
    require(&images, &instructions)?;
    require(&labels, &instructions)?;
    load_idx(&images, &labels)
}

/// Samples each shifting client's pool must hold, for synthetic data.
fn synthetic_pool_size(cfg: &ExperimentConfig) -> usize {
    let r = cfg.shift.ratio.max(1.0 - cfg.shift.ratio);
    (cfg.d as f64 * (2.6 * r).max(2.0)).ceil() as usize
}

/// Clients (in id order) that receive a new dataset at round `s`, with a flag
/// telling whether theirs is label-shifted. A null run draws the same pools as
/// its shifted twin so both see identical data up to round `s`; its shifting
/// clients just never swap.
fn swapping_clients(cfg: &ExperimentConfig, centralized: bool) -> Vec<(usize, bool)> {
    let shifting = if centralized {
        vec![0]
    } else {
        cfg.shifting_clients()
    };
    let n = if centralized { 1 } else { cfg.n };
    (0..n)
        .filter_map(|c| {
            let shifted = shifting.contains(&c);
            (shifted || cfg.benign_swaps).then_some((c, shifted))
        })
        .collect()
}

fn model_for(source: &DatasetSource, data: &LabeledDataset, seed: u64) -> Result<Model> {
    let specs = match source {
        DatasetSource::Mnist { .. } | DatasetSource::FashionMnist { .. } => arch::image_net(data.num_classes()),
        DatasetSource::Synthetic { .. } | DatasetSource::Census { .. } => arch::tabular_net(data.num_classes()),
    };
    Model::new(data.feature_shape().to_vec(), specs, seed)
}

/// Loads or generates the sample pool and carves it into the validation
/// split, the clients' initial datasets and disjoint per-client pools from
/// which the round-`s` datasets are drawn. All randomness comes from the data
/// seed; the model is initialized from the model seed.
pub fn prepare(study: &StudyConfig, cfg: &ExperimentConfig) -> Result<PreparedRun> {
    let centralized = study.is_centralized();
    let n = if centralized { 1 } else { cfg.n };
    let swappers = swapping_clients(cfg, centralized);
    let seed = cfg.seeds.data;
    let fixed = study.validation_size + n * cfg.d;

    let pool = match &study.dataset {
        DatasetSource::Synthetic { classes, dim, separation } => {
            let need = fixed + swappers.len() * synthetic_pool_size(cfg);
            synth_blobs(&BlobSpec {
                num_classes: *classes,
                samples_per_class: need.div_ceil(*classes),
                dim: *dim,
                separation: *separation,
                seed: derive_seed(seed, &[1]),
            })?
        }
        DatasetSource::Mnist { dir } => load_idx_dir(dir, "MNIST")?,
        DatasetSource::FashionMnist { dir } => load_idx_dir(dir, "Fashion-MNIST")?,
        DatasetSource::Census { path } => {
            require(path, "download adult.data from the UCI Adult (Census Income) dataset page")?;
            load_census(path)?
        }
    };
    cfg.shift.validate(pool.num_classes())?;

    let mut sizes = vec![study.validation_size];
    sizes.extend(std::iter::repeat_n(cfg.d, n));
    let (parts, rest) = split_iid_indices(pool.len(), &sizes, derive_seed(seed, &[2]))?;
    let validation = pool.subset(&parts[0])?;
    let initial = parts[1..].iter().map(|p| pool.subset(p)).collect::<Result<Vec<_>>>()?;

    let mut swaps = vec![BTreeMap::new(); n];
    if !swappers.is_empty() {
        let per_pool = rest.len() / swappers.len();
        if per_pool < cfg.d {
            return Err(Error::Size {
                requested: fixed + swappers.len() * cfg.d,
                available: pool.len(),
            });
        }
        let pool_sizes = vec![per_pool; swappers.len()];
        let (chunks, _) = split_iid_indices(rest.len(), &pool_sizes, derive_seed(seed, &[3]))?;
        for (&(client, shifted), chunk) in swappers.iter().zip(chunks) {
            if shifted && cfg.no_shift && !cfg.benign_swaps {
                continue;
            }
            let idx: Vec<usize> = chunk.iter().map(|&i| rest[i]).collect();
            let client_pool = pool.subset(&idx)?;
            let ds = if shifted && !cfg.no_shift {
                apply_label_shift(&client_pool, &cfg.shift, cfg.d, derive_seed(seed, &[4, client as u64]))?
            } else {
                client_pool.subset(&(0..cfg.d).collect::<Vec<_>>())?
            };
            swaps[client].insert(cfg.s, ds);
        }
    }

    let probe_idx: Vec<usize> = (0..study.probe_size.min(validation.len())).collect();
    let probe = validation.features().select_rows(&probe_idx)?;
    let model = model_for(&study.dataset, &pool, cfg.seeds.model)?;
    Ok(PreparedRun {
        model,
        validation,
        probe,
        initial,
        swaps,
    })
}
