use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::aggregate::fedavg_aggregate;
use crate::attacker::SolPoint;
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::nn::{train_epochs, Adam, EpochOrder, Model, ParamVector, TrainConfig};

const EVAL_CHUNK: usize = 512;

/// Read-only view handed to observers at the start of every round, after the
/// server broadcast and before any local training.
pub struct RoundContext<'a> {
    pub round: usize,
    /// Global model holding the broadcast parameters.
    pub global: &'a Model,
    /// Update the observing client sent to the server in the previous round.
    pub own_previous_update: Option<&'a ParamVector>,
    pub clients: usize,
}

pub trait RoundObserver {
    fn observe(&mut self, ctx: &RoundContext<'_>) -> Result<Vec<SolPoint>>;
}

/// Client-side metrics of one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientRoundStats {
    pub id: usize,
    pub swapped: bool,
    /// Mean batch loss of the last local epoch.
    pub train_loss: f64,
    /// Local model after training, on the attacker's validation set.
    pub val_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    pub round: usize,
    /// Server broadcast of this round: encodes training up to round - 1.
    pub global: ParamVector,
    /// Broadcast model on the attacker's validation set.
    pub val_loss: f64,
    pub val_accuracy: f64,
    pub clients: Vec<ClientRoundStats>,
    pub attacker: Vec<SolPoint>,
}

/// Everything a run needs besides its configuration.
#[derive(Debug, Clone)]
pub struct FederationData {
    pub initial: Vec<LabeledDataset>,
    /// `swaps[client]` maps a round to the dataset the client switches to at
    /// the start of that round.
    pub swaps: Vec<BTreeMap<usize, LabeledDataset>>,
    pub validation: LabeledDataset,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FederationParams {
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub order_seed: u64,
    /// Client id whose previous update observers receive.
    pub observer_client: usize,
    /// Train clients on worker threads. Results do not depend on it.
    pub parallel: bool,
}

/// A run that stopped early. The records of completed rounds are kept.
#[derive(Debug, thiserror::Error)]
#[error("run aborted in round {round}: {source}")]
pub struct RunAborted {
    pub round: usize,
    pub records: Vec<RoundRecord>,
    #[source]
    pub source: Error,
}

impl From<RunAborted> for Error {
    fn from(a: RunAborted) -> Self {
        Error::Timeline(a.to_string())
    }
}

struct ClientState {
    id: usize,
    dataset: LabeledDataset,
    swaps: BTreeMap<usize, LabeledDataset>,
    model: Model,
    optimizer: Adam,
}

impl ClientState {
    fn train_round(&mut self, global: &ParamVector, round: usize, params: &FederationParams) -> Result<f64> {
        self.model.set_params(global.clone())?;
        let cfg = TrainConfig {
            epochs: params.local_epochs,
            batch_size: params.batch_size,
            lr: params.lr,
        };
        let order = EpochOrder {
            seed: params.order_seed,
            stream: self.id as u64,
            first_epoch: ((round - 1) * params.local_epochs) as u64,
        };
        let losses = train_epochs(&mut self.model, &mut self.optimizer, &self.dataset, &cfg, order)?;
        Ok(losses.last().copied().unwrap_or(f64::NAN))
    }
}

fn validate_data(data: &FederationData, template: &Model) -> Result<()> {
    if data.initial.is_empty() {
        return Err(Error::Config("no client datasets".into()));
    }
    if data.swaps.len() != data.initial.len() {
        return Err(Error::Config("one swap schedule per client is required".into()));
    }
    let d = data.initial[0].len();
    for (c, ds) in data.initial.iter().enumerate() {
        if ds.is_empty() {
            return Err(Error::EmptyData);
        }
        if ds.len() != d {
            return Err(Error::Consistency(format!("client {c} holds {} samples, client 0 holds {d}", ds.len())));
        }
        for (round, swap) in &data.swaps[c] {
            if swap.len() != d {
                return Err(Error::Consistency(format!(
                    "client {c} swaps to {} samples at round {round}; dataset size must stay {d}",
                    swap.len()
                )));
            }
        }
        if ds.feature_shape() != template.input_shape() {
            return Err(Error::InputShape {
                expected: template.input_shape().to_vec(),
                actual: ds.feature_shape().to_vec(),
            });
        }
    }
    Ok(())
}

/// FedAvg: every round the server broadcasts the global parameters, each client
/// trains `local_epochs` epochs from them, and the server takes the uniform
/// mean of all client parameter vectors.
///
/// Clients keep their Adam state across rounds. Observers run at the start of
/// every round; an observer error aborts the run.
pub fn run_federation(
    initial: &Model,
    data: FederationData,
    params: &FederationParams,
    observers: &mut [&mut dyn RoundObserver],
) -> Result<Vec<RoundRecord>, RunAborted> {
    let abort = |round, records, source| RunAborted { round, records, source };
    if let Err(e) = validate_data(&data, initial) {
        return Err(abort(0, Vec::new(), e));
    }
    let n = data.initial.len();
    let mut clients: Vec<ClientState> = data
        .initial
        .into_iter()
        .zip(data.swaps)
        .enumerate()
        .map(|(id, (dataset, swaps))| ClientState {
            id,
            dataset,
            swaps,
            model: initial.clone(),
            optimizer: Adam::new(initial.layout()),
        })
        .collect();
    let validation = data.validation;
    let mut global = initial.clone();
    let mut records = Vec::with_capacity(params.rounds);
    let mut own_previous: Option<ParamVector> = None;

    for round in 1..=params.rounds {
        macro_rules! attempt {
            ($e:expr) => {
                match $e {
                    Ok(v) => v,
                    Err(source) => return Err(RunAborted { round, records, source }),
                }
            };
        }
        let (val_loss, val_accuracy) = attempt!(global.evaluate(validation.features(), validation.labels(), EVAL_CHUNK));
        let ctx = RoundContext {
            round,
            global: &global,
            own_previous_update: own_previous.as_ref(),
            clients: n,
        };
        let mut attacker = Vec::new();
        for obs in observers.iter_mut() {
            attacker.extend(attempt!(obs.observe(&ctx)));
        }
        let broadcast = global.params().clone();

        let mut swapped = vec![false; n];
        for c in clients.iter_mut() {
            if let Some(ds) = c.swaps.remove(&round) {
                c.dataset = ds;
                swapped[c.id] = true;
            }
        }

        let results: Vec<Result<f64>> = if params.parallel && n > 1 {
            std::thread::scope(|scope| {
                let handles: Vec<_> = clients
                    .iter_mut()
                    .map(|c| {
                        let broadcast = &broadcast;
                        scope.spawn(move || c.train_round(broadcast, round, params))
                    })
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().unwrap_or_else(|_| Err(Error::Timeline("client thread panicked".into()))))
                    .collect()
            })
        } else {
            clients.iter_mut().map(|c| c.train_round(&broadcast, round, params)).collect()
        };

        let mut stats = Vec::with_capacity(n);
        let mut updates = Vec::with_capacity(n);
        for (c, res) in clients.iter().zip(results) {
            let train_loss = attempt!(res);
            let (val_loss, val_accuracy) =
                attempt!(c.model.evaluate(validation.features(), validation.labels(), EVAL_CHUNK));
            stats.push(ClientRoundStats {
                id: c.id,
                swapped: swapped[c.id],
                train_loss,
                val_loss,
                val_accuracy,
            });
            updates.push(c.model.params().clone());
        }
        attempt!(fedavg_aggregate(&updates).and_then(|p| global.set_params(p)));
        own_previous = updates.get(params.observer_client).cloned();
        records.push(RoundRecord {
            round,
            global: broadcast,
            val_loss,
            val_accuracy,
            clients: stats,
            attacker,
        });
    }
    Ok(records)
}

/// Single-model baseline: epochs play the role of rounds. At epoch `t` the
/// model is recorded and observed, then trained one epoch on the dataset
/// scheduled for `t` (the latest entry of `schedule` at or before `t`).
#[allow(clippy::too_many_arguments)]
pub fn run_centralized(
    initial: &Model,
    schedule: &BTreeMap<usize, LabeledDataset>,
    validation: &LabeledDataset,
    epochs: usize,
    batch_size: usize,
    lr: f64,
    order_seed: u64,
    observers: &mut [&mut dyn RoundObserver],
) -> Result<Vec<RoundRecord>, RunAborted> {
    let abort = |round, records, source| RunAborted { round, records, source };
    if schedule.keys().next() != Some(&1) {
        return Err(abort(0, Vec::new(), Error::Config("the schedule must start at epoch 1".into())));
    }
    let mut model = initial.clone();
    let mut optimizer = Adam::new(initial.layout());
    let mut records = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let (key, dataset) = schedule.range(..=epoch).next_back().expect("epoch 1 is scheduled");
        let mut step = || -> Result<RoundRecord> {
            let (val_loss, val_accuracy) = model.evaluate(validation.features(), validation.labels(), EVAL_CHUNK)?;
            let ctx = RoundContext {
                round: epoch,
                global: &model,
                own_previous_update: None,
                clients: 1,
            };
            let mut attacker = Vec::new();
            for obs in observers.iter_mut() {
                attacker.extend(obs.observe(&ctx)?);
            }
            let global = model.params().clone();
            let cfg = TrainConfig {
                epochs: 1,
                batch_size,
                lr,
            };
            let order = EpochOrder {
                seed: order_seed,
                stream: 0,
                first_epoch: (epoch - 1) as u64,
            };
            let losses = train_epochs(&mut model, &mut optimizer, dataset, &cfg, order)?;
            let (local_val_loss, local_val_accuracy) =
                model.evaluate(validation.features(), validation.labels(), EVAL_CHUNK)?;
            Ok(RoundRecord {
                round: epoch,
                global,
                val_loss,
                val_accuracy,
                clients: vec![ClientRoundStats {
                    id: 0,
                    swapped: *key == epoch && epoch > 1,
                    train_loss: losses[0],
                    val_loss: local_val_loss,
                    val_accuracy: local_val_accuracy,
                }],
                attacker,
            })
        };
        match step() {
            Ok(r) => records.push(r),
            Err(e) => return Err(abort(epoch, records, e)),
        }
    }
    Ok(records)
}
