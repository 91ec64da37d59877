//! In-process FedAvg orchestration and the centralized baseline.

mod aggregate;
mod config;
mod sim;

pub use aggregate::fedavg_aggregate;
pub use config::{ExperimentConfig, Seeds};
pub use sim::{
    run_centralized, run_federation, ClientRoundStats, FederationData, FederationParams, RoundContext, RoundObserver,
    RoundRecord, RunAborted,
};
