//! Federated-learning simulator and passive attacker harness.
//!
//! A curious participant in a FedAvg federation tracks the shared model from
//! round to round (its weights, its internal representations on a fixed probe
//! set, and approximate gradients) and measures how much each changes with
//! cosine similarity, Procrustes distance and central moment discrepancy.
//! A label-distribution shift on another client shows up as a break in the
//! trend of these series, often before it is visible in validation loss.
//!
//! - [`nn`]: training core (dense/conv layers, backprop, Adam)
//! - [`data`]: loaders, synthetic data, IID splits, label-shift resampling
//! - [`fl`]: FedAvg orchestration and the centralized baseline
//! - [`attacker`]: information acquisition, influence removal, shift metrics
//! - [`detect`]: trend extrapolation and divergence scoring
//! - [`experiment`]: config-driven runs and telemetry files

pub mod attacker;
pub mod data;
pub mod detect;
pub mod error;
pub mod experiment;
pub mod fl;
pub mod fsutil;
pub mod nn;
pub mod rng;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
