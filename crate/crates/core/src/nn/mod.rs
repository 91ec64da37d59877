//! Minimal neural-network training core: dense, convolutional, pooling and
//! flatten layers, softmax cross-entropy, manual backpropagation and Adam.

mod adam;
pub mod arch;
mod checkpoint;
mod layer;
mod model;
mod params;
mod train;

pub use adam::{adam_step, Adam, AdamConfig};
pub use checkpoint::{Checkpoint, ModelState, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use layer::{Activation, LayerSpec};
pub use model::{random_params, softmax_rows, ForwardOutput, Model};
pub use params::{LayoutEntry, ParamLayout, ParamVector};
pub use train::{epoch_permutation, train_epochs, EpochOrder, TrainConfig};
