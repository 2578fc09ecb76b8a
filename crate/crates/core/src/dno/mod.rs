//! Deep operator network: branch and trunk dense nets whose outputs are
//! combined per time sample, trained with hand-written gradients and Adam.

mod adam;
mod dataset;
mod model;
mod net;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use dataset::{Dataset, DatasetManifest, SplitDataset};
pub use model::{mse_loss, Architecture, CombineMode, DnoModel, Grads, ModelSpec, NormStats};
pub use net::{DenseNet, NetFile, NetGrads};
pub use train::{train, train_pointwise, train_sequence, LossRecord, TrainConfig, TrainMode, TrainReport};
