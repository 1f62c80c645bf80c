//! Feedforward case/control classifier over selected SNP dosages.

pub mod io;
pub mod network;
pub mod train;

pub use io::{load_model, save_model, FORMAT_VERSION};
pub use network::{Activation, Dropout, Gradients, Layer, Loss, NetworkModel, RateSchedule};
pub use train::{
    predict_proba, split_indices, train, Dataset, EarlyStopping, Preset, Split, StopDecision, TrainConfig, TrainLog,
    TrainOutcome, PRESETS,
};
