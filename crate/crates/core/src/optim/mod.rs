//! Adam and the mini-batch training loop with early stopping.

mod adam;
mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use train::{
    train, train_with_validation, write_history, EarlyStopping, EpochRecord, EpochShuffler, TrainReport, TrainSettings,
    Trainable, Verdict,
};
