//! Training loops, resumable state and whole-image inference.

mod config;
mod inference;
mod state;
mod train;

pub use config::{lr_schedule, TrainConfig};
pub use inference::{despeckle, DEFAULT_TILE};
pub use state::{decode_state, encode_state, load_state, save_state, TrainState, STATE_MAGIC, STATE_VERSION};
pub use train::{
    n2n_loss, n2n_loss_on_tape, train, EpochRecord, IterationRecord, TrainLog, Trainer, ValidationSet,
};
