//! Optimizer, learning-rate schedules and the training loop.

mod adamw;
mod schedule;
mod trainer;

pub use adamw::{AdamW, OptState};
pub use schedule::{lr_at, Schedule, FINAL_LR_RATIO};
pub use trainer::{
    batch_loss, history_csv, train, write_history_csv, EpochRecord, LossScope, TrainConfig, Trainer,
};
