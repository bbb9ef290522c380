use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ratio of the final to the initial learning rate after decay.
pub const FINAL_LR_RATIO: f64 = 0.01;

/// Learning-rate policy over epochs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// Base rate for the first half, then cosine decay to 1% of it.
    #[default]
    ConstantThenCosine,
    Constant,
}

impl Schedule {
    pub fn lr(self, epoch: usize, total: usize, base_lr: f64) -> Result<f64> {
        if epoch >= total {
            return Err(Error::InvalidInput(format!("epoch {epoch} outside 0..{total}")));
        }
        Ok(match self {
            Schedule::Constant => base_lr,
            Schedule::ConstantThenCosine => {
                let half = total.div_ceil(2);
                if epoch < half {
                    base_lr
                } else {
                    let progress = (epoch - half + 1) as f64 / (total - half) as f64;
                    let floor = base_lr * FINAL_LR_RATIO;
                    floor + 0.5 * (base_lr - floor) * (1.0 + (std::f64::consts::PI * progress).cos())
                }
            }
        })
    }
}

/// Default schedule: constant for the first half, cosine over the second.
pub fn lr_at(epoch: usize, total: usize, base_lr: f64) -> Result<f64> {
    Schedule::ConstantThenCosine.lr(epoch, total, base_lr)
}
