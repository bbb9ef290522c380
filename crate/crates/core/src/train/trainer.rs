use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use xinet_tensor::Var;

use super::adamw::{AdamW, OptState};
use super::schedule::Schedule;
use crate::data::{mirror_augment, Sample};
use crate::error::{Error, Result};
use crate::metrics::{evaluate, EvalOptions};
use crate::model::{Checkpoint, XiNet};
use crate::nn::Graph;
use crate::reconstruct::ModelReconstructor;

/// What the training loss compares.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossScope {
    /// Plain MSE over every sample.
    #[default]
    FullWaveform,
    /// `(Σ_gap e² + λ Σ_observed e²) / L`; `λ = 1` is plain MSE.
    GapWeighted { lambda: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub schedule: Schedule,
    pub loss_scope: LossScope,
    /// Adds a time-reversed copy of every training sample.
    pub mirror: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 80,
            base_lr: 1e-3,
            weight_decay: 1e-4,
            batch_size: 8,
            seed: 0,
            schedule: Schedule::ConstantThenCosine,
            loss_scope: LossScope::FullWaveform,
            mirror: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::InvalidInput("epochs and batch_size must be at least 1".into()));
        }
        if !(self.base_lr > 0.0 && self.base_lr.is_finite()) {
            return Err(Error::InvalidInput(format!("base_lr must be positive, got {}", self.base_lr)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if let LossScope::GapWeighted { lambda } = self.loss_scope {
            if !(lambda >= 0.0 && lambda.is_finite()) {
                return Err(Error::InvalidInput(format!("gap weighting lambda must be >= 0, got {lambda}")));
            }
        }
        Ok(())
    }

    pub fn optimizer(&self) -> AdamW {
        AdamW {
            weight_decay: self.weight_decay,
            ..AdamW::default()
        }
    }
}

/// One row of the loss history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    /// `None` when there is no validation split.
    pub val_gap_mae: Option<f64>,
}

pub fn history_csv(history: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,lr,train_loss,val_gap_mae\n");
    for r in history {
        let val = r.val_gap_mae.map_or(String::new(), |v| format!("{v:e}"));
        let _ = writeln!(out, "{},{:e},{:e},{}", r.epoch, r.lr, r.train_loss, val);
    }
    out
}

pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    fs::write(path, history_csv(history)).map_err(|e| Error::io(path, e))
}

/// Per-sample loss weights of a batch, or `None` for plain MSE.
fn loss_weights(scope: LossScope, batch: &[&Sample]) -> Option<Vec<f32>> {
    let LossScope::GapWeighted { lambda } = scope else {
        return None;
    };
    Some(
        batch
            .iter()
            .flat_map(|s| (0..s.target.len()).map(move |i| if s.gap.contains(i) { 1.0 } else { lambda as f32 }))
            .collect(),
    )
}

/// Mean squared error of one batch, optionally weighted per sample.
pub fn batch_loss(g: &mut Graph<f32>, model: &XiNet<f32>, batch: &[&Sample], scope: LossScope) -> Result<Var> {
    let l = model.config.input_length;
    let b = batch.len();
    let inputs = batch
        .iter()
        .flat_map(|s| s.input.samples().iter().map(|&v| v as f32))
        .collect();
    let targets = batch
        .iter()
        .flat_map(|s| s.target.samples().iter().map(|&v| v as f32))
        .collect();
    let x = g.tape.constant([b, l, 1], inputs)?;
    let t = g.tape.constant([b, l, 1], targets)?;
    let y = model.forward(g, x)?;
    match loss_weights(scope, batch) {
        None => Ok(g.tape.mse_loss(y, t)?),
        Some(w) => {
            let w = g.tape.constant([b, l, 1], w)?;
            let d = g.tape.sub(y, t)?;
            let sq = g.tape.mul(d, d)?;
            let weighted = g.tape.mul(sq, w)?;
            Ok(g.tape.mean(weighted))
        }
    }
}

/// Model, optimizer state and epoch counter of a run in progress.
pub struct Trainer {
    pub model: XiNet<f32>,
    pub optimizer: OptState<f32>,
    pub epoch: usize,
    pub config: TrainConfig,
    pub history: Vec<EpochRecord>,
}

impl Trainer {
    pub fn new(model: XiNet<f32>, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = OptState::new(&model.params);
        Ok(Self {
            model,
            optimizer,
            epoch: 0,
            config,
            history: Vec::new(),
        })
    }

    /// Continues from a checkpoint's weights, moments and epoch.
    pub fn resume(ckpt: Checkpoint, config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let optimizer = match ckpt.optimizer {
            Some(o) => o,
            None => OptState::new(&ckpt.model.params),
        };
        Ok(Self {
            model: ckpt.model,
            optimizer,
            epoch: ckpt.epoch,
            config,
            history: Vec::new(),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(self.model.clone(), Some(self.optimizer.clone()), self.epoch)
    }

    /// Shuffle stream for `epoch`, independent of how the run was split
    /// across resumes.
    fn epoch_rng(&self, epoch: usize) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed);
        rng.set_stream(epoch as u64);
        rng
    }

    /// One pass over `train`; returns the mean batch loss.
    pub fn train_epoch(&mut self, train: &[Sample]) -> Result<f64> {
        if train.is_empty() {
            return Err(Error::InvalidInput("training set is empty".into()));
        }
        let epoch = self.epoch;
        let lr = self.config.schedule.lr(epoch, self.config.epochs, self.config.base_lr)?;
        let opt = self.config.optimizer();
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut self.epoch_rng(epoch));
        let mut total = 0.0;
        let mut batches = 0usize;
        for (bi, idx) in order.chunks(self.config.batch_size).enumerate() {
            let batch: Vec<&Sample> = idx.iter().map(|&i| &train[i]).collect();
            let mut g = Graph::new(&self.model.params);
            let loss = batch_loss(&mut g, &self.model, &batch, self.config.loss_scope)?;
            let value = f64::from(g.tape.value(loss)[0]);
            if !value.is_finite() {
                return Err(Error::Numeric(format!(
                    "non-finite loss {value} at epoch {epoch}, batch {bi} (parameter norm {:.6e})",
                    self.model.params.norm()
                )));
            }
            let grads = g.backward(loss)?;
            self.model.params.zero_grad();
            self.model.params.accumulate(&grads)?;
            opt.step(&mut self.model.params, &mut self.optimizer, lr)?;
            total += value;
            batches += 1;
        }
        if !self.model.params.all_finite() {
            return Err(Error::Numeric(format!(
                "non-finite parameters after epoch {epoch} (parameter norm {:.6e})",
                self.model.params.norm()
            )));
        }
        self.epoch += 1;
        Ok(total / batches as f64)
    }

    /// Trains up to `config.epochs`, calling `on_epoch` after each epoch.
    pub fn run(
        &mut self,
        train: &[Sample],
        val: &[Sample],
        mut on_epoch: impl FnMut(&EpochRecord),
    ) -> Result<&[EpochRecord]> {
        let data = if self.config.mirror {
            mirror_augment(train)
        } else {
            train.to_vec()
        };
        while self.epoch < self.config.epochs {
            let epoch = self.epoch;
            let lr = self.config.schedule.lr(epoch, self.config.epochs, self.config.base_lr)?;
            let train_loss = self.train_epoch(&data)?;
            let val_gap_mae = if val.is_empty() {
                None
            } else {
                let r = ModelReconstructor::new(self.model.clone());
                Some(evaluate(val, &r, EvalOptions::default())?.mae_mean)
            };
            let rec = EpochRecord {
                epoch,
                lr,
                train_loss,
                val_gap_mae,
            };
            on_epoch(&rec);
            self.history.push(rec);
        }
        Ok(&self.history)
    }
}

/// Builds a fresh model and trains it to completion.
pub fn train(
    model: XiNet<f32>,
    train: &[Sample],
    val: &[Sample],
    config: &TrainConfig,
) -> Result<(Checkpoint, Vec<EpochRecord>)> {
    let mut t = Trainer::new(model, config.clone())?;
    t.run(train, val, |_| {})?;
    Ok((t.checkpoint(), t.history))
}
