//! Mini-batch Adam training with a step learning-rate schedule, best-model
//! selection on validation MSE, checkpointing and a CSV log.

mod log;

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::PatchRecord;
use crate::error::{Error, Result};
use crate::model::checkpoint::{Checkpoint, TrainingState};
use crate::model::{adapt_input, bind_params, build, forward_graph, forward_mode, ModelConfig, ModelParams, ViewSet};
use crate::tensor::{Adam, AdamConfig, Tape, Tensor4};

pub use log::{read_log, TrainLog, TrainLogEntry};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub initial_lr: f64,
    /// Epochs between learning-rate halvings.
    pub lr_halving_period: u64,
    pub batch_size: usize,
    pub max_epochs: u64,
    pub seed: u64,
    /// Write `last.ckpt` every this many epochs.
    pub checkpoint_every: u64,
    /// Record zero instead of wall time in the log so repeated runs produce
    /// identical files.
    pub deterministic_log: bool,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            initial_lr: 2e-5,
            lr_halving_period: 60,
            batch_size: 5,
            max_epochs: 200,
            seed: 0,
            checkpoint_every: 10,
            deterministic_log: false,
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(Error::Config(format!("initial_lr must be positive, got {}", self.initial_lr)));
        }
        if self.lr_halving_period == 0 || self.batch_size == 0 || self.checkpoint_every == 0 {
            return Err(Error::Config(
                "lr_halving_period, batch_size and checkpoint_every must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// `initial_lr · 0.5^floor(epoch / period)`.
pub fn lr_schedule(epoch: u64, cfg: &TrainConfig) -> f64 {
    let halvings = epoch / cfg.lr_halving_period;
    cfg.initial_lr * 0.5f64.powi(halvings.min(i32::MAX as u64) as i32)
}

/// Input/target pairs, each `[1, h, w, c]`.
#[derive(Debug, Clone, Default)]
pub struct TrainingSet {
    pub inputs: Vec<Tensor4<f32>>,
    pub targets: Vec<Tensor4<f32>>,
}

impl TrainingSet {
    pub fn from_patches(patches: &[PatchRecord], model: &ModelConfig) -> Result<Self> {
        let mut set = Self::default();
        for p in patches {
            let views = ViewSet {
                left: Some(&p.left),
                right: Some(&p.right),
                combined: Some(&p.combined),
            };
            set.inputs.push(adapt_input(views, model.input_variant)?);
            set.targets.push(p.sharp.to_rgb()?.to_tensor());
        }
        Ok(set)
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    fn batch(&self, idx: &[usize]) -> Result<(Tensor4<f32>, Tensor4<f32>)> {
        let x: Vec<&Tensor4<f32>> = idx.iter().map(|&i| &self.inputs[i]).collect();
        let y: Vec<&Tensor4<f32>> = idx.iter().map(|&i| &self.targets[i]).collect();
        Ok((Tensor4::stack(&x)?, Tensor4::stack(&y)?))
    }
}

fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mean squared error of the network over `set`, dropout disabled.
pub fn evaluate_mse(params: &ModelParams<f32>, set: &TrainingSet, batch_size: usize) -> Result<f64> {
    if set.is_empty() {
        return Err(Error::Data("cannot evaluate an empty set".into()));
    }
    let idx: Vec<usize> = (0..set.len()).collect();
    let (mut sum, mut count) = (0.0f64, 0usize);
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, y) = set.batch(chunk)?;
        let out = forward_mode(params, &x, false, 0)?;
        for (p, t) in out.data().iter().zip(y.data()) {
            let d = (*p - *t) as f64;
            sum += d * d;
        }
        count += y.len();
    }
    Ok(sum / count as f64)
}

/// Parameters plus optimiser state; one [`Trainer::step`] per mini-batch.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub config: TrainConfig,
    pub params: ModelParams<f32>,
    pub optimizer: Adam<f32>,
    pub state: TrainingState,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let params = build::<f32>(&config.model, config.seed)?;
        Ok(Self::with_params(config, params))
    }

    pub fn with_params(config: TrainConfig, params: ModelParams<f32>) -> Self {
        let optimizer = Adam::new(AdamConfig::default(), params.tensors().iter().map(|(_, t)| t));
        Self {
            config,
            params,
            optimizer,
            state: TrainingState::default(),
        }
    }

    /// Restores parameters, optimiser moments and counters from a checkpoint.
    pub fn resume(config: TrainConfig, ck: Checkpoint) -> Result<Self> {
        config.validate()?;
        if ck.params.config.param_shapes() != config.model.param_shapes() {
            return Err(Error::Config(
                "shape mismatch: checkpoint model differs from the configured model".into(),
            ));
        }
        let mut t = Self::with_params(config, ck.params);
        if let Some(opt) = ck.optimizer {
            t.optimizer = opt;
        }
        t.state = ck.state;
        Ok(t)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            params: self.params.clone(),
            state: self.state,
            optimizer: Some(self.optimizer.clone()),
        }
    }

    /// Forward, MSE, backward and one Adam update on a batch. Returns the
    /// batch loss. A non-finite loss leaves the parameters untouched.
    pub fn step(&mut self, inputs: &Tensor4<f32>, targets: &Tensor4<f32>, lr: f64) -> Result<f64> {
        let seed = mix(self.config.seed, self.state.step + 1);
        let (loss, grads) = {
            let mut tape = Tape::new();
            let bound = bind_params(&mut tape, &self.params);
            let x = tape.constant(inputs.clone());
            let out = forward_graph(&mut tape, &self.params, &bound, x, inputs.shape(), true, seed)?;
            let t = tape.constant(targets.clone());
            let loss_var = tape.mse_loss(out, t)?;
            let loss = tape.value(loss_var).data()[0] as f64;
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch: self.state.epoch + 1,
                    step: self.state.step + 1,
                    last_good: None,
                });
            }
            let mut g = tape.backward(loss_var)?;
            let grads: Vec<Tensor4<f32>> = bound
                .iter()
                .map(|&v| g.take(v).ok_or_else(|| Error::Config("parameter received no gradient".into())))
                .collect::<Result<_>>()?;
            (loss, grads)
        };
        self.optimizer.step(self.params.iter_mut(), &grads, lr)?;
        self.state.step += 1;
        Ok(loss)
    }

    /// Runs one epoch over `train` in a seeded random order. Returns the
    /// mean training loss.
    pub fn run_epoch(&mut self, train: &TrainingSet) -> Result<f64> {
        if train.is_empty() {
            return Err(Error::Data("empty training set".into()));
        }
        let epoch = self.state.epoch;
        let lr = lr_schedule(epoch, &self.config);
        let mut order: Vec<usize> = (0..train.len()).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(mix(self.config.seed, 1 << 40 | epoch)));
        let (mut sum, mut n) = (0.0, 0usize);
        for chunk in order.chunks(self.config.batch_size) {
            let (x, y) = train.batch(chunk)?;
            sum += self.step(&x, &y, lr)? * chunk.len() as f64;
            n += chunk.len();
        }
        self.state.epoch += 1;
        Ok(sum / n as f64)
    }
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters with the lowest validation MSE.
    pub best: ModelParams<f32>,
    pub best_epoch: u64,
    pub best_val: f64,
    pub last: Trainer,
    pub log: Vec<TrainLogEntry>,
    pub best_path: PathBuf,
}

/// Trains until `max_epochs`, writing `last.ckpt`, `best.ckpt` and
/// `train_log.csv` under `out_dir`. With an empty validation set the
/// training set is scored instead, in inference mode. When `resume` is
/// given, training continues from it and the log is trimmed to its epoch
/// count.
pub fn train(
    cfg: &TrainConfig,
    train_set: &TrainingSet,
    val_set: &TrainingSet,
    out_dir: &Path,
    resume: Option<Checkpoint>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(Error::Data("training set is empty".into()));
    }
    for t in &train_set.inputs {
        cfg.model.check_input(t.height(), t.width(), t.channels())?;
    }
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let last_path = out_dir.join("last.ckpt");
    let best_path = out_dir.join("best.ckpt");
    let log_path = out_dir.join("train_log.csv");

    let mut trainer = match resume {
        Some(ck) => Trainer::resume(cfg.clone(), ck)?,
        None => Trainer::new(cfg.clone())?,
    };
    let mut log = TrainLog::open(&log_path, trainer.state.epoch)?;
    let mut best = if best_path.exists() && trainer.state.best_val.is_some() {
        Checkpoint::load(&best_path)?.params
    } else {
        trainer.params.clone()
    };
    let mut last_good: Option<PathBuf> = last_path.exists().then(|| last_path.clone());
    let started = Instant::now();

    while trainer.state.epoch < cfg.max_epochs {
        let lr = lr_schedule(trainer.state.epoch, cfg);
        let train_mse = match trainer.run_epoch(train_set) {
            Err(Error::NonFiniteLoss { epoch, step, .. }) => {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    step,
                    last_good: last_good.or_else(|| best_path.exists().then(|| best_path.clone())),
                })
            }
            other => other?,
        };
        let val_mse = evaluate_mse(&trainer.params, if val_set.is_empty() { train_set } else { val_set }, cfg.batch_size)?;
        let epoch = trainer.state.epoch;
        let improved = trainer.state.best_val.is_none_or(|b| val_mse < b);
        if improved {
            trainer.state.best_val = Some(val_mse);
            trainer.state.best_epoch = Some(epoch);
            best = trainer.params.clone();
            trainer.checkpoint().save(&best_path)?;
        }
        if epoch % cfg.checkpoint_every == 0 || epoch == cfg.max_epochs {
            trainer.checkpoint().save(&last_path)?;
            last_good = Some(last_path.clone());
        }
        let seconds = if cfg.deterministic_log {
            0.0
        } else {
            started.elapsed().as_secs_f64()
        };
        log.append(TrainLogEntry {
            epoch,
            step: trainer.state.step,
            train_mse,
            val_mse,
            lr,
            seconds,
        })?;
    }
    Ok(TrainOutcome {
        best,
        best_epoch: trainer.state.best_epoch.unwrap_or(0),
        best_val: trainer.state.best_val.unwrap_or(f64::NAN),
        last: trainer,
        log: log.entries,
        best_path,
    })
}
