//! Deterministic training loops, checkpoints and loss logs.

mod checkpoint;
mod data;

use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusError, Split};
use crate::models::{LossValues, LossWeights, Model, ModelConfig, ModelError, ModelKind, Scale};
use crate::nn::{AdamConfig, AdamState, NnError, Tensor};
use crate::rng::{self, RngState};

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use data::{Dataset, Example};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("split {0} has no examples")]
    EmptySplit(Split),
    #[error("non-finite loss in epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        detail: String,
    },
    #[error("checkpoint holds a {checkpoint} model but the config asks for {config}")]
    KindMismatch { checkpoint: ModelKind, config: ModelKind },
    #[error("unsupported checkpoint version {found} (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("malformed checkpoint: {0}")]
    Parse(String),
    #[error("{path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("invalid training config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

impl TrainError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        Self::Io {
            path: path.to_path_buf(),
            msg: e.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub scale: Scale,
    /// Used by the joint model only; standalone models train on their own
    /// term.
    pub weights: LossWeights,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
    pub threads: usize,
    /// Write a checkpoint every this many epochs (0 disables).
    pub checkpoint_every: usize,
    /// Validation examples evaluated per epoch.
    pub val_limit: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            kind: ModelKind::Joint,
            scale: Scale::Desk,
            weights: LossWeights::default(),
            epochs: 10,
            batch_size: 4,
            lr: 1e-4,
            seed: 0,
            threads: 1,
            checkpoint_every: 0,
            val_limit: 32,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.epochs == 0 {
            return Err(TrainError::Invalid("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(TrainError::Invalid("batch size must be at least 1".into()));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(TrainError::Invalid(format!("learning rate {} is not a finite non-negative number", self.lr)));
        }
        if self.threads == 0 {
            return Err(TrainError::Invalid("threads must be at least 1".into()));
        }
        self.weights.validate()?;
        Ok(())
    }

    /// Preset architecture for `kind` and `scale`, carrying the loss weights.
    pub fn model_config(&self) -> ModelConfig {
        let mut c = ModelConfig::preset(self.kind, self.scale);
        if let ModelConfig::Joint(j) = &mut c {
            j.weights = self.weights;
        }
        c
    }
}

/// One loss-log row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub epoch: usize,
    pub split: Split,
    pub loss: LossValues,
}

pub const LOG_HEADER: &str = "epoch,split,total,l_dry,l_rir,l_rec";

impl LogRow {
    pub fn csv(&self) -> String {
        let l = &self.loss;
        format!(
            "{},{},{:e},{:e},{:e},{:e}",
            self.epoch, self.split, l.total, l.l_dry, l.l_rir, l.l_rec
        )
    }
}

pub fn write_log(path: &Path, rows: &[LogRow]) -> Result<(), TrainError> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path).map_err(|e| TrainError::io(path, e))?);
    let mut put = |s: &str| writeln!(f, "{s}").map_err(|e| TrainError::io(path, e));
    put(LOG_HEADER)?;
    for r in rows {
        put(&r.csv())?;
    }
    drop(put);
    f.flush().map_err(|e| TrainError::io(path, e))
}

/// Training state: model, optimizer, shuffling stream and log so far.
pub struct Trainer {
    config: TrainConfig,
    model: Model,
    adam: AdamState,
    rng: ChaCha8Rng,
    epoch: usize,
    log: Vec<LogRow>,
    pool: rayon::ThreadPool,
}

fn build_pool(threads: usize) -> Result<rayon::ThreadPool, TrainError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| TrainError::Invalid(format!("thread pool: {e}")))
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let mut init = rng::stream(config.seed, "init");
        let model = Model::new(config.model_config(), &mut init)?;
        let adam = AdamState::new(AdamConfig::with_lr(config.lr), model.params.tensors());
        Ok(Self {
            rng: rng::stream(config.seed, "train"),
            pool: build_pool(config.threads)?,
            config,
            model,
            adam,
            epoch: 0,
            log: Vec::new(),
        })
    }

    /// Restores parameters, optimizer moments, epoch counter and shuffling
    /// stream. The learning rate and batch settings come from `config`.
    pub fn from_checkpoint(ckpt: Checkpoint, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let kind = ckpt.model.kind();
        if kind != config.kind {
            return Err(TrainError::KindMismatch {
                checkpoint: kind,
                config: config.kind,
            });
        }
        let mut adam = ckpt.adam;
        adam.config.lr = config.lr;
        Ok(Self {
            rng: ckpt.rng.restore(),
            pool: build_pool(config.threads)?,
            model: Model {
                config: ckpt.model,
                params: ckpt.params,
            },
            adam,
            epoch: ckpt.epoch,
            log: Vec::new(),
            config,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn log(&self) -> &[LogRow] {
        &self.log
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            model: self.model.config.clone(),
            params: self.model.params.to_f32_precision(),
            adam: self.adam.clone(),
            epoch: self.epoch,
            rng: RngState::capture(&self.rng),
            train: self.config.clone(),
        }
    }

    /// Losses and gradients for `indices`, in order.
    fn batch_grads(&self, examples: &[Example], indices: &[usize]) -> Vec<Result<(LossValues, Vec<Tensor>), ModelError>> {
        let model = &self.model;
        self.pool.install(|| {
            indices
                .par_iter()
                .map(|&i| model.loss_and_grads(&examples[i].input, &examples[i].targets))
                .collect()
        })
    }

    /// One pass over the training split, then validation. Returns the rows
    /// appended to the log.
    pub fn run_epoch(&mut self, data: &Dataset) -> Result<Vec<LogRow>, TrainError> {
        if data.train.is_empty() {
            return Err(TrainError::EmptySplit(Split::Train));
        }
        self.epoch += 1;
        let n = data.train.len();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut self.rng);

        let mut per_example = vec![LossValues::default(); n];
        for (b, batch) in order.chunks(self.config.batch_size).enumerate() {
            let results = self.batch_grads(&data.train, batch);
            let mut sum: Option<Vec<Tensor>> = None;
            let mut values = Vec::with_capacity(batch.len());
            for r in results {
                let (v, g) = r?;
                values.push(v);
                match &mut sum {
                    None => sum = Some(g),
                    Some(s) => s.iter_mut().zip(&g).for_each(|(a, b)| a.add_assign(b)),
                }
            }
            let finite_grads = sum.as_ref().is_some_and(|s| s.iter().all(Tensor::all_finite));
            if !values.iter().all(LossValues::all_finite) || !finite_grads {
                let detail = batch
                    .iter()
                    .zip(&values)
                    .map(|(i, v)| format!("example {i}: {v:?}"))
                    .collect::<Vec<_>>()
                    .join("; ");
                return Err(TrainError::NonFiniteLoss {
                    epoch: self.epoch,
                    batch: b,
                    detail: if finite_grads { detail } else { format!("{detail}; non-finite gradient") },
                });
            }
            let mut grads = sum.expect("non-empty batch");
            let inv = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| g.scale_assign(inv));
            for (&i, v) in batch.iter().zip(values) {
                per_example[i] = v;
            }
            let grad_refs: Vec<&Tensor> = grads.iter().collect();
            let mut params: Vec<&mut Tensor> = self.model.params.tensors_mut().iter_mut().collect();
            self.adam.step(&mut params, &grad_refs)?;
        }

        let mut train = LossValues::default();
        for v in &per_example {
            train.add_scaled(v, 1.0 / n as f64);
        }
        let mut rows = vec![LogRow {
            epoch: self.epoch,
            split: Split::Train,
            loss: train,
        }];
        if let Some(val) = self.validate(data)? {
            rows.push(LogRow {
                epoch: self.epoch,
                split: Split::Val,
                loss: val,
            });
        }
        self.log.extend_from_slice(&rows);
        Ok(rows)
    }

    fn validate(&self, data: &Dataset) -> Result<Option<LossValues>, TrainError> {
        let k = data.val.len().min(self.config.val_limit);
        if k == 0 {
            return Ok(None);
        }
        let model = &self.model;
        let values: Vec<Result<LossValues, ModelError>> = self.pool.install(|| {
            data.val[..k]
                .par_iter()
                .map(|e| model.evaluate_loss(&e.input, &e.targets))
                .collect()
        });
        let mut mean = LossValues::default();
        for v in values {
            mean.add_scaled(&v?, 1.0 / k as f64);
        }
        if !mean.all_finite() {
            return Err(TrainError::NonFiniteLoss {
                epoch: self.epoch,
                batch: 0,
                detail: format!("validation loss {mean:?}"),
            });
        }
        Ok(Some(mean))
    }

    /// Runs `config.epochs` epochs, saving a checkpoint into `ckpt_dir`
    /// every `checkpoint_every` epochs when a directory is given.
    pub fn run(&mut self, data: &Dataset, ckpt_dir: Option<&Path>) -> Result<(), TrainError> {
        for _ in 0..self.config.epochs {
            let rows = self.run_epoch(data)?;
            for r in &rows {
                log::info!("{}", r.csv());
            }
            let every = self.config.checkpoint_every;
            if let (Some(dir), true) = (ckpt_dir, every > 0 && self.epoch % every == 0) {
                save_checkpoint(&self.checkpoint(), &dir.join(format!("epoch_{:04}.ckpt", self.epoch)))?;
            }
        }
        Ok(())
    }
}

/// Final state of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub log: Vec<LogRow>,
}

/// Trains a fresh model for `config.epochs` epochs.
pub fn train(config: &TrainConfig, data: &Dataset) -> Result<TrainOutcome, TrainError> {
    let mut t = Trainer::new(config.clone())?;
    t.run(data, None)?;
    Ok(TrainOutcome {
        checkpoint: t.checkpoint(),
        log: t.log,
    })
}

/// Continues from `ckpt` for a further `config.epochs` epochs.
pub fn resume(ckpt: Checkpoint, config: &TrainConfig, data: &Dataset) -> Result<TrainOutcome, TrainError> {
    let mut t = Trainer::from_checkpoint(ckpt, config.clone())?;
    t.run(data, None)?;
    Ok(TrainOutcome {
        checkpoint: t.checkpoint(),
        log: t.log,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(epochs: usize, lr: f64) -> TrainConfig {
        TrainConfig {
            kind: ModelKind::Joint,
            scale: Scale::Tiny,
            epochs,
            batch_size: 2,
            lr,
            seed: 4,
            ..Default::default()
        }
    }

    #[test]
    fn config_validation() {
        assert!(tiny(0, 1e-3).validate().is_err());
        assert!(tiny(1, -1.0).validate().is_err());
        assert!(tiny(1, f64::NAN).validate().is_err());
        let mut c = tiny(1, 1e-3);
        c.batch_size = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn same_seed_same_log_and_zero_lr_is_flat() {
        let data = Dataset::synthetic_tiny(5, 2, 1);
        let a = train(&tiny(4, 1e-3), &data).unwrap();
        let b = train(&tiny(4, 1e-3), &data).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.checkpoint, b.checkpoint);

        let flat = train(&tiny(4, 0.0), &data).unwrap();
        let train_rows: Vec<_> = flat.log.iter().filter(|r| r.split == Split::Train).collect();
        assert!(train_rows.iter().all(|r| r.loss == train_rows[0].loss));
    }

    #[test]
    fn split_run_matches_continuous_run() {
        let data = Dataset::synthetic_tiny(6, 2, 2);
        let full = train(&tiny(10, 1e-3), &data).unwrap();
        let first = train(&tiny(5, 1e-3), &data).unwrap();
        let rest = resume(first.checkpoint, &tiny(5, 1e-3), &data).unwrap();
        let joined: Vec<_> = first.log.iter().chain(&rest.log).collect();
        assert_eq!(joined.len(), full.log.len());
        for (a, b) in joined.iter().zip(&full.log) {
            assert_eq!((a.epoch, a.split), (b.epoch, b.split));
            let d = [
                a.loss.total - b.loss.total,
                a.loss.l_dry - b.loss.l_dry,
                a.loss.l_rir - b.loss.l_rir,
                a.loss.l_rec - b.loss.l_rec,
            ];
            assert!(d.iter().all(|x| x.abs() <= 1e-6 * b.loss.total.max(1.0)), "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn resume_rejects_other_kind() {
        let data = Dataset::synthetic_tiny(2, 0, 3);
        let out = train(&tiny(1, 1e-3), &data).unwrap();
        let mut other = tiny(1, 1e-3);
        other.kind = ModelKind::Rir;
        assert!(matches!(
            resume(out.checkpoint, &other, &data),
            Err(TrainError::KindMismatch { .. })
        ));
    }

    #[test]
    fn non_finite_input_aborts() {
        let mut data = Dataset::synthetic_tiny(2, 0, 3);
        data.train[1].input.data_mut()[0] = f64::NAN;
        let mut c = tiny(1, 1e-3);
        c.batch_size = 1;
        assert!(matches!(train(&c, &data), Err(TrainError::NonFiniteLoss { .. })));
    }

    #[test]
    fn empty_train_split() {
        let data = Dataset::default();
        assert!(matches!(train(&tiny(1, 1e-3), &data), Err(TrainError::EmptySplit(Split::Train))));
    }

    #[test]
    fn log_csv_format() {
        let row = LogRow {
            epoch: 3,
            split: Split::Val,
            loss: LossValues {
                total: 1.5,
                l_dry: 0.5,
                l_rir: 0.25,
                l_rec: 0.75,
            },
        };
        assert_eq!(row.csv(), "3,val,1.5e0,5e-1,2.5e-1,7.5e-1");
    }
}
