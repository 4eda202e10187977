//! Mini-batch Adagrad training with seeded per-epoch shuffling.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::RankingExample;
use crate::model::Model;
use crate::nn::Adagrad;

#[derive(Copy, Clone, Debug, PartialEq)]
pub struct TrainSettings {
    pub learning_rate: f64,
    pub lambda: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            learning_rate: 0.1,
            lambda: 1.0,
            batch_size: 100,
            seed: 7,
        }
    }
}

/// Visiting order of `n` examples in `epoch` (0-based). Depends only on
/// `(seed, epoch)`.
pub fn epoch_order(seed: u64, epoch: usize, n: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1 + epoch as u64);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    order
}

#[derive(Clone, Debug)]
pub struct Trainer {
    model: Model,
    optimizer: Adagrad,
    settings: TrainSettings,
    epoch: usize,
}

impl Trainer {
    pub fn new(model: Model, settings: TrainSettings) -> Result<Self> {
        let optimizer = Adagrad::new(model.store(), settings.learning_rate);
        Self::resume(model, optimizer, 0, settings)
    }

    /// Continues after `epoch` completed epochs with saved optimizer state.
    pub fn resume(model: Model, optimizer: Adagrad, epoch: usize, settings: TrainSettings) -> Result<Self> {
        if settings.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if !(settings.lambda.is_finite() && settings.lambda >= 0.0) {
            return Err(Error::config("lambda must be finite and ≥ 0"));
        }
        Ok(Trainer {
            model,
            optimizer,
            settings,
            epoch,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn optimizer(&self) -> &Adagrad {
        &self.optimizer
    }

    pub fn settings(&self) -> &TrainSettings {
        &self.settings
    }

    /// Completed epochs.
    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn into_model(self) -> Model {
        self.model
    }

    /// One pass over `train` in seeded order. Returns the mean example loss.
    pub fn train_epoch(&mut self, train: &[RankingExample]) -> Result<f64> {
        if train.is_empty() {
            return Err(Error::validation("training set is empty"));
        }
        let order = epoch_order(self.settings.seed, self.epoch, train.len());
        let mut total = 0.0;
        for chunk in order.chunks(self.settings.batch_size) {
            let step = self.optimizer.steps();
            let (loss, grads) = self
                .model
                .batch_gradients(chunk.iter().map(|&i| &train[i]), self.settings.lambda)
                .map_err(|e| Error::Training {
                    step,
                    message: format!("epoch {}: {e}", self.epoch + 1),
                })?;
            if !loss.total.is_finite() {
                return Err(Error::Training {
                    step,
                    message: format!("epoch {}: non-finite loss {}", self.epoch + 1, loss.total),
                });
            }
            total += loss.total * chunk.len() as f64;
            self.optimizer
                .step(self.model.store_mut(), &grads)
                .map_err(|e| match e {
                    Error::Training { step, message } => Error::Training {
                        step,
                        message: format!("epoch {}: {message}", self.epoch + 1),
                    },
                    other => other,
                })?;
        }
        self.epoch += 1;
        Ok(total / train.len() as f64)
    }
}

/// One row per completed epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_metric: f64,
    pub test_metric: Option<f64>,
    /// Mean attention weights over the test set (SepAttn only).
    pub mean_alpha_sparse: Option<f64>,
    pub mean_alpha_dense: Option<f64>,
    /// Kept out of [`TrainingLog::to_csv`] so that file stays deterministic.
    pub wall_seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl TrainingLog {
    pub const CSV_HEADER: &'static str =
        "epoch,train_loss,train_metric,test_metric,mean_alpha_sparse,mean_alpha_dense";

    pub fn push(&mut self, record: EpochRecord) {
        self.records.push(record);
    }

    pub fn last(&self) -> Option<&EpochRecord> {
        self.records.last()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.records {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                r.epoch,
                r.train_loss,
                r.train_metric,
                opt(r.test_metric),
                opt(r.mean_alpha_sparse),
                opt(r.mean_alpha_dense)
            );
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("epoch,wall_seconds\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{}", r.epoch, r.wall_seconds);
        }
        out
    }

    /// Parses the output of [`TrainingLog::to_csv`]; wall times are zero.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(Self::CSV_HEADER) {
            return Err(Error::data("training log header mismatch"));
        }
        let num = |s: &str| -> Result<Option<f64>> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse()
                    .map(Some)
                    .map_err(|_| Error::data(format!("bad number {s:?} in training log")))
            }
        };
        let mut log = TrainingLog::default();
        for line in lines {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(Error::data(format!("training log row {line:?} has {} fields", f.len())));
            }
            let epoch = f[0]
                .parse()
                .map_err(|_| Error::data(format!("bad epoch {:?}", f[0])))?;
            let required = |s: &str| num(s)?.ok_or_else(|| Error::data("missing training log value"));
            log.push(EpochRecord {
                epoch,
                train_loss: required(f[1])?,
                train_metric: required(f[2])?,
                test_metric: num(f[3])?,
                mean_alpha_sparse: num(f[4])?,
                mean_alpha_dense: num(f[5])?,
                wall_seconds: 0.0,
            });
        }
        Ok(log)
    }
}
