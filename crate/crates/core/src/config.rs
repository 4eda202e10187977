//! Run configuration as a flat `key = value` text file.
//!
//! Blank lines and lines starting with `#` are ignored. Every key can also be
//! set programmatically through [`RunConfig::set`], which is what command-line
//! overrides use. Optional paths and lists are written as empty values.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::features::Mode;
use crate::model::{ModelConfig, ModelKind};
use crate::nn::Activation;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub model: ModelKind,
    pub mode: Mode,
    pub list_size: usize,
    /// Rows of each embedding table, padding row included.
    pub vocab_size: usize,
    pub embedding_dim: usize,
    pub dense_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub use_char_ngrams: bool,
    pub share_query_embeddings: bool,
    pub train_embeddings: bool,
    /// Standardize dense features with statistics of the training split.
    pub normalize_dense: bool,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub lambda: f64,
    pub seed: u64,
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Synthetic sidecar whose token table initializes every embedding.
    pub embeddings: Option<PathBuf>,
    /// Checkpoint to resume from (train) or to score (evaluate).
    pub checkpoint: Option<PathBuf>,
    pub output_dir: Option<PathBuf>,
    /// Per-position propensity weights for WMRR/WARP; uniform when unset.
    pub propensity: Option<Vec<f64>>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::synthetic(ModelKind::SepAttn)
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::config(format!("invalid value {value:?} for {key}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

fn join<T: ToString>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl RunConfig {
    pub const KEYS: [&'static str; 23] = [
        "model",
        "mode",
        "list_size",
        "vocab_size",
        "embedding_dim",
        "dense_dim",
        "hidden",
        "activation",
        "use_char_ngrams",
        "share_query_embeddings",
        "train_embeddings",
        "normalize_dense",
        "learning_rate",
        "batch_size",
        "epochs",
        "lambda",
        "seed",
        "train",
        "test",
        "embeddings",
        "checkpoint",
        "output_dir",
        "propensity",
    ];

    /// Binary classification on single-token synthetic data.
    pub fn synthetic(model: ModelKind) -> Self {
        let m = ModelConfig::synthetic(model, 51);
        RunConfig::from_model(m, 20)
    }

    /// Ranking lists of 6 with text features.
    pub fn email(model: ModelKind) -> Self {
        let m = ModelConfig::email(model, 1 << 16, 8);
        let mut cfg = RunConfig::from_model(m, 10);
        cfg.normalize_dense = true;
        cfg
    }

    fn from_model(m: ModelConfig, epochs: usize) -> Self {
        RunConfig {
            model: m.kind,
            mode: m.mode,
            list_size: m.list_size,
            vocab_size: m.vocab_size,
            embedding_dim: m.embedding_dim,
            dense_dim: m.dense_dim,
            hidden: m.hidden,
            activation: m.activation,
            use_char_ngrams: m.use_char_ngrams,
            share_query_embeddings: m.share_query_embeddings,
            train_embeddings: m.train_embeddings,
            normalize_dense: false,
            learning_rate: 0.1,
            batch_size: 100,
            epochs,
            lambda: 1.0,
            seed: 7,
            train: None,
            test: None,
            embeddings: None,
            checkpoint: None,
            output_dir: None,
            propensity: None,
        }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            kind: self.model,
            mode: self.mode,
            list_size: self.list_size,
            vocab_size: self.vocab_size,
            embedding_dim: self.embedding_dim,
            dense_dim: self.dense_dim,
            hidden: self.hidden.clone(),
            activation: self.activation,
            use_char_ngrams: self.use_char_ngrams,
            share_query_embeddings: self.share_query_embeddings,
            train_embeddings: self.train_embeddings,
        }
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "model" => self.model = v.parse()?,
            "mode" => self.mode = v.parse()?,
            "list_size" => self.list_size = parse_value(key, v)?,
            "vocab_size" => self.vocab_size = parse_value(key, v)?,
            "embedding_dim" => self.embedding_dim = parse_value(key, v)?,
            "dense_dim" => self.dense_dim = parse_value(key, v)?,
            "hidden" => self.hidden = parse_list(key, v)?,
            "activation" => self.activation = v.parse()?,
            "use_char_ngrams" => self.use_char_ngrams = parse_value(key, v)?,
            "share_query_embeddings" => self.share_query_embeddings = parse_value(key, v)?,
            "train_embeddings" => self.train_embeddings = parse_value(key, v)?,
            "normalize_dense" => self.normalize_dense = parse_value(key, v)?,
            "learning_rate" => self.learning_rate = parse_value(key, v)?,
            "batch_size" => self.batch_size = parse_value(key, v)?,
            "epochs" => self.epochs = parse_value(key, v)?,
            "lambda" => self.lambda = parse_value(key, v)?,
            "seed" => self.seed = parse_value(key, v)?,
            "train" => self.train = opt_path(v),
            "test" => self.test = opt_path(v),
            "embeddings" => self.embeddings = opt_path(v),
            "checkpoint" => self.checkpoint = opt_path(v),
            "output_dir" => self.output_dir = opt_path(v),
            "propensity" => {
                let w: Vec<f64> = parse_list(key, v)?;
                self.propensity = (!w.is_empty()).then_some(w);
            }
            other => return Err(Error::config(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Result<String> {
        Ok(match key {
            "model" => self.model.to_string(),
            "mode" => self.mode.to_string(),
            "list_size" => self.list_size.to_string(),
            "vocab_size" => self.vocab_size.to_string(),
            "embedding_dim" => self.embedding_dim.to_string(),
            "dense_dim" => self.dense_dim.to_string(),
            "hidden" => join(&self.hidden),
            "activation" => self.activation.to_string(),
            "use_char_ngrams" => self.use_char_ngrams.to_string(),
            "share_query_embeddings" => self.share_query_embeddings.to_string(),
            "train_embeddings" => self.train_embeddings.to_string(),
            "normalize_dense" => self.normalize_dense.to_string(),
            "learning_rate" => self.learning_rate.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "epochs" => self.epochs.to_string(),
            "lambda" => self.lambda.to_string(),
            "seed" => self.seed.to_string(),
            "train" => show_path(&self.train),
            "test" => show_path(&self.test),
            "embeddings" => show_path(&self.embeddings),
            "checkpoint" => show_path(&self.checkpoint),
            "output_dir" => show_path(&self.output_dir),
            "propensity" => self.propensity.as_deref().map(join).unwrap_or_default(),
            other => return Err(Error::config(format!("unknown configuration key {other:?}"))),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.model_config().validate()?;
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::config("learning_rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be positive"));
        }
        if !(self.lambda.is_finite() && self.lambda >= 0.0) {
            return Err(Error::config("lambda must be finite and ≥ 0"));
        }
        if let Some(w) = &self.propensity {
            if w.len() != self.list_size {
                return Err(Error::config(format!(
                    "propensity table has {} entries for lists of {}",
                    w.len(),
                    self.list_size
                )));
            }
            if w.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
                return Err(Error::config("propensity weights must be positive"));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in Self::KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("known key"));
        }
        out
    }

    /// Parses a config file on top of the defaults. `path` only labels errors.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            let key = key.trim();
            if !seen.insert(key.to_string()) {
                return Err(err(format!("duplicate key {key:?}")));
            }
            cfg.set(key, value).map_err(|e| err(e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }
}
