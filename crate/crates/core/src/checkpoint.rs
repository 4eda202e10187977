//! Versioned text checkpoints.
//!
//! ```text
//! sepattn-checkpoint 1
//! model {"kind":"sepattn",...}
//! epoch 3
//! optimizer <lr bits> <eps bits> <steps>      (or `optimizer none`)
//! normalization none                          (or `normalization <dim>`, then mean and stddev lines)
//! tensor <name> <d0>x<d1> <frozen 0|1>
//! <values>
//! accumulator <name>
//! <values>
//! end
//! ```
//!
//! Every real number is stored as the 16-digit hex of its IEEE-754 bits, so
//! save followed by load is bit-exact.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::DenseStats;
use crate::model::{Model, ModelConfig};
use crate::nn::{Adagrad, Tensor};

pub const CHECKPOINT_MAGIC: &str = "sepattn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub value: Tensor,
    pub frozen: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerSnapshot {
    pub learning_rate: f64,
    pub epsilon: f64,
    pub steps: usize,
    /// In parameter order.
    pub accumulators: Vec<Tensor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    /// Completed training epochs.
    pub epoch: usize,
    pub params: Vec<NamedTensor>,
    pub optimizer: Option<OptimizerSnapshot>,
    pub normalization: Option<DenseStats>,
}

fn hex_line(values: &[f64]) -> String {
    let mut s = String::with_capacity(values.len() * 17);
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{:016x}", v.to_bits());
    }
    s
}

fn parse_hex(word: &str) -> std::result::Result<f64, String> {
    u64::from_str_radix(word, 16)
        .map(f64::from_bits)
        .map_err(|_| format!("bad hex value {word:?}"))
}

fn parse_hex_line(line: &str) -> std::result::Result<Vec<f64>, String> {
    line.split_ascii_whitespace().map(parse_hex).collect()
}

fn parse_shape(s: &str) -> std::result::Result<Vec<usize>, String> {
    s.split('x')
        .map(|d| d.parse().map_err(|_| format!("bad shape {s:?}")))
        .collect()
}

impl Checkpoint {
    pub fn capture(
        model: &Model,
        optimizer: Option<&Adagrad>,
        epoch: usize,
        normalization: Option<&DenseStats>,
    ) -> Self {
        let params = model
            .store()
            .iter()
            .map(|(_, p)| NamedTensor {
                name: p.name.clone(),
                value: p.value.clone(),
                frozen: p.frozen,
            })
            .collect();
        Checkpoint {
            model: model.config().clone(),
            epoch,
            params,
            optimizer: optimizer.map(|o| OptimizerSnapshot {
                learning_rate: o.learning_rate,
                epsilon: o.epsilon,
                steps: o.steps(),
                accumulators: o.accumulators().to_vec(),
            }),
            normalization: normalization.cloned(),
        }
    }

    /// Rebuilds the model, plus the optimizer when one was saved.
    pub fn restore(&self) -> Result<(Model, Option<Adagrad>)> {
        let mut model = Model::new(self.model.clone(), 0)?;
        if model.store().len() != self.params.len() {
            return Err(Error::config(format!(
                "checkpoint has {} tensors, model has {}",
                self.params.len(),
                model.store().len()
            )));
        }
        for t in &self.params {
            let id = model
                .store()
                .id_of(&t.name)
                .ok_or_else(|| Error::config(format!("checkpoint tensor {} not in model", t.name)))?;
            model.store_mut().assign(id, t.value.clone())?;
            model.store_mut().set_frozen(id, t.frozen);
        }
        let optimizer = match &self.optimizer {
            Some(o) => Some(Adagrad::from_state(
                model.store(),
                o.learning_rate,
                o.epsilon,
                o.accumulators.clone(),
                o.steps,
            )?),
            None => None,
        };
        Ok((model, optimizer))
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}");
        let model = serde_json::to_string(&self.model).expect("model config serializes");
        let _ = writeln!(out, "model {model}");
        let _ = writeln!(out, "epoch {}", self.epoch);
        match &self.optimizer {
            Some(o) => {
                let _ = writeln!(
                    out,
                    "optimizer {:016x} {:016x} {}",
                    o.learning_rate.to_bits(),
                    o.epsilon.to_bits(),
                    o.steps
                );
            }
            None => out.push_str("optimizer none\n"),
        }
        match &self.normalization {
            Some(s) => {
                let _ = writeln!(out, "normalization {}", s.mean.len());
                let _ = writeln!(out, "{}", hex_line(&s.mean));
                let _ = writeln!(out, "{}", hex_line(&s.stddev));
            }
            None => out.push_str("normalization none\n"),
        }
        for t in &self.params {
            let shape: Vec<String> = t.value.shape().iter().map(usize::to_string).collect();
            let _ = writeln!(out, "tensor {} {} {}", t.name, shape.join("x"), u8::from(t.frozen));
            let _ = writeln!(out, "{}", hex_line(t.value.data()));
        }
        if let Some(o) = &self.optimizer {
            for (t, acc) in self.params.iter().zip(&o.accumulators) {
                let _ = writeln!(out, "accumulator {}", t.name);
                let _ = writeln!(out, "{}", hex_line(acc.data()));
            }
        }
        out.push_str("end\n");
        out
    }

    /// `path` only labels errors.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut last = 0;
        let err = |line: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let mut next = |what: &str| -> Result<(usize, &str)> {
            let (n, l) = lines
                .next()
                .ok_or_else(|| err(last + 1, format!("unexpected end of file, expected {what}")))?;
            last = n;
            Ok((n, l))
        };

        let (n, l) = next("header")?;
        let expected = format!("{CHECKPOINT_MAGIC} {CHECKPOINT_VERSION}");
        if l != expected {
            return Err(err(n, format!("expected {expected:?}, got {l:?}")));
        }
        let (n, l) = next("model")?;
        let model: ModelConfig = l
            .strip_prefix("model ")
            .ok_or_else(|| err(n, "expected model line".into()))
            .and_then(|j| serde_json::from_str(j).map_err(|e| err(n, e.to_string())))?;
        let (n, l) = next("epoch")?;
        let epoch = l
            .strip_prefix("epoch ")
            .and_then(|e| e.parse().ok())
            .ok_or_else(|| err(n, "expected epoch line".into()))?;

        let (n, l) = next("optimizer")?;
        let words: Vec<&str> = l.split_ascii_whitespace().collect();
        let optimizer_header = match words.as_slice() {
            ["optimizer", "none"] => None,
            ["optimizer", lr, eps, steps] => Some((
                parse_hex(lr).map_err(|m| err(n, m))?,
                parse_hex(eps).map_err(|m| err(n, m))?,
                steps.parse::<usize>().map_err(|_| err(n, "bad step count".into()))?,
            )),
            _ => return Err(err(n, "expected optimizer line".into())),
        };

        let (n, l) = next("normalization")?;
        let normalization = match l.strip_prefix("normalization ") {
            Some("none") => None,
            Some(dim) => {
                let dim: usize = dim.parse().map_err(|_| err(n, "bad normalization size".into()))?;
                let (n1, mean) = next("normalization mean")?;
                let mean = parse_hex_line(mean).map_err(|m| err(n1, m))?;
                let (n2, sd) = next("normalization stddev")?;
                let stddev = parse_hex_line(sd).map_err(|m| err(n2, m))?;
                if mean.len() != dim || stddev.len() != dim {
                    return Err(err(n2, "normalization length mismatch".into()));
                }
                Some(DenseStats { mean, stddev })
            }
            None => return Err(err(n, "expected normalization line".into())),
        };

        let mut params = Vec::new();
        let mut accumulators = Vec::new();
        loop {
            let (n, l) = next("tensor, accumulator or end")?;
            let words: Vec<&str> = l.split_ascii_whitespace().collect();
            match words.as_slice() {
                ["end"] => break,
                ["tensor", name, shape, frozen] => {
                    let shape = parse_shape(shape).map_err(|m| err(n, m))?;
                    let (vn, vl) = next("tensor values")?;
                    let values = parse_hex_line(vl).map_err(|m| err(vn, m))?;
                    let value = Tensor::from_vec(&shape, values).map_err(|e| err(vn, e.to_string()))?;
                    params.push(NamedTensor {
                        name: name.to_string(),
                        value,
                        frozen: *frozen == "1",
                    });
                }
                ["accumulator", name] => {
                    let idx = accumulators.len();
                    let owner = params
                        .get(idx)
                        .filter(|p| p.name == *name)
                        .ok_or_else(|| err(n, format!("accumulator {name} out of order")))?;
                    let shape = owner.value.shape().to_vec();
                    let (vn, vl) = next("accumulator values")?;
                    let values = parse_hex_line(vl).map_err(|m| err(vn, m))?;
                    accumulators.push(Tensor::from_vec(&shape, values).map_err(|e| err(vn, e.to_string()))?);
                }
                _ => return Err(err(n, format!("unexpected line {l:?}"))),
            }
        }
        let optimizer = match optimizer_header {
            Some((learning_rate, epsilon, steps)) => {
                if accumulators.len() != params.len() {
                    return Err(err(last, "optimizer state does not cover every tensor".into()));
                }
                Some(OptimizerSnapshot {
                    learning_rate,
                    epsilon,
                    steps,
                    accumulators,
                })
            }
            None => None,
        };
        Ok(Checkpoint {
            model,
            epoch,
            params,
            optimizer,
            normalization,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}
