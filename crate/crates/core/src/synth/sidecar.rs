use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::generate::{LabelRule, SynthConfig, SynthEmbeddingTable};
use crate::error::{Error, Result};
use crate::nn::Tensor;

const SIDECAR_FORMAT: &str = "sepattn-synth-sidecar";

/// What is needed to re-derive labels of a generated dataset: the rule,
/// the embedding table and the trigger set.
#[derive(Clone, Debug, PartialEq)]
pub struct Sidecar {
    pub rule: LabelRule,
    pub config: SynthConfig,
    pub table: SynthEmbeddingTable,
}

#[derive(Serialize, Deserialize)]
struct SidecarFile {
    format: String,
    version: u32,
    rule: LabelRule,
    config: SynthConfig,
    tokens: Vec<String>,
    trigger_ids: Vec<u32>,
    /// Rows for ids 1..=vocab_size.
    embeddings: Vec<Vec<f64>>,
}

pub fn write_sidecar(path: impl AsRef<Path>, sidecar: &Sidecar) -> Result<()> {
    let path = path.as_ref();
    let t = &sidecar.table;
    let file = SidecarFile {
        format: SIDECAR_FORMAT.into(),
        version: 1,
        rule: sidecar.rule,
        config: sidecar.config.clone(),
        tokens: t.tokens.clone(),
        trigger_ids: t.trigger_ids.iter().copied().collect(),
        embeddings: (1..=t.vocab_size()).map(|i| t.vectors.row(i).to_vec()).collect(),
    };
    let text = serde_json::to_string(&file).map_err(|e| Error::data(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn load_sidecar(path: impl AsRef<Path>) -> Result<Sidecar> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: SidecarFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })?;
    if file.format != SIDECAR_FORMAT {
        return Err(Error::data(format!("{}: not a synthetic sidecar", path.display())));
    }
    let dim = file.config.embedding_dim;
    let mut data = vec![0.0; dim];
    for row in &file.embeddings {
        if row.len() != dim {
            return Err(Error::data("embedding row width differs from embedding_dim"));
        }
        data.extend_from_slice(row);
    }
    let rows = file.embeddings.len() + 1;
    Ok(Sidecar {
        rule: file.rule,
        config: file.config,
        table: SynthEmbeddingTable {
            tokens: file.tokens,
            vectors: Tensor::matrix(rows, dim, data)?,
            trigger_ids: file.trigger_ids.into_iter().collect(),
        },
    })
}
