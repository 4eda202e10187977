#![allow(dead_code)]

use std::path::Path;

use sepattn::commands::{generate, GenerateOptions, GenerateOutput, ListOptions};
use sepattn::config::RunConfig;
use sepattn::model::ModelKind;
use sepattn::synth::{LabelRule, SynthConfig};

pub fn tiny_synth() -> SynthConfig {
    SynthConfig {
        embedding_dim: 8,
        vocab_size: 20,
        dense_dim: 6,
        num_train: 300,
        num_test: 200,
        ..SynthConfig::default()
    }
}

pub fn tiny_data(dir: &Path, rule: LabelRule, lists: Option<ListOptions>) -> GenerateOutput {
    generate(&GenerateOptions {
        synth: tiny_synth(),
        rule,
        out_dir: dir.to_path_buf(),
        lists,
    })
    .unwrap()
}

/// Classification run matching [`tiny_data`] without lists.
pub fn tiny_config(kind: ModelKind, data: &GenerateOutput, out_dir: &Path) -> RunConfig {
    let s = tiny_synth();
    let mut cfg = RunConfig::synthetic(kind);
    cfg.vocab_size = s.vocab_size + 1;
    cfg.embedding_dim = s.embedding_dim;
    cfg.dense_dim = s.dense_dim;
    cfg.hidden = vec![8];
    cfg.epochs = 3;
    cfg.batch_size = 32;
    cfg.train = Some(data.train_path.clone());
    cfg.test = Some(data.test_path.clone());
    cfg.embeddings = Some(data.sidecar_path.clone());
    cfg.output_dir = Some(out_dir.to_path_buf());
    cfg
}

pub fn read(path: impl AsRef<Path>) -> String {
    std::fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}
